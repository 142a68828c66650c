#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vpr/layers.hpp"

namespace vpr {

enum class ArchKind { Gem, ConvAp, MixVpr, NetVlad };

const char* arch_name(ArchKind arch);
ArchKind arch_from_name(const std::string& name);

struct HeadOptions {
    double gem_p_init = 3.0;
    int convap_block = 2;
    int mixvpr_blocks = 2;
    int mixvpr_depth = 0;  // 0: match the final backbone channel count
    int netvlad_clusters = 16;
};

// A backbone plus one aggregation head. Forward produces an l2-normalized
// global descriptor for a single image.
struct Model {
    ArchKind arch = ArchKind::Gem;
    Backbone backbone;
    std::variant<GemHead, ConvApHead, MixVprHead, NetVladHead> head;
    HeadOptions head_options;

    // Dense channel counts at build time; cumulative prune targets are
    // measured against these, never against the current (already pruned) ones.
    std::vector<int> original_out_channels;

    FeatureShape feature_shape() const;
    int descriptor_dim() const;
    Tensor forward(Tape* tape, const Tensor& image) const;

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;
    int64_t parameter_count() const;
    void zero_grad() const;
};

Model build_model(ArchKind arch, const BackboneSpec& spec, const HeadOptions& options, Rng& rng);

}  // namespace vpr
