#include "vpr/model.hpp"

#include <cmath>
#include <stdexcept>

namespace vpr {

const char* arch_name(ArchKind arch) {
    switch (arch) {
        case ArchKind::Gem: return "gem";
        case ArchKind::ConvAp: return "convap";
        case ArchKind::MixVpr: return "mixvpr";
        case ArchKind::NetVlad: return "netvlad";
    }
    return "unknown";
}

ArchKind arch_from_name(const std::string& name) {
    if (name == "gem") return ArchKind::Gem;
    if (name == "convap") return ArchKind::ConvAp;
    if (name == "mixvpr") return ArchKind::MixVpr;
    if (name == "netvlad") return ArchKind::NetVlad;
    throw std::invalid_argument("unknown architecture '" + name + "'");
}

FeatureShape Model::feature_shape() const {
    FeatureShape s = backbone_output_shape(backbone.spec);
    s.channels = backbone.out_channels();  // spec holds dense counts; tensors are current
    return s;
}

int Model::descriptor_dim() const {
    const FeatureShape s = feature_shape();
    if (const auto* g = std::get_if<GemHead>(&head)) {
        (void)g;
        return s.channels;
    }
    if (const auto* c = std::get_if<ConvApHead>(&head)) {
        return s.channels * (s.h / c->block) * (s.w / c->block);
    }
    if (const auto* m = std::get_if<MixVprHead>(&head)) {
        return m->wd.dim(0) * m->wr.dim(0);
    }
    const auto& v = std::get<NetVladHead>(head);
    return v.clusters() * v.feature_dim();
}

Tensor Model::forward(Tape* tape, const Tensor& image) const {
    Tensor features = backbone.forward(tape, image);
    Tensor descriptor;
    if (const auto* g = std::get_if<GemHead>(&head)) {
        descriptor = gem_pool(tape, features, g->p);
    } else if (const auto* c = std::get_if<ConvApHead>(&head)) {
        descriptor = conv_ap_pool(tape, features, c->block);
    } else if (const auto* m = std::get_if<MixVprHead>(&head)) {
        descriptor = mixvpr_forward(tape, features, *m);
    } else {
        descriptor = netvlad_forward(tape, features, std::get<NetVladHead>(head));
    }
    return l2_normalize(tape, descriptor);
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (size_t i = 0; i < backbone.weights.size(); ++i) {
        out.emplace_back("backbone." + std::to_string(i) + ".weight", backbone.weights[i]);
        out.emplace_back("backbone." + std::to_string(i) + ".bias", backbone.biases[i]);
    }
    if (const auto* g = std::get_if<GemHead>(&head)) {
        out.emplace_back("head.p", g->p);
    } else if (const auto* m = std::get_if<MixVprHead>(&head)) {
        for (size_t n = 0; n < m->w1.size(); ++n) {
            out.emplace_back("head.w1." + std::to_string(n), m->w1[n]);
            out.emplace_back("head.w2." + std::to_string(n), m->w2[n]);
        }
        out.emplace_back("head.wd", m->wd);
        out.emplace_back("head.wr", m->wr);
    } else if (const auto* v = std::get_if<NetVladHead>(&head)) {
        out.emplace_back("head.centers", v->centers);
        out.emplace_back("head.assign_w", v->assign_w);
        out.emplace_back("head.assign_b", v->assign_b);
    }
    return out;
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) {
        (void)name;
        out.push_back(t);
    }
    return out;
}

int64_t Model::parameter_count() const {
    int64_t n = 0;
    for (const auto& t : parameters()) n += t.size();
    return n;
}

void Model::zero_grad() const {
    for (auto& t : parameters()) {
        Tensor copy = t;
        copy.zero_grad();
    }
}

Model build_model(ArchKind arch, const BackboneSpec& spec, const HeadOptions& options, Rng& rng) {
    Model model;
    model.arch = arch;
    model.head_options = options;
    model.backbone = build_backbone(spec, rng);
    for (const auto& b : spec.blocks) model.original_out_channels.push_back(b.out_channels);

    const FeatureShape fs = backbone_output_shape(spec);
    const int hw = fs.h * fs.w;
    switch (arch) {
        case ArchKind::Gem: {
            GemHead g;
            if (options.gem_p_init < 1.0) throw std::invalid_argument("gem: p must start >= 1");
            g.p = Tensor::scalar(static_cast<float>(options.gem_p_init));
            g.p.set_requires_grad(true);
            model.head = g;
            break;
        }
        case ArchKind::ConvAp: {
            ConvApHead c;
            c.block = options.convap_block;
            if (c.block < 1 || fs.h % c.block != 0 || fs.w % c.block != 0) {
                throw std::invalid_argument("convap: block size must divide the feature map");
            }
            model.head = c;
            break;
        }
        case ArchKind::MixVpr: {
            MixVprHead m;
            m.hw = hw;
            const int depth = options.mixvpr_depth > 0 ? options.mixvpr_depth : fs.channels;
            m.d_depth_original = depth;
            const float mix_std = std::sqrt(2.0f / static_cast<float>(hw));
            for (int n = 0; n < options.mixvpr_blocks; ++n) {
                Tensor w1 = Tensor::randn(rng, {hw, hw}, mix_std);
                Tensor w2 = Tensor::randn(rng, {hw, hw}, mix_std);
                w1.set_requires_grad(true);
                w2.set_requires_grad(true);
                m.w1.push_back(w1);
                m.w2.push_back(w2);
            }
            m.wd = Tensor::randn(rng, {depth, fs.channels}, std::sqrt(2.0f / static_cast<float>(fs.channels)));
            m.wr = Tensor::randn(rng, {4, hw}, mix_std);
            m.wd.set_requires_grad(true);
            m.wr.set_requires_grad(true);
            model.head = m;
            break;
        }
        case ArchKind::NetVlad: {
            NetVladHead v;
            const int k = options.netvlad_clusters;
            if (k < 1) throw std::invalid_argument("netvlad: clusters must be >= 1");
            v.clusters_original = k;
            v.centers = Tensor::randn(rng, {k, fs.channels}, 1.0f / std::sqrt(static_cast<float>(fs.channels)));
            v.centers.set_requires_grad(true);
            netvlad_init_assignment(v);
            model.head = v;
            break;
        }
    }
    return model;
}

}  // namespace vpr
