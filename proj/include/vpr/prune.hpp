#pragma once

#include <cstdint>
#include <vector>

#include "vpr/model.hpp"

namespace vpr {

// Linear schedule: cumulative backbone target s_b*t/R and aggregation target
// gamma*t/R for rounds t = 1..R. gamma = 0 never prunes the descriptor path.
struct PruneSchedule {
    int rounds = 25;
    double backbone_final = 0.9;
    double gamma = 0.0;
};

struct RoundTargets {
    double backbone = 0.0;
    double aggregation = 0.0;
};

RoundTargets schedule_round(const PruneSchedule& schedule, int round);

enum class Axis { Out, In, Bias, HeadInput };

struct GroupMember {
    int layer = 0;  // backbone block index; -1 for the head
    Axis axis = Axis::Out;
};

// Channels that must share one removal index set: a block's output filters,
// its bias entries, every consumer's input channels, and — for the final
// feature space — the head's input axis. Residual blocks merge their input
// and output spaces into a single group.
struct DependencyGroup {
    std::vector<GroupMember> members;
    bool output_group = false;  // feeds the aggregation head
    int current_channels = 0;
    int original_channels = 0;
};

std::vector<DependencyGroup> build_dependency_groups(const Model& model);

// score_j = sum |W[j,:,:,:]| over a 4-axis conv weight.
std::vector<double> l1_filter_importance(const Tensor& weight);
// Row-wise l1 scores of a 2-d weight.
std::vector<double> l1_row_importance(const Tensor& weight);

struct PruneRoundResult {
    std::vector<std::vector<int>> removed_per_group;
    std::vector<int> channel_counts;  // per backbone block, after surgery
    int descriptor_dim = 0;
};

// Applies one round of dependency-aware surgery toward cumulative sparsity
// targets (measured against the dense model). Keep counts are
// max(1, round((1-target)*original)); already-met targets are no-ops.
// The final feature space is pruned at the aggregation rate for GeM/ConvAP,
// at the backbone rate for MixVPR (whose descriptor is owned by W_d), and is
// left untouched for NetVLAD (whose descriptor is K*D and is pruned on K).
PruneRoundResult prune_round(Model& model, double backbone_target, double aggregation_target,
                             uint64_t seed);

// Deletes W_d input columns at the removed backbone indices, then the
// lowest-l1 W_d output channels down to max(1, round((1-r_o)*original)).
// W_1, W_2 and W_r are never touched.
void prune_mixvpr_head(MixVprHead& head, const std::vector<int>& removed_inputs, double r_o);

// K-means over the rows of C with K' = max(1, round((1-r_o)*original))
// centers; the assignment projection is re-derived from the new centers.
// A no-op when K' equals the current cluster count.
void prune_netvlad_head(NetVladHead& head, double r_o, uint64_t seed);

}  // namespace vpr
