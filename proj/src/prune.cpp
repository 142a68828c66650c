#include "vpr/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "vpr/kmeans.hpp"

namespace vpr {
namespace {

int find_root(std::vector<int>& parent, int i) {
    while (parent[i] != i) {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    return i;
}

int keep_count(double target, int original) {
    return std::max<int>(1, static_cast<int>(std::lround((1.0 - target) * original)));
}

std::vector<int> complement(const std::vector<int>& removed, int count) {
    std::vector<int> keep;
    keep.reserve(count - removed.size());
    size_t r = 0;
    for (int i = 0; i < count; ++i) {
        if (r < removed.size() && removed[r] == i) {
            ++r;
        } else {
            keep.push_back(i);
        }
    }
    return keep;
}

Tensor take_out_channels(const Tensor& w, const std::vector<int>& keep) {
    const int ci = w.dim(1), k = w.dim(2);
    const int64_t filter = static_cast<int64_t>(ci) * k * k;
    Tensor out = Tensor::zeros({static_cast<int>(keep.size()), ci, k, k});
    for (size_t i = 0; i < keep.size(); ++i) {
        std::copy_n(w.data() + keep[i] * filter, filter, out.data() + static_cast<int64_t>(i) * filter);
    }
    out.set_requires_grad(w.requires_grad());
    return out;
}

Tensor take_in_channels(const Tensor& w, const std::vector<int>& keep) {
    const int co = w.dim(0), ci = w.dim(1), k = w.dim(2);
    const int64_t kk = static_cast<int64_t>(k) * k;
    Tensor out = Tensor::zeros({co, static_cast<int>(keep.size()), k, k});
    for (int o = 0; o < co; ++o) {
        for (size_t i = 0; i < keep.size(); ++i) {
            std::copy_n(w.data() + (static_cast<int64_t>(o) * ci + keep[i]) * kk, kk,
                        out.data() + (static_cast<int64_t>(o) * keep.size() + i) * kk);
        }
    }
    out.set_requires_grad(w.requires_grad());
    return out;
}

Tensor take_entries(const Tensor& v, const std::vector<int>& keep) {
    Tensor out = Tensor::zeros({static_cast<int>(keep.size())});
    for (size_t i = 0; i < keep.size(); ++i) out.data()[i] = v.data()[keep[i]];
    out.set_requires_grad(v.requires_grad());
    return out;
}

Tensor take_rows2d(const Tensor& w, const std::vector<int>& keep) {
    const int n = w.dim(1);
    Tensor out = Tensor::zeros({static_cast<int>(keep.size()), n});
    for (size_t i = 0; i < keep.size(); ++i) {
        std::copy_n(w.data() + static_cast<int64_t>(keep[i]) * n, n, out.data() + static_cast<int64_t>(i) * n);
    }
    out.set_requires_grad(w.requires_grad());
    return out;
}

Tensor take_cols2d(const Tensor& w, const std::vector<int>& keep) {
    const int m = w.dim(0), n = w.dim(1);
    Tensor out = Tensor::zeros({m, static_cast<int>(keep.size())});
    for (int i = 0; i < m; ++i) {
        for (size_t j = 0; j < keep.size(); ++j) {
            out.data()[static_cast<int64_t>(i) * keep.size() + j] = w.data()[static_cast<int64_t>(i) * n + keep[j]];
        }
    }
    out.set_requires_grad(w.requires_grad());
    return out;
}

// Lowest scores first; equal scores break toward the lower index.
std::vector<int> lowest_indices(const std::vector<double>& scores, int count) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&scores](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });
    std::vector<int> removed(order.begin(), order.begin() + count);
    std::sort(removed.begin(), removed.end());
    return removed;
}

}  // namespace

RoundTargets schedule_round(const PruneSchedule& schedule, int round) {
    if (schedule.rounds < 1) throw std::invalid_argument("schedule: rounds must be >= 1");
    if (round < 1 || round > schedule.rounds) {
        throw std::invalid_argument("schedule: round " + std::to_string(round) + " outside 1.." +
                                    std::to_string(schedule.rounds));
    }
    const double frac = static_cast<double>(round) / schedule.rounds;
    return {schedule.backbone_final * frac, schedule.gamma * frac};
}

std::vector<DependencyGroup> build_dependency_groups(const Model& model) {
    const auto& spec = model.backbone.spec;
    const int layers = static_cast<int>(spec.blocks.size());

    // Union channel spaces: space b is block b's output; a residual block
    // merges its output space with its input space.
    std::vector<int> parent(layers);
    std::iota(parent.begin(), parent.end(), 0);
    std::vector<bool> pinned(layers, false);  // merged with the image channels
    for (int b = 0; b < layers; ++b) {
        if (spec.blocks[b].residual_group < 0) continue;
        if (b == 0) {
            pinned[find_root(parent, 0)] = true;
        } else {
            const int ra = find_root(parent, b);
            const int rb = find_root(parent, b - 1);
            if (ra != rb) {
                parent[ra] = rb;
                pinned[rb] = pinned[rb] || pinned[ra];
            }
        }
    }

    std::vector<DependencyGroup> groups;
    const int last_root = find_root(parent, layers - 1);
    for (int r = 0; r < layers; ++r) {
        if (find_root(parent, r) != r || pinned[r]) continue;
        DependencyGroup g;
        int sample_block = -1;
        for (int b = 0; b < layers; ++b) {
            if (find_root(parent, b) == r) {
                g.members.push_back({b, Axis::Out});
                g.members.push_back({b, Axis::Bias});
                sample_block = b;
            }
        }
        for (int b = 1; b < layers; ++b) {
            if (find_root(parent, b - 1) == r) g.members.push_back({b, Axis::In});
        }
        if (r == last_root) {
            g.output_group = true;
            g.members.push_back({-1, Axis::HeadInput});
        }
        g.current_channels = model.backbone.weights[sample_block].dim(0);
        g.original_channels = model.original_out_channels[sample_block];
        groups.push_back(std::move(g));
    }
    return groups;
}

std::vector<double> l1_filter_importance(const Tensor& weight) {
    if (weight.ndim() != 4) throw std::invalid_argument("l1_filter_importance: weight must be 4-axis");
    const int co = weight.dim(0);
    const int64_t filter = weight.size() / co;
    std::vector<double> scores(co, 0.0);
    for (int j = 0; j < co; ++j) {
        double acc = 0.0;
        const float* f = weight.data() + j * filter;
        for (int64_t i = 0; i < filter; ++i) acc += std::abs(static_cast<double>(f[i]));
        scores[j] = acc;
    }
    return scores;
}

std::vector<double> l1_row_importance(const Tensor& weight) {
    if (weight.ndim() != 2) throw std::invalid_argument("l1_row_importance: weight must be 2-axis");
    const int m = weight.dim(0), n = weight.dim(1);
    std::vector<double> scores(m, 0.0);
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += std::abs(static_cast<double>(weight.data()[static_cast<int64_t>(i) * n + j]));
        scores[i] = acc;
    }
    return scores;
}

void prune_mixvpr_head(MixVprHead& head, const std::vector<int>& removed_inputs, double r_o) {
    if (!removed_inputs.empty()) {
        std::vector<int> sorted_removed = removed_inputs;
        std::sort(sorted_removed.begin(), sorted_removed.end());
        head.wd = take_cols2d(head.wd, complement(sorted_removed, head.wd.dim(1)));
    }
    const int keep = keep_count(r_o, head.d_depth_original);
    const int current = head.wd.dim(0);
    if (keep < current) {
        const std::vector<int> removed = lowest_indices(l1_row_importance(head.wd), current - keep);
        head.wd = take_rows2d(head.wd, complement(removed, current));
    }
}

void prune_netvlad_head(NetVladHead& head, double r_o, uint64_t seed) {
    const int target_k = keep_count(r_o, head.clusters_original);
    const int current_k = head.clusters();
    if (target_k >= current_k) return;

    const int d = head.feature_dim();
    std::vector<double> points(static_cast<size_t>(current_k) * d);
    for (size_t i = 0; i < points.size(); ++i) points[i] = head.centers.data()[i];
    KMeansResult km = kmeans(points, current_k, d, target_k, seed);

    Tensor centers = Tensor::zeros({target_k, d});
    for (int64_t i = 0; i < centers.size(); ++i) centers.data()[i] = static_cast<float>(km.centers[i]);
    centers.set_requires_grad(true);
    head.centers = centers;
    netvlad_init_assignment(head);
}

PruneRoundResult prune_round(Model& model, double backbone_target, double aggregation_target,
                             uint64_t seed) {
    if (backbone_target < 0.0 || backbone_target >= 1.0 || aggregation_target < 0.0 ||
        aggregation_target >= 1.0) {
        throw std::invalid_argument("prune_round: targets must lie in [0,1)");
    }

    PruneRoundResult result;
    std::vector<int> removed_output;
    auto groups = build_dependency_groups(model);
    for (const auto& g : groups) {
        double target = backbone_target;
        if (g.output_group) {
            switch (model.arch) {
                case ArchKind::Gem:
                case ArchKind::ConvAp:
                    target = aggregation_target;  // descriptor dim is c_o^L
                    break;
                case ArchKind::MixVpr:
                    target = backbone_target;  // descriptor dim is owned by W_d
                    break;
                case ArchKind::NetVlad:
                    target = 0.0;  // D feeds both C and the descriptor; clusters are pruned instead
                    break;
            }
        }
        const int keep = keep_count(target, g.original_channels);
        const int remove = g.current_channels - keep;
        std::vector<int> removed;
        if (remove > 0) {
            std::vector<double> scores(g.current_channels, 0.0);
            for (const auto& m : g.members) {
                if (m.axis != Axis::Out) continue;
                const auto layer_scores = l1_filter_importance(model.backbone.weights[m.layer]);
                for (int j = 0; j < g.current_channels; ++j) scores[j] += layer_scores[j];
            }
            removed = lowest_indices(scores, remove);
            const std::vector<int> keep_idx = complement(removed, g.current_channels);
            for (const auto& m : g.members) {
                switch (m.axis) {
                    case Axis::Out:
                        model.backbone.weights[m.layer] = take_out_channels(model.backbone.weights[m.layer], keep_idx);
                        break;
                    case Axis::Bias:
                        model.backbone.biases[m.layer] = take_entries(model.backbone.biases[m.layer], keep_idx);
                        break;
                    case Axis::In:
                        model.backbone.weights[m.layer] = take_in_channels(model.backbone.weights[m.layer], keep_idx);
                        break;
                    case Axis::HeadInput:
                        break;  // handled by the per-architecture head coupling below
                }
            }
        }
        if (g.output_group) removed_output = removed;
        result.removed_per_group.push_back(std::move(removed));
    }

    if (auto* m = std::get_if<MixVprHead>(&model.head)) {
        prune_mixvpr_head(*m, removed_output, aggregation_target);
    } else if (auto* v = std::get_if<NetVladHead>(&model.head)) {
        prune_netvlad_head(*v, aggregation_target, seed);
    }

    for (const auto& w : model.backbone.weights) result.channel_counts.push_back(w.dim(0));
    result.descriptor_dim = model.descriptor_dim();

    // Shape consistency: a probe forward must succeed and match the contract.
    Rng rng = make_rng(seed, stream::kProbe);
    Tensor probe = Tensor::uniform(rng, {model.backbone.spec.in_channels, model.backbone.spec.in_h,
                                         model.backbone.spec.in_w}, 0.0f, 1.0f);
    Tensor descriptor = model.forward(nullptr, probe);
    if (descriptor.size() != result.descriptor_dim) {
        throw std::runtime_error("prune_round: probe descriptor size " + std::to_string(descriptor.size()) +
                                 " != contract " + std::to_string(result.descriptor_dim));
    }
    return result;
}

}  // namespace vpr
