#include "vpr/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace vpr {

FeatureShape backbone_output_shape(const BackboneSpec& spec) {
    if (spec.blocks.empty()) throw std::invalid_argument("backbone: no blocks");
    if (spec.in_channels < 1 || spec.in_h < 1 || spec.in_w < 1) {
        throw std::invalid_argument("backbone: invalid input shape");
    }
    std::unordered_map<int, int> group_channels;
    int c = spec.in_channels, h = spec.in_h, w = spec.in_w;
    for (size_t i = 0; i < spec.blocks.size(); ++i) {
        const auto& b = spec.blocks[i];
        if (b.out_channels < 1 || b.kernel < 1 || b.stride < 1 || b.pad < 0) {
            throw std::invalid_argument("backbone: invalid block " + std::to_string(i));
        }
        const int oh = (h + 2 * b.pad - b.kernel) / b.stride + 1;
        const int ow = (w + 2 * b.pad - b.kernel) / b.stride + 1;
        if (oh < 1 || ow < 1) {
            throw std::invalid_argument("backbone: block " + std::to_string(i) + " collapses the map");
        }
        if (b.residual_group >= 0) {
            if (b.out_channels != c || oh != h || ow != w) {
                throw std::invalid_argument("backbone: residual block " + std::to_string(i) +
                                            " must preserve shape (" + std::to_string(c) + "," +
                                            std::to_string(h) + "," + std::to_string(w) + ")");
            }
            auto it = group_channels.find(b.residual_group);
            if (it != group_channels.end() && it->second != b.out_channels) {
                throw std::invalid_argument("backbone: residual group " + std::to_string(b.residual_group) +
                                            " mixes channel counts");
            }
            group_channels[b.residual_group] = b.out_channels;
        }
        c = b.out_channels;
        h = oh;
        w = ow;
    }
    return {c, h, w};
}

Backbone build_backbone(const BackboneSpec& spec, Rng& rng) {
    backbone_output_shape(spec);  // validate
    Backbone bb;
    bb.spec = spec;
    int c_in = spec.in_channels;
    for (const auto& b : spec.blocks) {
        const float stddev = std::sqrt(2.0f / (static_cast<float>(c_in) * b.kernel * b.kernel));
        Tensor w = Tensor::randn(rng, {b.out_channels, c_in, b.kernel, b.kernel}, stddev);
        w.set_requires_grad(true);
        Tensor bias = Tensor::zeros({b.out_channels});
        bias.set_requires_grad(true);
        bb.weights.push_back(w);
        bb.biases.push_back(bias);
        c_in = b.out_channels;
    }
    return bb;
}

Tensor Backbone::forward(Tape* tape, const Tensor& image) const {
    if (image.ndim() != 3 || image.dim(0) != weights.front().dim(1)) {
        throw std::invalid_argument("backbone: image shape does not match spec");
    }
    Tensor x = image;
    for (size_t i = 0; i < weights.size(); ++i) {
        const auto& b = spec.blocks[i];
        Tensor pre = conv2d(tape, x, weights[i], biases[i], b.stride, b.pad);
        if (b.residual_group >= 0) pre = add(tape, pre, x);
        x = relu(tape, pre);
    }
    return x;
}

Tensor gem_pool(Tape* tape, const Tensor& x, const Tensor& p) {
    if (x.ndim() != 3) throw std::invalid_argument("gem_pool: input must be [c,H,W]");
    const double pv = p.item();
    for (int64_t i = 0; i < x.size(); ++i) {
        if (x.data()[i] < 0.0f && !(pv == std::floor(pv))) {
            throw std::domain_error("gem_pool: negative activation with non-integer p");
        }
    }
    const int c = x.dim(0);
    const int hw = x.dim(1) * x.dim(2);
    Tensor flat = reshape(tape, x, {c, hw});
    // Lift exact zeros so x^p and its log-derivative stay finite.
    Tensor safe = clamp_min(tape, flat, 1e-6);
    Tensor powered = power(tape, safe, p);
    Tensor pooled = mean_rows(tape, powered);
    Tensor inv_p = reciprocal(tape, p);
    return power(tape, pooled, inv_p);
}

Tensor conv_ap_pool(Tape* tape, const Tensor& x, int block) {
    Tensor pooled = avgpool2d(tape, x, block);
    return flatten(tape, pooled);
}

Tensor mixvpr_forward(Tape* tape, const Tensor& x, const MixVprHead& head) {
    if (x.ndim() != 3) throw std::invalid_argument("mixvpr: input must be [c,h,w]");
    const int c = x.dim(0);
    const int hw = x.dim(1) * x.dim(2);
    if (hw != head.hw) {
        throw std::invalid_argument("mixvpr: flattened spatial size " + std::to_string(hw) +
                                    " != head size " + std::to_string(head.hw) +
                                    " (spatial dimensions must not be pruned)");
    }
    if (head.wd.dim(1) != c) {
        throw std::invalid_argument("mixvpr: depth projection expects " + std::to_string(head.wd.dim(1)) +
                                    " channels, got " + std::to_string(c));
    }
    Tensor f = reshape(tape, x, {c, hw});
    for (size_t n = 0; n < head.w1.size(); ++n) {
        // Row-wise MLP: each feature vector v (a row of F) maps to W2*relu(W1*v) + v.
        Tensor hidden = relu(tape, matmul(tape, f, transpose2d(tape, head.w1[n])));
        Tensor mixed = matmul(tape, hidden, transpose2d(tape, head.w2[n]));
        f = add(tape, mixed, f);
    }
    Tensor fd = matmul(tape, head.wd, f);                              // [d_depth, hw]
    Tensor y = matmul(tape, head.wr, transpose2d(tape, fd));           // [4, d_depth]
    return flatten(tape, y);
}

Tensor netvlad_forward(Tape* tape, const Tensor& x, const NetVladHead& head) {
    if (x.ndim() != 3) throw std::invalid_argument("netvlad: input must be [D,h,w]");
    const int d = x.dim(0);
    const int hw = x.dim(1) * x.dim(2);
    if (head.centers.dim(1) != d) {
        throw std::invalid_argument("netvlad: centers expect " + std::to_string(head.centers.dim(1)) +
                                    " feature dims, got " + std::to_string(d));
    }
    Tensor x2 = reshape(tape, x, {d, hw});
    Tensor logits = add_row_bias(tape, matmul(tape, head.assign_w, x2), head.assign_b);  // [K, hw]
    Tensor assign = softmax_cols(tape, logits);
    Tensor features = transpose2d(tape, x2);  // rows are the hw feature vectors T_i
    // V_z = sum_i a_{i,z} (T_i - C_z) = (A T)_z - (sum_i a_{i,z}) C_z
    Tensor weighted = matmul(tape, assign, features);             // [K, D]
    Tensor mass = sum_rows(tape, assign);                         // [K]
    Tensor vlad = sub(tape, weighted, scale_rows(tape, head.centers, mass));
    Tensor intra = l2_normalize_rows(tape, vlad);
    return l2_normalize(tape, flatten(tape, intra));
}

void netvlad_init_assignment(NetVladHead& head, double alpha) {
    const int k = head.centers.dim(0);
    const int d = head.centers.dim(1);
    Tensor w = Tensor::zeros({k, d});
    Tensor b = Tensor::zeros({k});
    for (int z = 0; z < k; ++z) {
        double norm_sq = 0.0;
        for (int j = 0; j < d; ++j) {
            const double cv = head.centers.data()[static_cast<int64_t>(z) * d + j];
            w.data()[static_cast<int64_t>(z) * d + j] = static_cast<float>(2.0 * alpha * cv);
            norm_sq += cv * cv;
        }
        b.data()[z] = static_cast<float>(-alpha * norm_sq);
    }
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    head.assign_w = w;
    head.assign_b = b;
}

}  // namespace vpr
