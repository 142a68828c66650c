#pragma once

#include <vector>

#include "vpr/ops.hpp"
#include "vpr/rng.hpp"
#include "vpr/tensor.hpp"

namespace vpr {

// One conv block: conv + bias + ReLU. Blocks carrying a residual_group id add
// their own input before the activation (so out_channels must equal the
// incoming channel count and the spatial size must be preserved).
struct ConvBlockSpec {
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;
    int residual_group = -1;  // -1: plain block
};

struct BackboneSpec {
    int in_channels = 3;
    int in_h = 32;
    int in_w = 32;
    std::vector<ConvBlockSpec> blocks;
};

struct FeatureShape {
    int channels = 0;
    int h = 0;
    int w = 0;
};

// Validates the spec (channel compatibility, residual constraints) and
// returns the shape of the final feature map.
FeatureShape backbone_output_shape(const BackboneSpec& spec);

struct Backbone {
    BackboneSpec spec;  // as built; channel counts of `weights` are current
    std::vector<Tensor> weights;  // [c_o,c_i,k,k] per block
    std::vector<Tensor> biases;   // [c_o] per block

    Tensor forward(Tape* tape, const Tensor& image) const;
    int out_channels() const { return weights.back().dim(0); }
};

Backbone build_backbone(const BackboneSpec& spec, Rng& rng);

// Generalized-mean pooling head; p is a single trainable scalar.
struct GemHead {
    Tensor p;
};

// Spatial average pooling over block x block windows.
struct ConvApHead {
    int block = 2;
};

// Residual MLP mixing over flattened spatial vectors, then depth and row
// projections. w1/w2 are [hw,hw] per block, wd is [d_depth, c], wr is [4, hw];
// w1, w2 and wr are never pruned.
struct MixVprHead {
    std::vector<Tensor> w1;
    std::vector<Tensor> w2;
    Tensor wd;
    Tensor wr;
    int hw = 0;
    int d_depth_original = 0;
};

// Soft-assignment VLAD head: centers [K,D], assignment projection as a 1x1
// conv (assign_w [K,D] + assign_b [K]) followed by softmax over clusters.
struct NetVladHead {
    Tensor centers;
    Tensor assign_w;
    Tensor assign_b;
    int clusters_original = 0;

    int clusters() const { return centers.dim(0); }
    int feature_dim() const { return centers.dim(1); }
};

// y_c = (mean over H,W of X_c^p)^(1/p) on a non-negative activation map.
Tensor gem_pool(Tape* tape, const Tensor& x, const Tensor& p);

// Per-channel mean over each P x P block, flattened to c*(H/P)*(W/P).
Tensor conv_ap_pool(Tape* tape, const Tensor& x, int block);

Tensor mixvpr_forward(Tape* tape, const Tensor& x, const MixVprHead& head);

Tensor netvlad_forward(Tape* tape, const Tensor& x, const NetVladHead& head);

// Rebuilds the assignment projection from the current centers so the soft
// assignment approximates hard nearest-center assignment:
// w_z = 2*alpha*C_z, b_z = -alpha*|C_z|^2.
void netvlad_init_assignment(NetVladHead& head, double alpha = 100.0);

}  // namespace vpr
