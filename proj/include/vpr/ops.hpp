#pragma once

#include <vector>

#include "vpr/tensor.hpp"

namespace vpr {

// Differentiable tensor operations. Every op computes its result eagerly and,
// when `tape` is non-null and an input requires gradients, records one
// backward step on the tape. Passing tape == nullptr runs inference only.
//
// Storage is float32; dot products and reductions accumulate in float64.

// Cross-correlation of a [c_i,H,W] input with [c_o,c_i,k,k] weights and a
// [c_o] bias. Output height is floor((H + 2*pad - k)/stride) + 1.
Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad);

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

Tensor relu(Tape* tape, const Tensor& x);
Tensor transpose2d(Tape* tape, const Tensor& x);
Tensor reshape(Tape* tape, const Tensor& x, std::vector<int> shape);
Tensor flatten(Tape* tape, const Tensor& x);

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& x, double factor);

// x[m,n] plus bias[m] broadcast across each row.
Tensor add_row_bias(Tape* tape, const Tensor& x, const Tensor& bias);
// x[m,n] with row i multiplied by s[i].
Tensor scale_rows(Tape* tape, const Tensor& x, const Tensor& s);

Tensor sum(Tape* tape, const Tensor& x);
Tensor mean(Tape* tape, const Tensor& x);
Tensor sum_rows(Tape* tape, const Tensor& x);   // [m,n] -> [m]
Tensor mean_rows(Tape* tape, const Tensor& x);  // [m,n] -> [m]

// Elementwise power. The constant-exponent form rejects negative bases for
// non-integer exponents; the tensor-exponent form (scalar exponent, trainable)
// requires strictly positive bases.
Tensor power(Tape* tape, const Tensor& x, double exponent);
Tensor power(Tape* tape, const Tensor& x, const Tensor& exponent);

Tensor reciprocal(Tape* tape, const Tensor& x);
Tensor clamp_min(Tape* tape, const Tensor& x, double lo);

Tensor l2_norm(Tape* tape, const Tensor& x);  // scalar
Tensor l2_normalize(Tape* tape, const Tensor& x);
Tensor l2_normalize_rows(Tape* tape, const Tensor& x);

// Softmax over axis 0 of a [m,n] tensor (one distribution per column).
Tensor softmax_cols(Tape* tape, const Tensor& x);

// Per-channel mean over non-overlapping block x block windows of a [c,H,W]
// map; block must divide both H and W.
Tensor avgpool2d(Tape* tape, const Tensor& x, int block);

// Stacks B tensors of identical shape [D] into a [B,D] matrix.
Tensor stack_rows(Tape* tape, const std::vector<Tensor>& rows);

}  // namespace vpr
