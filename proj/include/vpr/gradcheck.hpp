#pragma once

#include <functional>

#include "vpr/tensor.hpp"

namespace vpr {

// A pure scalar-valued function of one tensor, recorded on the given tape.
using TensorFn = std::function<Tensor(Tape&, const Tensor&)>;

// Compares the tape gradient of f at x against central finite differences and
// returns max over coordinates of |analytic - numeric| / max(1, |numeric|).
// Function values are accumulated in float64; x itself is not modified.
double finite_diff_check(const TensorFn& f, const Tensor& x, double eps = 1e-3);

}  // namespace vpr
