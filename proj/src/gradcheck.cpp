#include "vpr/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace vpr {

double finite_diff_check(const TensorFn& f, const Tensor& x, double eps) {
    Tensor probe = Tensor::from_data(x.shape(), x.values());
    probe.set_requires_grad(true);

    Tape tape;
    Tensor loss = f(tape, probe);
    if (loss.size() != 1) throw std::invalid_argument("finite_diff_check: f must return a scalar");
    tape.backward(loss);
    const std::vector<float> analytic = probe.grad();

    auto eval = [&f](const Tensor& at) {
        Tape scratch;
        return static_cast<double>(f(scratch, at).item());
    };

    Tensor shifted = Tensor::from_data(x.shape(), x.values());
    double worst = 0.0;
    for (int64_t i = 0; i < x.size(); ++i) {
        const float original = shifted.data()[i];
        shifted.data()[i] = static_cast<float>(original + eps);
        const double up = eval(shifted);
        shifted.data()[i] = static_cast<float>(original - eps);
        const double down = eval(shifted);
        shifted.data()[i] = original;

        const double numeric = (up - down) / (2.0 * eps);
        const double rel = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace vpr
