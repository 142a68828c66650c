#include "vpr/tensor.hpp"

#include <stdexcept>
#include <string>

namespace vpr {

int64_t shape_size(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int e : shape) {
        if (e <= 0) {
            throw std::invalid_argument("tensor shape has non-positive extent " + std::to_string(e));
        }
        n *= e;
    }
    return n;
}

Tensor::Node& Tensor::node() {
    if (!d_) throw std::runtime_error("use of undefined tensor");
    return *d_;
}

const Tensor::Node& Tensor::node() const {
    if (!d_) throw std::runtime_error("use of undefined tensor");
    return *d_;
}

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    int64_t n = shape_size(shape);
    t.d_ = std::make_shared<Node>();
    t.d_->shape = std::move(shape);
    t.d_->values.assign(static_cast<size_t>(n), 0.0f);
    return t;
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.d_->values) v = value;
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data) {
    int64_t n = shape_size(shape);
    if (n != static_cast<int64_t>(data.size())) {
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape size " + std::to_string(n));
    }
    Tensor t;
    t.d_ = std::make_shared<Node>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(data);
    return t;
}

Tensor Tensor::scalar(float value) { return from_data({1}, {value}); }

Tensor Tensor::randn(Rng& rng, std::vector<int> shape, float stddev) {
    Tensor t = zeros(std::move(shape));
    std::normal_distribution<float> dist(0.0f, stddev);
    for (auto& v : t.d_->values) v = dist(rng);
    return t;
}

Tensor Tensor::uniform(Rng& rng, std::vector<int> shape, float lo, float hi) {
    Tensor t = zeros(std::move(shape));
    std::uniform_real_distribution<float> dist(lo, hi);
    for (auto& v : t.d_->values) v = dist(rng);
    return t;
}

const std::vector<int>& Tensor::shape() const { return node().shape; }
int Tensor::ndim() const { return static_cast<int>(node().shape.size()); }

int Tensor::dim(int axis) const {
    const auto& s = node().shape;
    if (axis < 0 || axis >= static_cast<int>(s.size())) {
        throw std::invalid_argument("tensor axis " + std::to_string(axis) + " out of range");
    }
    return s[axis];
}

int64_t Tensor::size() const { return static_cast<int64_t>(node().values.size()); }

float* Tensor::data() { return node().values.data(); }
const float* Tensor::data() const { return node().values.data(); }
std::vector<float>& Tensor::values() { return node().values; }
const std::vector<float>& Tensor::values() const { return node().values; }

float Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() on tensor of size " + std::to_string(size()));
    return node().values[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    node().requires_grad = value;
    if (value && node().grad.empty()) node().grad.assign(node().values.size(), 0.0f);
    return *this;
}

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::vector<float>& Tensor::grad() {
    auto& n = node();
    if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0f);
    return n.grad;
}

const std::vector<float>* Tensor::grad_if() const {
    const auto& n = node();
    return n.grad.empty() ? nullptr : &n.grad;
}

void Tensor::zero_grad() {
    auto& n = node();
    if (!n.grad.empty()) n.grad.assign(n.values.size(), 0.0f);
}

void Tape::record(std::function<void()> backward_step) { steps_.push_back(std::move(backward_step)); }

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got size " + std::to_string(loss.size()));
    }
    Tensor seed = loss;
    seed.grad()[0] += 1.0f;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

}  // namespace vpr
