#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "vpr/rng.hpp"

namespace vpr {

// Product of extents; throws std::invalid_argument on a non-positive extent.
int64_t shape_size(const std::vector<int>& shape);

// Dense float32 tensor with an optional gradient buffer of identical shape.
// Copies are shallow (shared storage); ops treat inputs as immutable and the
// gradient buffer is the only part mutated after a forward pass.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, float value);
    static Tensor from_data(std::vector<int> shape, std::vector<float> data);
    static Tensor scalar(float value);
    static Tensor randn(Rng& rng, std::vector<int> shape, float stddev = 1.0f);
    static Tensor uniform(Rng& rng, std::vector<int> shape, float lo, float hi);

    bool defined() const { return d_ != nullptr; }
    const std::vector<int>& shape() const;
    int ndim() const;
    int dim(int axis) const;
    int64_t size() const;

    float* data();
    const float* data() const;
    std::vector<float>& values();
    const std::vector<float>& values() const;
    float item() const;  // requires size() == 1

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);  // true allocates the grad buffer
    bool has_grad() const;
    std::vector<float>& grad();  // allocates a zeroed buffer on first use
    const std::vector<float>* grad_if() const;
    void zero_grad();

    bool same_storage(const Tensor& other) const { return d_ == other.d_; }

  private:
    struct Node {
        std::vector<int> shape;
        std::vector<float> values;
        std::vector<float> grad;  // empty until requested
        bool requires_grad = false;
    };
    std::shared_ptr<Node> d_;
    Node& node();
    const Node& node() const;
};

// Ordered record of the backward steps of one forward pass. Ops append their
// step when executed, so replaying the records in reverse visits every
// operation exactly once after all of its consumers.
class Tape {
  public:
    void record(std::function<void()> backward_step);

    // Seeds d(loss)/d(loss) = 1 and replays all records in reverse.
    // loss must be scalar and must have been produced on this tape.
    void backward(const Tensor& loss);

    size_t recorded_steps() const { return steps_.size(); }

  private:
    std::vector<std::function<void()>> steps_;
};

}  // namespace vpr
