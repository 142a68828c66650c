#include "vpr/ops.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace vpr {
namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch, " + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + " elements");
    }
}

bool want_grad(Tape* tape, const Tensor& a) { return tape != nullptr && a.requires_grad(); }

void mark_output(Tensor& y, bool grad) {
    if (grad) y.set_requires_grad(true);
}

// C[m,n] = A[m,k] * B[k,n]; float64 accumulation, one output row at a time.
void gemm_nn(int m, int k, int n, const float* a, const float* b, float* c, bool accumulate) {
    std::vector<double> acc(static_cast<size_t>(n));
    for (int i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* arow = a + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const float* brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) acc[j] += av * brow[j];
        }
        float* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            crow[j] = accumulate ? crow[j] + static_cast<float>(acc[j]) : static_cast<float>(acc[j]);
        }
    }
}

// C[m,n] = A[m,k] * B[n,k]^T; rows of both operands are contiguous.
void gemm_nt(int m, int k, int n, const float* a, const float* b, float* c, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<size_t>(i) * k;
        float* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const float* brow = b + static_cast<size_t>(j) * k;
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk) acc += static_cast<double>(arow[kk]) * brow[kk];
            crow[j] = accumulate ? crow[j] + static_cast<float>(acc) : static_cast<float>(acc);
        }
    }
}

// C[m,n] = A[k,m]^T * B[k,n].
void gemm_tn(int m, int k, int n, const float* a, const float* b, float* c, bool accumulate) {
    std::vector<double> acc(static_cast<size_t>(n));
    for (int i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int kk = 0; kk < k; ++kk) {
            const double av = a[static_cast<size_t>(kk) * m + i];
            const float* brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) acc[j] += av * brow[j];
        }
        float* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            crow[j] = accumulate ? crow[j] + static_cast<float>(acc[j]) : static_cast<float>(acc[j]);
        }
    }
}

// Unrolls conv windows into a [c_i*k*k, out_h*out_w] column matrix.
void im2col(const float* x, int ci, int h, int w, int k, int stride, int pad, int out_h, int out_w,
            float* cols) {
    const int64_t out_hw = static_cast<int64_t>(out_h) * out_w;
    for (int c = 0; c < ci; ++c) {
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                float* row = cols + ((static_cast<int64_t>(c) * k + kh) * k + kw) * out_hw;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + kh - pad;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride + kw - pad;
                        float v = 0.0f;
                        if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
                            v = x[(static_cast<int64_t>(c) * h + iy) * w + ix];
                        }
                        row[static_cast<int64_t>(oy) * out_w + ox] = v;
                    }
                }
            }
        }
    }
}

// Scatter-add of a column matrix back onto the input gradient.
void col2im_add(const float* cols, int ci, int h, int w, int k, int stride, int pad, int out_h,
                int out_w, float* gx) {
    const int64_t out_hw = static_cast<int64_t>(out_h) * out_w;
    for (int c = 0; c < ci; ++c) {
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                const float* row = cols + ((static_cast<int64_t>(c) * k + kh) * k + kw) * out_hw;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + kh - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride + kw - pad;
                        if (ix < 0 || ix >= w) continue;
                        gx[(static_cast<int64_t>(c) * h + iy) * w + ix] +=
                            row[static_cast<int64_t>(oy) * out_w + ox];
                    }
                }
            }
        }
    }
}

bool is_integer(double v) { return v == std::floor(v); }

}  // namespace

Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int pad) {
    if (input.ndim() != 3) throw std::invalid_argument("conv2d: input must be [c,H,W], got ndim " + std::to_string(input.ndim()));
    if (weight.ndim() != 4) throw std::invalid_argument("conv2d: weight must be [c_o,c_i,k,k], got ndim " + std::to_string(weight.ndim()));
    const int ci = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int co = weight.dim(0), wci = weight.dim(1), k = weight.dim(2);
    if (weight.dim(3) != k) throw std::invalid_argument("conv2d: non-square kernel " + std::to_string(k) + "x" + std::to_string(weight.dim(3)));
    if (wci != ci) {
        throw std::invalid_argument("conv2d: input channels " + std::to_string(ci) +
                                    " != weight input channels " + std::to_string(wci));
    }
    if (bias.ndim() != 1 || bias.dim(0) != co) {
        throw std::invalid_argument("conv2d: bias extent " + std::to_string(bias.size()) +
                                    " != output channels " + std::to_string(co));
    }
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
    if (k > h + 2 * pad || k > w + 2 * pad) {
        throw std::invalid_argument("conv2d: kernel " + std::to_string(k) + " exceeds padded input " +
                                    std::to_string(h + 2 * pad) + "x" + std::to_string(w + 2 * pad));
    }
    const int out_h = (h + 2 * pad - k) / stride + 1;
    const int out_w = (w + 2 * pad - k) / stride + 1;
    const int kk = ci * k * k;
    const int64_t out_hw = static_cast<int64_t>(out_h) * out_w;

    Tensor cols = Tensor::zeros({kk, static_cast<int>(out_hw)});
    im2col(input.data(), ci, h, w, k, stride, pad, out_h, out_w, cols.data());

    Tensor y = Tensor::zeros({co, out_h, out_w});
    gemm_nn(co, kk, static_cast<int>(out_hw), weight.data(), cols.data(), y.data(), false);
    for (int c = 0; c < co; ++c) {
        const float b = bias.data()[c];
        float* row = y.data() + c * out_hw;
        for (int64_t j = 0; j < out_hw; ++j) row[j] += b;
    }

    const bool grad = tape != nullptr && (input.requires_grad() || weight.requires_grad() || bias.requires_grad());
    mark_output(y, grad);
    if (grad) {
        Tensor xin = input, wt = weight, bs = bias, out = y, saved_cols = cols;
        tape->record([xin, wt, bs, out, saved_cols, ci, h, w, k, stride, pad, out_h, out_w, co, kk,
                      out_hw]() mutable {
            if (!out.has_grad()) return;
            const float* gy = out.grad().data();
            if (bs.requires_grad()) {
                auto& gb = bs.grad();
                for (int c = 0; c < co; ++c) {
                    double acc = 0.0;
                    const float* row = gy + c * out_hw;
                    for (int64_t j = 0; j < out_hw; ++j) acc += row[j];
                    gb[c] += static_cast<float>(acc);
                }
            }
            if (wt.requires_grad()) {
                gemm_nt(co, static_cast<int>(out_hw), kk, gy, saved_cols.data(), wt.grad().data(), true);
            }
            if (xin.requires_grad()) {
                Tensor gcols = Tensor::zeros({kk, static_cast<int>(out_hw)});
                gemm_tn(kk, co, static_cast<int>(out_hw), wt.data(), gy, gcols.data(), false);
                col2im_add(gcols.data(), ci, h, w, k, stride, pad, out_h, out_w, xin.grad().data());
            }
        });
    }
    return y;
}

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) throw std::invalid_argument("matmul: operands must be 2-d");
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw std::invalid_argument("matmul: inner extents disagree, " + std::to_string(k) + " vs " +
                                    std::to_string(k2));
    }
    Tensor y = Tensor::zeros({m, n});
    gemm_nn(m, k, n, a.data(), b.data(), y.data(), false);

    const bool grad = tape != nullptr && (a.requires_grad() || b.requires_grad());
    mark_output(y, grad);
    if (grad) {
        Tensor ta = a, tb = b, out = y;
        tape->record([ta, tb, out, m, k, n]() mutable {
            if (!out.has_grad()) return;
            const float* gy = out.grad().data();
            if (ta.requires_grad()) gemm_nt(m, n, k, gy, tb.data(), ta.grad().data(), true);
            if (tb.requires_grad()) gemm_tn(k, m, n, ta.data(), gy, tb.grad().data(), true);
        });
    }
    return y;
}

Tensor relu(Tape* tape, const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    const float* xd = x.data();
    float* yd = y.data();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) yd[i] = xd[i] > 0.0f ? xd[i] : 0.0f;
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, n]() mutable {
            if (!out.has_grad()) return;
            const float* gy = out.grad().data();
            const float* xd2 = tx.data();
            auto& gx = tx.grad();
            for (int64_t i = 0; i < n; ++i) {
                if (xd2[i] > 0.0f) gx[i] += gy[i];
            }
        });
    }
    return y;
}

Tensor transpose2d(Tape* tape, const Tensor& x) {
    if (x.ndim() != 2) throw std::invalid_argument("transpose2d: operand must be 2-d");
    const int m = x.dim(0), n = x.dim(1);
    Tensor y = Tensor::zeros({n, m});
    const float* xd = x.data();
    float* yd = y.data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) yd[static_cast<int64_t>(j) * m + i] = xd[static_cast<int64_t>(i) * n + j];
    }
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, m, n]() mutable {
            if (!out.has_grad()) return;
            const float* gy = out.grad().data();
            auto& gx = tx.grad();
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) gx[static_cast<int64_t>(i) * n + j] += gy[static_cast<int64_t>(j) * m + i];
            }
        });
    }
    return y;
}

Tensor reshape(Tape* tape, const Tensor& x, std::vector<int> shape) {
    if (shape_size(shape) != x.size()) {
        throw std::invalid_argument("reshape: new shape size " + std::to_string(shape_size(shape)) +
                                    " != tensor size " + std::to_string(x.size()));
    }
    Tensor y = Tensor::from_data(std::move(shape), x.values());
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            auto& gx = tx.grad();
            for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
        });
    }
    return y;
}

Tensor flatten(Tape* tape, const Tensor& x) { return reshape(tape, x, {static_cast<int>(x.size())}); }

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor y = Tensor::zeros(a.shape());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] + b.data()[i];
    const bool grad = tape != nullptr && (a.requires_grad() || b.requires_grad());
    mark_output(y, grad);
    if (grad) {
        Tensor ta = a, tb = b, out = y;
        tape->record([ta, tb, out, n]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            if (ta.requires_grad()) {
                auto& ga = ta.grad();
                for (int64_t i = 0; i < n; ++i) ga[i] += gy[i];
            }
            if (tb.requires_grad()) {
                auto& gb = tb.grad();
                for (int64_t i = 0; i < n; ++i) gb[i] += gy[i];
            }
        });
    }
    return y;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor y = Tensor::zeros(a.shape());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] - b.data()[i];
    const bool grad = tape != nullptr && (a.requires_grad() || b.requires_grad());
    mark_output(y, grad);
    if (grad) {
        Tensor ta = a, tb = b, out = y;
        tape->record([ta, tb, out, n]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            if (ta.requires_grad()) {
                auto& ga = ta.grad();
                for (int64_t i = 0; i < n; ++i) ga[i] += gy[i];
            }
            if (tb.requires_grad()) {
                auto& gb = tb.grad();
                for (int64_t i = 0; i < n; ++i) gb[i] -= gy[i];
            }
        });
    }
    return y;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor y = Tensor::zeros(a.shape());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) y.data()[i] = a.data()[i] * b.data()[i];
    const bool grad = tape != nullptr && (a.requires_grad() || b.requires_grad());
    mark_output(y, grad);
    if (grad) {
        Tensor ta = a, tb = b, out = y;
        tape->record([ta, tb, out, n]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            if (ta.requires_grad()) {
                auto& ga = ta.grad();
                for (int64_t i = 0; i < n; ++i) ga[i] += gy[i] * tb.data()[i];
            }
            if (tb.requires_grad()) {
                auto& gb = tb.grad();
                for (int64_t i = 0; i < n; ++i) gb[i] += gy[i] * ta.data()[i];
            }
        });
    }
    return y;
}

Tensor scale(Tape* tape, const Tensor& x, double factor) {
    Tensor y = Tensor::zeros(x.shape());
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) y.data()[i] = static_cast<float>(factor * x.data()[i]);
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, factor, n]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            auto& gx = tx.grad();
            for (int64_t i = 0; i < n; ++i) gx[i] += static_cast<float>(factor * gy[i]);
        });
    }
    return y;
}

Tensor add_row_bias(Tape* tape, const Tensor& x, const Tensor& bias) {
    if (x.ndim() != 2) throw std::invalid_argument("add_row_bias: x must be 2-d");
    const int m = x.dim(0), n = x.dim(1);
    if (bias.ndim() != 1 || bias.dim(0) != m) {
        throw std::invalid_argument("add_row_bias: bias extent " + std::to_string(bias.size()) +
                                    " != rows " + std::to_string(m));
    }
    Tensor y = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        const float b = bias.data()[i];
        for (int j = 0; j < n; ++j) y.data()[static_cast<int64_t>(i) * n + j] = x.data()[static_cast<int64_t>(i) * n + j] + b;
    }
    const bool grad = tape != nullptr && (x.requires_grad() || bias.requires_grad());
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, tb = bias, out = y;
        tape->record([tx, tb, out, m, n]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            if (tx.requires_grad()) {
                auto& gx = tx.grad();
                for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
            }
            if (tb.requires_grad()) {
                auto& gb = tb.grad();
                for (int i = 0; i < m; ++i) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += gy[static_cast<int64_t>(i) * n + j];
                    gb[i] += static_cast<float>(acc);
                }
            }
        });
    }
    return y;
}

Tensor scale_rows(Tape* tape, const Tensor& x, const Tensor& s) {
    if (x.ndim() != 2) throw std::invalid_argument("scale_rows: x must be 2-d");
    const int m = x.dim(0), n = x.dim(1);
    if (s.ndim() != 1 || s.dim(0) != m) {
        throw std::invalid_argument("scale_rows: scale extent " + std::to_string(s.size()) +
                                    " != rows " + std::to_string(m));
    }
    Tensor y = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        const float f = s.data()[i];
        for (int j = 0; j < n; ++j) y.data()[static_cast<int64_t>(i) * n + j] = f * x.data()[static_cast<int64_t>(i) * n + j];
    }
    const bool grad = tape != nullptr && (x.requires_grad() || s.requires_grad());
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, ts = s, out = y;
        tape->record([tx, ts, out, m, n]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            if (tx.requires_grad()) {
                auto& gx = tx.grad();
                for (int i = 0; i < m; ++i) {
                    const float f = ts.data()[i];
                    for (int j = 0; j < n; ++j) gx[static_cast<int64_t>(i) * n + j] += f * gy[static_cast<int64_t>(i) * n + j];
                }
            }
            if (ts.requires_grad()) {
                auto& gs = ts.grad();
                for (int i = 0; i < m; ++i) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) {
                        acc += static_cast<double>(gy[static_cast<int64_t>(i) * n + j]) * tx.data()[static_cast<int64_t>(i) * n + j];
                    }
                    gs[i] += static_cast<float>(acc);
                }
            }
        });
    }
    return y;
}

Tensor sum(Tape* tape, const Tensor& x) {
    double acc = 0.0;
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) acc += x.data()[i];
    Tensor y = Tensor::scalar(static_cast<float>(acc));
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, n]() mutable {
            if (!out.has_grad()) return;
            const float g = out.grad()[0];
            auto& gx = tx.grad();
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return y;
}

Tensor mean(Tape* tape, const Tensor& x) {
    double acc = 0.0;
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) acc += x.data()[i];
    Tensor y = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, n]() mutable {
            if (!out.has_grad()) return;
            const float g = out.grad()[0] / static_cast<float>(n);
            auto& gx = tx.grad();
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return y;
}

namespace {

Tensor row_reduce(Tape* tape, const Tensor& x, bool take_mean, const char* name) {
    if (x.ndim() != 2) throw std::invalid_argument(std::string(name) + ": operand must be 2-d");
    const int m = x.dim(0), n = x.dim(1);
    Tensor y = Tensor::zeros({m});
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += x.data()[static_cast<int64_t>(i) * n + j];
        y.data()[i] = static_cast<float>(take_mean ? acc / n : acc);
    }
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, m, n, take_mean]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            auto& gx = tx.grad();
            for (int i = 0; i < m; ++i) {
                const float g = take_mean ? gy[i] / static_cast<float>(n) : gy[i];
                for (int j = 0; j < n; ++j) gx[static_cast<int64_t>(i) * n + j] += g;
            }
        });
    }
    return y;
}

}  // namespace

Tensor sum_rows(Tape* tape, const Tensor& x) { return row_reduce(tape, x, false, "sum_rows"); }
Tensor mean_rows(Tape* tape, const Tensor& x) { return row_reduce(tape, x, true, "mean_rows"); }

Tensor power(Tape* tape, const Tensor& x, double exponent) {
    const int64_t n = x.size();
    const bool frac = !is_integer(exponent);
    Tensor y = Tensor::zeros(x.shape());
    for (int64_t i = 0; i < n; ++i) {
        const double v = x.data()[i];
        if (frac && v < 0.0) {
            throw std::domain_error("power: negative base " + std::to_string(v) +
                                    " with fractional exponent " + std::to_string(exponent));
        }
        y.data()[i] = static_cast<float>(std::pow(v, exponent));
    }
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, exponent, n]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            auto& gx = tx.grad();
            for (int64_t i = 0; i < n; ++i) {
                const double v = tx.data()[i];
                double d;
                if (v == 0.0) {
                    d = exponent == 1.0 ? 1.0 : (exponent > 1.0 ? 0.0 : 0.0);
                } else {
                    d = exponent * std::pow(v, exponent - 1.0);
                }
                gx[i] += static_cast<float>(gy[i] * d);
            }
        });
    }
    return y;
}

Tensor power(Tape* tape, const Tensor& x, const Tensor& exponent) {
    if (exponent.size() != 1) throw std::invalid_argument("power: tensor exponent must be scalar");
    const double p = exponent.item();
    const int64_t n = x.size();
    Tensor y = Tensor::zeros(x.shape());
    for (int64_t i = 0; i < n; ++i) {
        const double v = x.data()[i];
        if (v <= 0.0) {
            throw std::domain_error("power: non-positive base " + std::to_string(v) +
                                    " with trainable exponent");
        }
        y.data()[i] = static_cast<float>(std::pow(v, p));
    }
    const bool grad = tape != nullptr && (x.requires_grad() || exponent.requires_grad());
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, tp = exponent, out = y;
        tape->record([tx, tp, out, p, n]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            if (tx.requires_grad()) {
                auto& gx = tx.grad();
                for (int64_t i = 0; i < n; ++i) {
                    const double v = tx.data()[i];
                    gx[i] += static_cast<float>(gy[i] * p * std::pow(v, p - 1.0));
                }
            }
            if (tp.requires_grad()) {
                double acc = 0.0;
                for (int64_t i = 0; i < n; ++i) {
                    const double v = tx.data()[i];
                    acc += static_cast<double>(gy[i]) * std::pow(v, p) * std::log(v);
                }
                tp.grad()[0] += static_cast<float>(acc);
            }
        });
    }
    return y;
}

Tensor reciprocal(Tape* tape, const Tensor& x) {
    const int64_t n = x.size();
    Tensor y = Tensor::zeros(x.shape());
    for (int64_t i = 0; i < n; ++i) {
        const double v = x.data()[i];
        if (std::abs(v) < 1e-12) throw std::domain_error("reciprocal: value too close to zero");
        y.data()[i] = static_cast<float>(1.0 / v);
    }
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, n]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            auto& gx = tx.grad();
            for (int64_t i = 0; i < n; ++i) {
                const double v = tx.data()[i];
                gx[i] += static_cast<float>(-gy[i] / (v * v));
            }
        });
    }
    return y;
}

Tensor clamp_min(Tape* tape, const Tensor& x, double lo) {
    const int64_t n = x.size();
    const float flo = static_cast<float>(lo);
    Tensor y = Tensor::zeros(x.shape());
    for (int64_t i = 0; i < n; ++i) y.data()[i] = x.data()[i] > flo ? x.data()[i] : flo;
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, flo, n]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            auto& gx = tx.grad();
            for (int64_t i = 0; i < n; ++i) {
                if (tx.data()[i] > flo) gx[i] += gy[i];
            }
        });
    }
    return y;
}

Tensor l2_norm(Tape* tape, const Tensor& x) {
    double acc = 0.0;
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(x.data()[i]) * x.data()[i];
    const double r = std::sqrt(acc);
    Tensor y = Tensor::scalar(static_cast<float>(r));
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, r, n]() mutable {
            if (!out.has_grad() || r < 1e-12) return;
            const float g = out.grad()[0];
            auto& gx = tx.grad();
            for (int64_t i = 0; i < n; ++i) gx[i] += static_cast<float>(g * tx.data()[i] / r);
        });
    }
    return y;
}

namespace {

// Shared core for flat and row-wise normalization.
void normalize_span(const float* x, float* y, int64_t n, double& r_out) {
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * x[i];
    const double r = std::sqrt(acc);
    if (r < 1e-12) throw std::domain_error("l2_normalize: zero vector");
    for (int64_t i = 0; i < n; ++i) y[i] = static_cast<float>(x[i] / r);
    r_out = r;
}

void normalize_backward_span(const float* y, const float* gy, float* gx, int64_t n, double r) {
    double dot = 0.0;
    for (int64_t i = 0; i < n; ++i) dot += static_cast<double>(gy[i]) * y[i];
    for (int64_t i = 0; i < n; ++i) gx[i] += static_cast<float>((gy[i] - dot * y[i]) / r);
}

}  // namespace

Tensor l2_normalize(Tape* tape, const Tensor& x) {
    const int64_t n = x.size();
    Tensor y = Tensor::zeros(x.shape());
    double r = 0.0;
    normalize_span(x.data(), y.data(), n, r);
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, r, n]() mutable {
            if (!out.has_grad()) return;
            normalize_backward_span(out.data(), out.grad().data(), tx.grad().data(), n, r);
        });
    }
    return y;
}

Tensor l2_normalize_rows(Tape* tape, const Tensor& x) {
    if (x.ndim() != 2) throw std::invalid_argument("l2_normalize_rows: operand must be 2-d");
    const int m = x.dim(0), n = x.dim(1);
    Tensor y = Tensor::zeros({m, n});
    std::vector<double> norms(m);
    for (int i = 0; i < m; ++i) {
        normalize_span(x.data() + static_cast<int64_t>(i) * n, y.data() + static_cast<int64_t>(i) * n, n, norms[i]);
    }
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, norms, m, n]() mutable {
            if (!out.has_grad()) return;
            for (int i = 0; i < m; ++i) {
                normalize_backward_span(out.data() + static_cast<int64_t>(i) * n,
                                        out.grad().data() + static_cast<int64_t>(i) * n,
                                        tx.grad().data() + static_cast<int64_t>(i) * n, n, norms[i]);
            }
        });
    }
    return y;
}

Tensor softmax_cols(Tape* tape, const Tensor& x) {
    if (x.ndim() != 2) throw std::invalid_argument("softmax_cols: operand must be 2-d");
    const int m = x.dim(0), n = x.dim(1);
    Tensor y = Tensor::zeros({m, n});
    for (int j = 0; j < n; ++j) {
        double mx = -1e300;
        for (int i = 0; i < m; ++i) mx = std::max(mx, static_cast<double>(x.data()[static_cast<int64_t>(i) * n + j]));
        double z = 0.0;
        for (int i = 0; i < m; ++i) z += std::exp(static_cast<double>(x.data()[static_cast<int64_t>(i) * n + j]) - mx);
        for (int i = 0; i < m; ++i) {
            y.data()[static_cast<int64_t>(i) * n + j] =
                static_cast<float>(std::exp(static_cast<double>(x.data()[static_cast<int64_t>(i) * n + j]) - mx) / z);
        }
    }
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, m, n]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            auto& gx = tx.grad();
            for (int j = 0; j < n; ++j) {
                double dot = 0.0;
                for (int i = 0; i < m; ++i) {
                    dot += static_cast<double>(gy[static_cast<int64_t>(i) * n + j]) * out.data()[static_cast<int64_t>(i) * n + j];
                }
                for (int i = 0; i < m; ++i) {
                    const double yv = out.data()[static_cast<int64_t>(i) * n + j];
                    gx[static_cast<int64_t>(i) * n + j] +=
                        static_cast<float>(yv * (gy[static_cast<int64_t>(i) * n + j] - dot));
                }
            }
        });
    }
    return y;
}

Tensor avgpool2d(Tape* tape, const Tensor& x, int block) {
    if (x.ndim() != 3) throw std::invalid_argument("avgpool2d: input must be [c,H,W]");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (block < 1 || h % block != 0 || w % block != 0) {
        throw std::invalid_argument("avgpool2d: block " + std::to_string(block) +
                                    " does not divide map " + std::to_string(h) + "x" + std::to_string(w));
    }
    const int oh = h / block, ow = w / block;
    Tensor y = Tensor::zeros({c, oh, ow});
    const double inv = 1.0 / (static_cast<double>(block) * block);
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                double acc = 0.0;
                for (int bi = 0; bi < block; ++bi) {
                    for (int bj = 0; bj < block; ++bj) {
                        acc += x.data()[(static_cast<int64_t>(ch) * h + i * block + bi) * w + j * block + bj];
                    }
                }
                y.data()[(static_cast<int64_t>(ch) * oh + i) * ow + j] = static_cast<float>(acc * inv);
            }
        }
    }
    const bool grad = want_grad(tape, x);
    mark_output(y, grad);
    if (grad) {
        Tensor tx = x, out = y;
        tape->record([tx, out, c, h, w, block, oh, ow, inv]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            auto& gx = tx.grad();
            for (int ch = 0; ch < c; ++ch) {
                for (int i = 0; i < oh; ++i) {
                    for (int j = 0; j < ow; ++j) {
                        const float g = static_cast<float>(gy[(static_cast<int64_t>(ch) * oh + i) * ow + j] * inv);
                        for (int bi = 0; bi < block; ++bi) {
                            for (int bj = 0; bj < block; ++bj) {
                                gx[(static_cast<int64_t>(ch) * h + i * block + bi) * w + j * block + bj] += g;
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

Tensor stack_rows(Tape* tape, const std::vector<Tensor>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty row list");
    const int d = static_cast<int>(rows[0].size());
    for (const auto& r : rows) {
        if (r.ndim() != 1 || r.dim(0) != d) {
            throw std::invalid_argument("stack_rows: rows must all be 1-d of extent " + std::to_string(d));
        }
    }
    const int b = static_cast<int>(rows.size());
    Tensor y = Tensor::zeros({b, d});
    bool grad = false;
    for (int i = 0; i < b; ++i) {
        std::memcpy(y.data() + static_cast<int64_t>(i) * d, rows[i].data(), sizeof(float) * d);
        grad = grad || rows[i].requires_grad();
    }
    grad = grad && tape != nullptr;
    mark_output(y, grad);
    if (grad) {
        std::vector<Tensor> saved = rows;
        Tensor out = y;
        tape->record([saved, out, b, d]() mutable {
            if (!out.has_grad()) return;
            const auto& gy = out.grad();
            for (int i = 0; i < b; ++i) {
                if (!saved[i].requires_grad()) continue;
                auto& gr = saved[i].grad();
                for (int j = 0; j < d; ++j) gr[j] += gy[static_cast<int64_t>(i) * d + j];
            }
        });
    }
    return y;
}

}  // namespace vpr
