// SPDX-License-Identifier: Apache-2.0
#include "vls/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "vls/kernels.hpp"
#include "vls/rng.hpp"

namespace vls {

namespace {

std::string shape_str(const std::vector<std::int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw usage_error(msg);
}

void require_same_shape(const char* op, const TensorPtr& a, const TensorPtr& b) {
    require(a->shape == b->shape, std::string(op) + ": shape mismatch " +
                                      shape_str(a->shape) + " vs " + shape_str(b->shape));
}

constexpr real kMaskFill = real(-1e9);

} // namespace

TensorPtr make_tensor(std::vector<std::int64_t> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data.assign(static_cast<std::size_t>(t->numel()), real(0));
    t->requires_grad = requires_grad;
    if (requires_grad) t->ensure_grad();
    return t;
}

TensorPtr make_tensor(std::vector<std::int64_t> shape, std::vector<real> data,
                      bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    require(static_cast<std::int64_t>(t->data.size()) == t->numel(),
            "make_tensor: data length does not match shape " + shape_str(t->shape));
    t->requires_grad = requires_grad;
    if (requires_grad) t->ensure_grad();
    return t;
}

TensorPtr scalar_tensor(real v) {
    return make_tensor({1}, std::vector<real>{v});
}

namespace ops {

namespace {

// Shared setup for recording: marks the output differentiable and allocates
// its grad buffer so closures of later ops can write into it.
bool wants_grad(Tape& t, std::initializer_list<const TensorPtr*> inputs) {
    if (!t.recording()) return false;
    for (const auto* in : inputs) {
        if (*in && (*in)->requires_grad) return true;
    }
    return false;
}

void mark_out(const TensorPtr& out) {
    out->requires_grad = true;
    out->ensure_grad();
}

} // namespace

TensorPtr add(Tape& t, const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("add", a, b);
    auto out = make_tensor(a->shape);
    const std::size_t n = a->data.size();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
    if (wants_grad(t, {&a, &b})) {
        mark_out(out);
        t.record([a, b, out] {
            const std::size_t n = out->grad.size();
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) b->grad[i] += out->grad[i];
            }
        });
    }
    return out;
}

TensorPtr sub(Tape& t, const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("sub", a, b);
    auto out = make_tensor(a->shape);
    const std::size_t n = a->data.size();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] - b->data[i];
    if (wants_grad(t, {&a, &b})) {
        mark_out(out);
        t.record([a, b, out] {
            const std::size_t n = out->grad.size();
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) b->grad[i] -= out->grad[i];
            }
        });
    }
    return out;
}

TensorPtr mul(Tape& t, const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("mul", a, b);
    auto out = make_tensor(a->shape);
    const std::size_t n = a->data.size();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
    if (wants_grad(t, {&a, &b})) {
        mark_out(out);
        t.record([a, b, out] {
            const std::size_t n = out->grad.size();
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) b->grad[i] += out->grad[i] * a->data[i];
            }
        });
    }
    return out;
}

TensorPtr scale(Tape& t, const TensorPtr& a, real c) {
    auto out = make_tensor(a->shape);
    const std::size_t n = a->data.size();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] * c;
    if (wants_grad(t, {&a})) {
        mark_out(out);
        t.record([a, out, c] {
            a->ensure_grad();
            const std::size_t n = out->grad.size();
            for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i] * c;
        });
    }
    return out;
}

TensorPtr add_bias(Tape& t, const TensorPtr& x, const TensorPtr& bias) {
    require(x->rank() >= 1 && bias->rank() == 1, "add_bias: bias must be rank 1");
    const std::int64_t d = bias->dim(0);
    require(x->shape.back() == d, "add_bias: last dim " + shape_str(x->shape) +
                                      " vs bias " + shape_str(bias->shape));
    const std::int64_t rows = x->numel() / d;
    auto out = make_tensor(x->shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t j = 0; j < d; ++j) {
            out->data[r * d + j] = x->data[r * d + j] + bias->data[j];
        }
    }
    if (wants_grad(t, {&x, &bias})) {
        mark_out(out);
        t.record([x, bias, out, rows, d] {
            if (x->requires_grad) {
                x->ensure_grad();
                const std::size_t n = out->grad.size();
                for (std::size_t i = 0; i < n; ++i) x->grad[i] += out->grad[i];
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t j = 0; j < d; ++j) {
                        bias->grad[j] += out->grad[r * d + j];
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr mul_scalar_tensor(Tape& t, const TensorPtr& a, const TensorPtr& s) {
    require(s->is_scalar(), "mul_scalar_tensor: scalar operand has shape " + shape_str(s->shape));
    auto out = make_tensor(a->shape);
    const real sv = s->data[0];
    const std::size_t n = a->data.size();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] * sv;
    if (wants_grad(t, {&a, &s})) {
        mark_out(out);
        t.record([a, s, out] {
            const std::size_t n = out->grad.size();
            if (a->requires_grad) {
                a->ensure_grad();
                const real sv = s->data[0];
                for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i] * sv;
            }
            if (s->requires_grad) {
                s->ensure_grad();
                real acc = 0;
                for (std::size_t i = 0; i < n; ++i) acc += out->grad[i] * a->data[i];
                s->grad[0] += acc;
            }
        });
    }
    return out;
}

TensorPtr matmul(Tape& t, const TensorPtr& a, const TensorPtr& b) {
    require(a->rank() == 2 && b->rank() == 2,
            "matmul: operands must be rank 2, got " + shape_str(a->shape) + " and " +
                shape_str(b->shape));
    require(a->dim(1) == b->dim(0), "matmul: inner dimensions disagree " +
                                        shape_str(a->shape) + " vs " + shape_str(b->shape));
    const std::int64_t m = a->dim(0), k = a->dim(1), n = b->dim(1);
    auto out = make_tensor({m, n});
    kern::gemm_nn(a->data.data(), b->data.data(), out->data.data(), m, k, n, false);
    if (wants_grad(t, {&a, &b})) {
        mark_out(out);
        t.record([a, b, out, m, k, n] {
            if (a->requires_grad) {
                a->ensure_grad();
                kern::gemm_nt(out->grad.data(), b->data.data(), a->grad.data(), m, n, k, true);
            }
            if (b->requires_grad) {
                b->ensure_grad();
                kern::gemm_tn(a->data.data(), out->grad.data(), b->grad.data(), k, m, n, true);
            }
        });
    }
    return out;
}

TensorPtr transpose(Tape& t, const TensorPtr& a) {
    require(a->rank() == 2, "transpose: operand must be rank 2, got " + shape_str(a->shape));
    const std::int64_t m = a->dim(0), n = a->dim(1);
    auto out = make_tensor({n, m});
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            out->data[j * m + i] = a->data[i * n + j];
        }
    }
    if (wants_grad(t, {&a})) {
        mark_out(out);
        t.record([a, out, m, n] {
            a->ensure_grad();
            for (std::int64_t i = 0; i < m; ++i) {
                for (std::int64_t j = 0; j < n; ++j) {
                    a->grad[i * n + j] += out->grad[j * m + i];
                }
            }
        });
    }
    return out;
}

TensorPtr reshape(Tape& t, const TensorPtr& a, std::vector<std::int64_t> shape) {
    auto out = make_tensor(std::move(shape));
    require(out->numel() == a->numel(), "reshape: element count mismatch " +
                                            shape_str(a->shape) + " -> " + shape_str(out->shape));
    out->data = a->data;
    if (wants_grad(t, {&a})) {
        mark_out(out);
        t.record([a, out] {
            a->ensure_grad();
            const std::size_t n = out->grad.size();
            for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i];
        });
    }
    return out;
}

TensorPtr slice_rows(Tape& t, const TensorPtr& a, std::int64_t r0, std::int64_t r1) {
    require(a->rank() == 2, "slice_rows: operand must be rank 2");
    require(0 <= r0 && r0 <= r1 && r1 <= a->dim(0),
            "slice_rows: range out of bounds for " + shape_str(a->shape));
    const std::int64_t n = a->dim(1);
    auto out = make_tensor({r1 - r0, n});
    std::copy(a->data.begin() + r0 * n, a->data.begin() + r1 * n, out->data.begin());
    if (wants_grad(t, {&a})) {
        mark_out(out);
        t.record([a, out, r0, n] {
            a->ensure_grad();
            const std::size_t cnt = out->grad.size();
            for (std::size_t i = 0; i < cnt; ++i) {
                a->grad[static_cast<std::size_t>(r0 * n) + i] += out->grad[i];
            }
        });
    }
    return out;
}

TensorPtr slice_cols(Tape& t, const TensorPtr& a, std::int64_t c0, std::int64_t c1) {
    require(a->rank() == 2, "slice_cols: operand must be rank 2");
    require(0 <= c0 && c0 <= c1 && c1 <= a->dim(1),
            "slice_cols: range out of bounds for " + shape_str(a->shape));
    const std::int64_t rows = a->dim(0), n = a->dim(1), w = c1 - c0;
    auto out = make_tensor({rows, w});
    for (std::int64_t r = 0; r < rows; ++r) {
        std::copy(a->data.begin() + r * n + c0, a->data.begin() + r * n + c1,
                  out->data.begin() + r * w);
    }
    if (wants_grad(t, {&a})) {
        mark_out(out);
        t.record([a, out, c0, rows, n, w] {
            a->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                for (std::int64_t j = 0; j < w; ++j) {
                    a->grad[r * n + c0 + j] += out->grad[r * w + j];
                }
            }
        });
    }
    return out;
}

TensorPtr concat_rows(Tape& t, const std::vector<TensorPtr>& parts) {
    require(!parts.empty(), "concat_rows: no operands");
    const std::int64_t n = parts[0]->dim(1);
    std::int64_t rows = 0;
    for (const auto& p : parts) {
        require(p->rank() == 2 && p->dim(1) == n,
                "concat_rows: column mismatch " + shape_str(p->shape));
        rows += p->dim(0);
    }
    auto out = make_tensor({rows, n});
    std::int64_t at = 0;
    for (const auto& p : parts) {
        std::copy(p->data.begin(), p->data.end(), out->data.begin() + at);
        at += p->numel();
    }
    bool any = false;
    for (const auto& p : parts) any = any || p->requires_grad;
    if (t.recording() && any) {
        mark_out(out);
        t.record([parts, out] {
            std::int64_t at = 0;
            for (const auto& p : parts) {
                const std::int64_t cnt = p->numel();
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (std::int64_t i = 0; i < cnt; ++i) p->grad[i] += out->grad[at + i];
                }
                at += cnt;
            }
        });
    }
    return out;
}

TensorPtr concat_cols(Tape& t, const std::vector<TensorPtr>& parts) {
    require(!parts.empty(), "concat_cols: no operands");
    const std::int64_t rows = parts[0]->dim(0);
    std::int64_t cols = 0;
    for (const auto& p : parts) {
        require(p->rank() == 2 && p->dim(0) == rows,
                "concat_cols: row mismatch " + shape_str(p->shape));
        cols += p->dim(1);
    }
    auto out = make_tensor({rows, cols});
    std::int64_t at = 0;
    for (const auto& p : parts) {
        const std::int64_t w = p->dim(1);
        for (std::int64_t r = 0; r < rows; ++r) {
            std::copy(p->data.begin() + r * w, p->data.begin() + (r + 1) * w,
                      out->data.begin() + r * cols + at);
        }
        at += w;
    }
    bool any = false;
    for (const auto& p : parts) any = any || p->requires_grad;
    if (t.recording() && any) {
        mark_out(out);
        t.record([parts, out, rows, cols] {
            std::int64_t at = 0;
            for (const auto& p : parts) {
                const std::int64_t w = p->dim(1);
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (std::int64_t r = 0; r < rows; ++r) {
                        for (std::int64_t j = 0; j < w; ++j) {
                            p->grad[r * w + j] += out->grad[r * cols + at + j];
                        }
                    }
                }
                at += w;
            }
        });
    }
    return out;
}

TensorPtr softmax(Tape& t, const TensorPtr& a, int axis) {
    require(axis >= 0 && axis < a->rank(),
            "softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(a->shape));
    const std::int64_t n = a->dim(axis);
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a->dim(i);
    for (int i = axis + 1; i < a->rank(); ++i) inner *= a->dim(i);
    auto out = make_tensor(a->shape);
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * n * inner + in;
            real mx = a->data[base];
            for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, a->data[base + j * inner]);
            real sum = 0;
            for (std::int64_t j = 0; j < n; ++j) {
                const real e = std::exp(a->data[base + j * inner] - mx);
                out->data[base + j * inner] = e;
                sum += e;
            }
            const real inv = real(1) / sum;
            for (std::int64_t j = 0; j < n; ++j) out->data[base + j * inner] *= inv;
        }
    }
    if (wants_grad(t, {&a})) {
        mark_out(out);
        t.record([a, out, outer, inner, n] {
            a->ensure_grad();
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t in = 0; in < inner; ++in) {
                    const std::int64_t base = o * n * inner + in;
                    real dot = 0;
                    for (std::int64_t j = 0; j < n; ++j) {
                        dot += out->grad[base + j * inner] * out->data[base + j * inner];
                    }
                    for (std::int64_t j = 0; j < n; ++j) {
                        const std::int64_t k = base + j * inner;
                        a->grad[k] += out->data[k] * (out->grad[k] - dot);
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr masked_softmax_rows(Tape& t, const TensorPtr& logits,
                              const std::vector<std::uint8_t>& valid) {
    require(logits->rank() == 2, "masked_softmax_rows: logits must be rank 2");
    const std::int64_t rows = logits->dim(0), cols = logits->dim(1);
    require(static_cast<std::int64_t>(valid.size()) == rows * cols,
            "masked_softmax_rows: mask length does not match " + shape_str(logits->shape));
    auto out = make_tensor(logits->shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        const real* x = logits->data.data() + r * cols;
        real* y = out->data.data() + r * cols;
        const std::uint8_t* vm = valid.data() + r * cols;
        bool any = false;
        real mx = 0;
        for (std::int64_t j = 0; j < cols; ++j) {
            const real adj = vm[j] ? x[j] : x[j] + kMaskFill;
            if (!any || adj > mx) mx = adj;
            any = true;
        }
        bool any_valid = false;
        for (std::int64_t j = 0; j < cols; ++j) any_valid = any_valid || vm[j];
        if (!any_valid) {
            // all positions masked: defined to output zeros
            std::fill(y, y + cols, real(0));
            continue;
        }
        real sum = 0;
        for (std::int64_t j = 0; j < cols; ++j) {
            const real adj = vm[j] ? x[j] : x[j] + kMaskFill;
            y[j] = std::exp(adj - mx);
            sum += y[j];
        }
        const real inv = real(1) / sum;
        for (std::int64_t j = 0; j < cols; ++j) y[j] *= inv;
    }
    if (wants_grad(t, {&logits})) {
        mark_out(out);
        t.record([logits, out, rows, cols] {
            logits->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                const std::int64_t base = r * cols;
                real dot = 0;
                for (std::int64_t j = 0; j < cols; ++j) {
                    dot += out->grad[base + j] * out->data[base + j];
                }
                for (std::int64_t j = 0; j < cols; ++j) {
                    logits->grad[base + j] +=
                        out->data[base + j] * (out->grad[base + j] - dot);
                }
            }
        });
    }
    return out;
}

TensorPtr layer_norm(Tape& t, const TensorPtr& x, const TensorPtr& gain,
                     const TensorPtr& bias, real eps) {
    require(gain->rank() == 1 && bias->rank() == 1, "layer_norm: gain/bias must be rank 1");
    const std::int64_t d = gain->dim(0);
    require(bias->dim(0) == d && x->shape.back() == d,
            "layer_norm: last dim of " + shape_str(x->shape) + " must match gain " +
                shape_str(gain->shape));
    require(eps > 0, "layer_norm: eps must be positive");
    const std::int64_t rows = x->numel() / d;
    auto out = make_tensor(x->shape);
    // saved normalized values and inverse stddev per row for the backward pass
    auto xhat = std::make_shared<std::vector<real>>(x->data.size());
    auto rstd = std::make_shared<std::vector<real>>(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const real* xr = x->data.data() + r * d;
        real mean = 0;
        for (std::int64_t j = 0; j < d; ++j) mean += xr[j];
        mean /= real(d);
        real var = 0;
        for (std::int64_t j = 0; j < d; ++j) {
            const real c = xr[j] - mean;
            var += c * c;
        }
        var /= real(d);
        const real inv = real(1) / std::sqrt(var + eps);
        (*rstd)[static_cast<std::size_t>(r)] = inv;
        for (std::int64_t j = 0; j < d; ++j) {
            const real h = (xr[j] - mean) * inv;
            (*xhat)[r * d + j] = h;
            out->data[r * d + j] = gain->data[j] * h + bias->data[j];
        }
    }
    if (wants_grad(t, {&x, &gain, &bias})) {
        mark_out(out);
        t.record([x, gain, bias, out, xhat, rstd, rows, d] {
            for (std::int64_t r = 0; r < rows; ++r) {
                const std::int64_t base = r * d;
                if (gain->requires_grad) {
                    gain->ensure_grad();
                    for (std::int64_t j = 0; j < d; ++j) {
                        gain->grad[j] += out->grad[base + j] * (*xhat)[base + j];
                    }
                }
                if (bias->requires_grad) {
                    bias->ensure_grad();
                    for (std::int64_t j = 0; j < d; ++j) bias->grad[j] += out->grad[base + j];
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    real m1 = 0, m2 = 0;
                    for (std::int64_t j = 0; j < d; ++j) {
                        const real dh = out->grad[base + j] * gain->data[j];
                        m1 += dh;
                        m2 += dh * (*xhat)[base + j];
                    }
                    m1 /= real(d);
                    m2 /= real(d);
                    const real inv = (*rstd)[static_cast<std::size_t>(r)];
                    for (std::int64_t j = 0; j < d; ++j) {
                        const real dh = out->grad[base + j] * gain->data[j];
                        x->grad[base + j] += inv * (dh - m1 - (*xhat)[base + j] * m2);
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr gelu(Tape& t, const TensorPtr& x) {
    auto out = make_tensor(x->shape);
    const std::size_t n = x->data.size();
    constexpr real kInvSqrt2 = real(0.7071067811865475);
    for (std::size_t i = 0; i < n; ++i) {
        const real v = x->data[i];
        out->data[i] = real(0.5) * v * (real(1) + std::erf(v * kInvSqrt2));
    }
    if (wants_grad(t, {&x})) {
        mark_out(out);
        t.record([x, out, n] {
            x->ensure_grad();
            constexpr real kInvSqrt2 = real(0.7071067811865475);
            constexpr real kInvSqrt2Pi = real(0.3989422804014327);
            for (std::size_t i = 0; i < n; ++i) {
                const real v = x->data[i];
                const real cdf = real(0.5) * (real(1) + std::erf(v * kInvSqrt2));
                const real pdf = kInvSqrt2Pi * std::exp(real(-0.5) * v * v);
                x->grad[i] += out->grad[i] * (cdf + v * pdf);
            }
        });
    }
    return out;
}

TensorPtr sigmoid(Tape& t, const TensorPtr& x) {
    auto out = make_tensor(x->shape);
    const std::size_t n = x->data.size();
    for (std::size_t i = 0; i < n; ++i) {
        const real v = x->data[i];
        if (v >= 0) {
            out->data[i] = real(1) / (real(1) + std::exp(-v));
        } else {
            const real e = std::exp(v);
            out->data[i] = e / (real(1) + e);
        }
    }
    if (wants_grad(t, {&x})) {
        mark_out(out);
        t.record([x, out, n] {
            x->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const real y = out->data[i];
                x->grad[i] += out->grad[i] * y * (real(1) - y);
            }
        });
    }
    return out;
}

TensorPtr embedding(Tape& t, const TensorPtr& table, const std::vector<int>& ids) {
    require(table->rank() == 2, "embedding: table must be rank 2");
    const std::int64_t v = table->dim(0), d = table->dim(1);
    for (int id : ids) {
        require(id >= 0 && id < v,
                "embedding: id " + std::to_string(id) + " out of range [0," + std::to_string(v) + ")");
    }
    const std::int64_t l = static_cast<std::int64_t>(ids.size());
    auto out = make_tensor({l, d});
    for (std::int64_t i = 0; i < l; ++i) {
        std::copy(table->data.begin() + ids[static_cast<std::size_t>(i)] * d,
                  table->data.begin() + (ids[static_cast<std::size_t>(i)] + 1) * d,
                  out->data.begin() + i * d);
    }
    if (wants_grad(t, {&table})) {
        mark_out(out);
        t.record([table, out, ids, l, d] {
            table->ensure_grad();
            for (std::int64_t i = 0; i < l; ++i) {
                const std::int64_t row = ids[static_cast<std::size_t>(i)];
                for (std::int64_t j = 0; j < d; ++j) {
                    table->grad[row * d + j] += out->grad[i * d + j];
                }
            }
        });
    }
    return out;
}

TensorPtr gather(Tape& t, const TensorPtr& vec, const std::vector<std::int64_t>& idx,
                 std::vector<std::int64_t> shape) {
    require(vec->rank() == 1, "gather: source must be rank 1");
    const std::int64_t n = vec->dim(0);
    auto out = make_tensor(std::move(shape));
    require(out->numel() == static_cast<std::int64_t>(idx.size()),
            "gather: index count does not match output shape");
    for (std::size_t i = 0; i < idx.size(); ++i) {
        require(idx[i] >= 0 && idx[i] < n, "gather: index out of range");
        out->data[i] = vec->data[static_cast<std::size_t>(idx[i])];
    }
    if (wants_grad(t, {&vec})) {
        mark_out(out);
        t.record([vec, out, idx] {
            vec->ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i) {
                vec->grad[static_cast<std::size_t>(idx[i])] += out->grad[i];
            }
        });
    }
    return out;
}

TensorPtr sum_all(Tape& t, const TensorPtr& a) {
    real acc = 0;
    for (real v : a->data) acc += v;
    auto out = scalar_tensor(acc);
    if (wants_grad(t, {&a})) {
        mark_out(out);
        t.record([a, out] {
            a->ensure_grad();
            const real g = out->grad[0];
            for (auto& gv : a->grad) gv += g;
        });
    }
    return out;
}

TensorPtr cross_entropy_with_logits(Tape& t, const TensorPtr& logits,
                                    const std::vector<int>& targets, int ignore_id) {
    require(logits->rank() == 2, "cross_entropy: logits must be rank 2");
    const std::int64_t l = logits->dim(0), v = logits->dim(1);
    require(static_cast<std::int64_t>(targets.size()) == l,
            "cross_entropy: target count " + std::to_string(targets.size()) +
                " does not match logit rows " + std::to_string(l));
    std::int64_t count = 0;
    for (int id : targets) {
        if (id == ignore_id) continue;
        require(id >= 0 && id < v, "cross_entropy: target id " + std::to_string(id) +
                                       " out of range [0," + std::to_string(v) + ")");
        ++count;
    }
    if (count == 0) {
        // mean over an empty set is defined as 0; nothing flows back
        return scalar_tensor(0);
    }
    auto probs = std::make_shared<std::vector<real>>(logits->data.size());
    real acc = 0;
    for (std::int64_t r = 0; r < l; ++r) {
        const real* x = logits->data.data() + r * v;
        real* p = probs->data() + r * v;
        real mx = x[0];
        for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, x[j]);
        real sum = 0;
        for (std::int64_t j = 0; j < v; ++j) {
            p[j] = std::exp(x[j] - mx);
            sum += p[j];
        }
        const real inv = real(1) / sum;
        for (std::int64_t j = 0; j < v; ++j) p[j] *= inv;
        const int tgt = targets[static_cast<std::size_t>(r)];
        if (tgt != ignore_id) {
            acc += (mx + std::log(sum)) - x[tgt];
        }
    }
    auto out = scalar_tensor(acc / real(count));
    if (wants_grad(t, {&logits})) {
        mark_out(out);
        t.record([logits, out, probs, targets, ignore_id, l, v, count] {
            logits->ensure_grad();
            const real f = out->grad[0] / real(count);
            for (std::int64_t r = 0; r < l; ++r) {
                const int tgt = targets[static_cast<std::size_t>(r)];
                if (tgt == ignore_id) continue;
                const real* p = probs->data() + r * v;
                real* g = logits->grad.data() + r * v;
                for (std::int64_t j = 0; j < v; ++j) {
                    g[j] += f * (p[j] - (j == tgt ? real(1) : real(0)));
                }
            }
        });
    }
    return out;
}

TensorPtr attention(Tape& t, const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                    const std::vector<std::uint8_t>& valid, const TensorPtr& bias) {
    require(q->rank() == 2 && k->rank() == 2 && v->rank() == 2,
            "attention: q/k/v must be rank 2");
    require(q->dim(1) == k->dim(1), "attention: q/k feature dims disagree");
    require(k->dim(0) == v->dim(0), "attention: k/v lengths disagree");
    const real inv_sqrt_d = real(1) / std::sqrt(real(q->dim(1)));
    auto scores = scale(t, matmul(t, q, transpose(t, k)), inv_sqrt_d);
    if (bias) scores = add(t, scores, bias);
    auto weights = masked_softmax_rows(t, scores, valid);
    return matmul(t, weights, v);
}

} // namespace ops

void backward(const TensorPtr& loss, Tape& tape) {
    if (!loss->is_scalar()) {
        throw usage_error("backward: loss must be scalar, got shape " + shape_str(loss->shape));
    }
    loss->ensure_grad();
    loss->grad[0] += real(1);
    tape.run_backward_and_clear();
}

double finite_diff_check(const std::function<TensorPtr(Tape&)>& f,
                         const std::vector<Parameter*>& params,
                         const GradCheckOptions& opts) {
    // repeat-evaluation guard against non-deterministic f
    Tape t1(false), t2(false);
    auto v1 = f(t1);
    auto v2 = f(t2);
    if (!v1->is_scalar()) throw usage_error("finite_diff_check: f must return a scalar");
    if (v1->data != v2->data) {
        throw usage_error("finite_diff_check: f gave different values on repeat evaluation");
    }

    for (auto* p : params) p->value->zero_grad();
    Tape tg(true);
    auto loss = f(tg);
    backward(loss, tg);

    const double h = opts.step;
    double max_rel = 0.0;
    for (auto* p : params) {
        if (p->frozen) continue;
        const std::int64_t n = p->numel();
        std::vector<std::int64_t> indices;
        if (opts.max_elements_per_param > 0 && n > opts.max_elements_per_param) {
            SeededRng pick(opts.select_seed ^ fnv1a(p->name));
            std::set<std::int64_t> chosen;
            while (static_cast<int>(chosen.size()) < opts.max_elements_per_param) {
                chosen.insert(static_cast<std::int64_t>(pick.below(static_cast<std::uint64_t>(n))));
            }
            indices.assign(chosen.begin(), chosen.end());
        } else {
            indices.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) indices[static_cast<std::size_t>(i)] = i;
        }
        std::vector<real> analytic(p->value->grad);
        for (std::int64_t i : indices) {
            auto& slot = p->value->data[static_cast<std::size_t>(i)];
            const real saved = slot;
            slot = saved + static_cast<real>(h);
            Tape tp(false);
            const double vp = static_cast<double>(f(tp)->data[0]);
            slot = saved - static_cast<real>(h);
            Tape tm(false);
            const double vm = static_cast<double>(f(tm)->data[0]);
            slot = saved;
            const double fd = (vp - vm) / (2.0 * h);
            const double an = static_cast<double>(analytic[static_cast<std::size_t>(i)]);
            const double rel = std::abs(an - fd) / (std::abs(fd) + 1e-12);
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace vls
