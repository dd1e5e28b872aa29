// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vls/common.hpp"

namespace vls {

// Dense row-major tensor with an optional gradient buffer. Values are
// immutable once produced by an operation; gradients accumulate additively
// across backward passes until explicitly zeroed.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<real> data;
    std::vector<real> grad; // empty until ensure_grad(); same length as data after
    bool requires_grad = false;

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
    int rank() const { return static_cast<int>(shape.size()); }
    std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    bool is_scalar() const { return numel() == 1; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), real(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), real(0));
    }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<std::int64_t> shape, bool requires_grad = false);
TensorPtr make_tensor(std::vector<std::int64_t> shape, std::vector<real> data,
                      bool requires_grad = false);
TensorPtr scalar_tensor(real v);

// Ordered record of executed operations. Forward execution appends backward
// closures, so reverse iteration is a valid topological order. backward()
// consumes the tape.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    std::size_t size() const { return steps_.size(); }
    void record(std::function<void()> fn) { steps_.push_back(std::move(fn)); }
    void clear() { steps_.clear(); }

    void run_backward_and_clear() {
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
        steps_.clear();
    }

private:
    bool recording_;
    std::vector<std::function<void()>> steps_;
};

// Named, trainable tensor. Freezing removes it from gradient flow entirely:
// no accumulation, no optimizer updates, value bitwise untouched.
struct Parameter {
    std::string name;
    TensorPtr value;
    bool frozen = false;

    Parameter() = default;
    Parameter(std::string n, TensorPtr v) : name(std::move(n)), value(std::move(v)) {
        value->requires_grad = true;
        value->ensure_grad();
    }

    void set_frozen(bool f) {
        frozen = f;
        value->requires_grad = !f;
        if (f) value->zero_grad();
    }

    std::int64_t numel() const { return value->numel(); }
};

namespace ops {

TensorPtr add(Tape& t, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape& t, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Tape& t, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape& t, const TensorPtr& a, real c);
// x[R x D] + bias[D], broadcast over rows.
TensorPtr add_bias(Tape& t, const TensorPtr& x, const TensorPtr& bias);
// Broadcast multiply by a 1-element tensor; differentiable in both inputs.
TensorPtr mul_scalar_tensor(Tape& t, const TensorPtr& a, const TensorPtr& s);

TensorPtr matmul(Tape& t, const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(Tape& t, const TensorPtr& a);
TensorPtr reshape(Tape& t, const TensorPtr& a, std::vector<std::int64_t> shape);
TensorPtr slice_rows(Tape& t, const TensorPtr& a, std::int64_t r0, std::int64_t r1);
TensorPtr slice_cols(Tape& t, const TensorPtr& a, std::int64_t c0, std::int64_t c1);
TensorPtr concat_rows(Tape& t, const std::vector<TensorPtr>& parts);
TensorPtr concat_cols(Tape& t, const std::vector<TensorPtr>& parts);

TensorPtr softmax(Tape& t, const TensorPtr& a, int axis);
// Row softmax under a 0/1 validity mask (same shape as logits, row-major).
// Invalid positions get an additive -1e9 before normalization and come out
// exactly zero; a row with no valid position outputs all zeros.
TensorPtr masked_softmax_rows(Tape& t, const TensorPtr& logits,
                              const std::vector<std::uint8_t>& valid);
TensorPtr layer_norm(Tape& t, const TensorPtr& x, const TensorPtr& gain,
                     const TensorPtr& bias, real eps);
TensorPtr gelu(Tape& t, const TensorPtr& x);
TensorPtr sigmoid(Tape& t, const TensorPtr& x);

// Rows of `table` selected by token id; gradient scatter-adds into the table.
TensorPtr embedding(Tape& t, const TensorPtr& table, const std::vector<int>& ids);
// General element gather from a rank-1 tensor into an arbitrary shape.
TensorPtr gather(Tape& t, const TensorPtr& vec, const std::vector<std::int64_t>& idx,
                 std::vector<std::int64_t> shape);

TensorPtr sum_all(Tape& t, const TensorPtr& a);

// Mean negative log-softmax probability of `targets` over positions whose id
// is not `ignore_id`. All positions ignored yields a constant 0 with no
// gradient flow.
TensorPtr cross_entropy_with_logits(Tape& t, const TensorPtr& logits,
                                    const std::vector<int>& targets, int ignore_id);

// Scaled dot-product attention: softmax(q k^T / sqrt(d) + bias) v under a
// validity mask over [Lq x Lk]. `bias` may be null.
TensorPtr attention(Tape& t, const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                    const std::vector<std::uint8_t>& valid, const TensorPtr& bias);

} // namespace ops

// Reverse-mode sweep from a scalar loss. Gradients accumulate additively into
// every reachable tensor with requires_grad; the tape is consumed.
void backward(const TensorPtr& loss, Tape& tape);

struct GradCheckOptions {
    double step = 1e-5;
    // 0 checks every element; otherwise a deterministic random subset per
    // parameter, chosen with select_seed.
    int max_elements_per_param = 0;
    std::uint64_t select_seed = 0;
};

// Central-difference verification oracle: rebuilds the forward through `f`
// around perturbed parameter entries and returns the max relative error
// between analytic and numeric gradients. Throws usage_error if two
// evaluations of f disagree bitwise (non-deterministic f).
double finite_diff_check(const std::function<TensorPtr(Tape&)>& f,
                         const std::vector<Parameter*>& params,
                         const GradCheckOptions& opts = {});

} // namespace vls
