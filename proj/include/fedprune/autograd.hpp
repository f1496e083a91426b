#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "fedprune/tensor.hpp"

namespace fedprune::autograd {

class Tape;

/// A value in the computation graph. grad stays empty until a gradient is
/// first accumulated into it.
struct VarData {
    TensorBuffer value;
    TensorBuffer grad;
    bool requires_grad = false;
    const Tape* tape = nullptr;  // tape that produced this value, if any
    std::uint64_t epoch = 0;
};

using Var = std::shared_ptr<VarData>;

Var make_var(TensorBuffer value, bool requires_grad = false);

/// Allocates v->grad as zeros matching v->value if not yet allocated.
TensorBuffer& ensure_grad(const Var& v);

/// v->grad += delta (length n must equal v->value.size()).
void accumulate_grad(const Var& v, const double* delta, std::size_t n);

/// Resets v->grad to zeros if allocated; no-op otherwise.
void zero_grad(const Var& v);

/// Ordered record of one forward pass. backward() replays the recorded
/// closures in reverse creation order (creation order is a topological
/// order), then clears the record; replaying a pass twice is a state error.
class Tape {
public:
    void record(std::function<void()> fn);

    /// Seeds d(loss)/d(loss) = 1 and propagates to every recorded operand.
    /// loss must be scalar. A constant loss (never produced by an op) yields
    /// all-zero gradients; a loss from a different tape or an already
    /// consumed pass throws StateError.
    void backward(const Var& loss);

    std::size_t size() const { return nodes_.size(); }
    std::uint64_t epoch() const { return epoch_; }

private:
    std::vector<std::function<void()>> nodes_;
    std::uint64_t epoch_ = 1;
};

enum class Padding { valid, same };

/// Pad cells for one side; same-padding requires an odd kernel.
std::size_t pad_amount(Padding padding, std::size_t kernel);

// Forward ops. tape may be null for inference-only evaluation; closures are
// recorded only when tape is non-null and some input requires a gradient.
// Each op validates operand shapes and the finiteness of what it computes.

/// x: [B,C,H,W], w: [N,C,K,K], b: [N] -> [B,N,H',W']
Var conv2d(Tape* tape, const Var& x, const Var& w, const Var& b,
           Padding padding, std::size_t stride = 1);

/// x: [B,F], w: [F,O], b: [O] -> [B,O]
Var dense(Tape* tape, const Var& x, const Var& w, const Var& b);

Var relu(Tape* tape, const Var& x);

/// x: [B,C,H,W] -> [B,C,H',W']; padded cells never win the max.
Var maxpool(Tape* tape, const Var& x, std::size_t kernel, std::size_t stride,
            std::size_t pad = 0);

/// Element-wise a + b of identical shapes.
Var add(Tape* tape, const Var& a, const Var& b);

/// Concatenates [B,C_i,H,W] inputs along the channel axis.
Var concat_channels(Tape* tape, const std::vector<Var>& xs);

/// [B,C,H,W] -> [B,C*H*W]; flat index of (c,h,w) is c*H*W + h*W + w.
Var flatten(Tape* tape, const Var& x);

/// Scalar sum of all elements.
Var sum(Tape* tape, const Var& x);

/// Mean over the batch of -log softmax(logits)[label], stabilized by
/// max-subtraction. logits: [B,L]; labels: B ints in [0,L).
Var cross_entropy(Tape* tape, const Var& logits, const std::vector<int>& labels);

}  // namespace fedprune::autograd
