#pragma once

#include <cstdint>

#include "fedprune/tensor.hpp"

namespace fedprune {

/// Per-parameter Adam moment buffers and step counter.
struct AdamState {
    TensorBuffer m;
    TensorBuffer v;
    std::uint64_t t = 0;
};

AdamState make_adam_state(const Shape& shape);

/// One bias-corrected Adam update, in place. Moment buffers must shape-match
/// the parameter; the step counter advances even for a zero gradient.
void adam_step(TensorBuffer& param, const TensorBuffer& grad, AdamState& state,
               double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

}  // namespace fedprune
