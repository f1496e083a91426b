#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedprune/layers.hpp"

namespace fedprune {

/// Feed-forward model as an ordered node list. input_shape is [C,H,W]
/// (batch excluded). Copying a ModelGraph yields a fully independent model.
struct ModelGraph {
    std::vector<GraphNode> nodes;
    Shape input_shape;
    std::size_t num_classes = 0;
};

/// Families: "conv2" (conv-pool twice + classifier), "resnet7" (stem + three
/// residual blocks), "inception9" (three blocks of 1x1 / KxK / pool-proj
/// branches). widths empty means the family default.
struct ArchSpec {
    std::string family = "conv2";
    std::vector<std::size_t> widths;
    std::size_t kernel = 5;
    Shape input_shape;
    std::size_t num_classes = 0;
};

ModelGraph build_architecture(const ArchSpec& spec);

/// Fan-in-scaled uniform init (limit sqrt(3/fan_in), so stddev 1/sqrt(fan_in));
/// biases zero. Each layer draws from its own stream, so the result is
/// independent of traversal batching and stable across runs for a given seed.
void init_weights(ModelGraph& g, std::uint64_t seed);

/// Total weight + bias element count.
std::size_t count_params(const ModelGraph& g);

struct FlopsBreakdown {
    unsigned long long conv = 0;
    unsigned long long dense = 0;
    unsigned long long other = 0;  // pool, activation, residual add

    unsigned long long total() const { return conv + dense + other; }
};

/// Per-sample forward cost. Convention: one multiply-accumulate = 2 FLOPS;
/// conv contributes 2*K*K*C*H'*W'*N, dense 2*F*O, pool/relu/add one op per
/// output element, reshapes zero.
FlopsBreakdown count_flops(const ModelGraph& g);

/// Runs shape inference end to end; throws ShapeError on any inconsistency.
void check_shapes(const ModelGraph& g);

/// Every parameter tensor in traversal order (conv w, conv b, dense w,
/// dense b; residual blocks conv1 then conv2; inception branches in order).
std::vector<TensorBuffer*> parameter_list(ModelGraph& g);
std::vector<const TensorBuffer*> parameter_list(const ModelGraph& g);

/// Output filter count of every conv layer, traversal order.
std::vector<std::size_t> conv_filter_counts(const ModelGraph& g);

/// Names of every conv layer, traversal order (parallel to the above).
std::vector<std::string> conv_layer_names(const ModelGraph& g);

/// Wraps copies of all parameters into Vars, in parameter_list order.
std::vector<autograd::Var> bind_params(const ModelGraph& g, bool requires_grad);

/// Copies Var values back into the graph's parameter tensors.
void assign_params(ModelGraph& g, const std::vector<autograd::Var>& params);

/// Runs the graph over explicit parameter Vars (parameter_list order).
/// Records on tape when non-null. Returns the logits Var.
autograd::Var forward_pass(const ModelGraph& g, autograd::Tape* tape,
                           const autograd::Var& input,
                           const std::vector<autograd::Var>& params);

/// Inference convenience: batch [B,C,H,W] -> logits [B, num_classes].
TensorBuffer forward(const ModelGraph& g, const TensorBuffer& batch);

}  // namespace fedprune
