#pragma once

// Constructions for the zero-filter equivalence check: plant one exactly-zero
// filter in a chosen prunable conv layer, make every other prunable layer
// score-uniform so no boundary can touch it, and pick a k that removes exactly
// the planted filter. Removing a filter whose weights and bias are all zero
// must leave the network function unchanged.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "fedprune/model.hpp"
#include "fedprune/rng.hpp"
#include "fedprune/tensor.hpp"

namespace prune_equiv {

using fedprune::ConvLayer;
using fedprune::GraphNode;
using fedprune::InceptionBlock;
using fedprune::InceptionBranch;
using fedprune::ModelGraph;
using fedprune::ResidualBlock;
using fedprune::Rng;
using fedprune::TensorBuffer;

/// Copies filter 0 onto every other filter, so all scores coincide and the
/// layer survives any k untouched.
inline void make_score_uniform(ConvLayer& c) {
    const std::size_t n_filters = c.out_channels();
    const std::size_t per = c.w.size() / n_filters;
    for (std::size_t n = 1; n < n_filters; ++n)
        std::copy(c.w.data.begin(), c.w.data.begin() + (std::ptrdiff_t)per,
                  c.w.data.begin() + (std::ptrdiff_t)(n * per));
}

/// Prunable conv layers in traversal order (mutable access into the graph).
inline std::vector<ConvLayer*> prunable_convs(ModelGraph& g) {
    std::vector<ConvLayer*> out;
    for (GraphNode& node : g.nodes) {
        if (auto* c = std::get_if<ConvLayer>(&node)) {
            if (c->prunable) out.push_back(c);
        } else if (auto* r = std::get_if<ResidualBlock>(&node)) {
            if (r->conv1.prunable) out.push_back(&r->conv1);
        } else if (auto* b = std::get_if<InceptionBlock>(&node)) {
            for (InceptionBranch& br : b->branches)
                for (ConvLayer& c : br.convs)
                    if (c.prunable) out.push_back(&c);
        }
    }
    return out;
}

struct ZeroPlant {
    std::size_t target = 0;  // index into prunable_convs order
    std::size_t filter = 0;
    double k = 1.0;
};

/// Makes every prunable conv score-uniform, zeroes the weights and bias of
/// one filter in the target layer, and returns a k for which the boundary
/// removes exactly that filter. The target layer must have at least three
/// filters: with the others uniform at score s the zero filter is cut while
/// the rest survive exactly when 1/sqrt(N-1) <= k < sqrt(N-1).
inline ZeroPlant plant_zero_filter(ModelGraph& g, std::size_t target,
                                   std::size_t filter) {
    std::vector<ConvLayer*> convs = prunable_convs(g);
    if (target >= convs.size()) throw std::invalid_argument("target out of range");
    ConvLayer& layer = *convs[target];
    const std::size_t n_filters = layer.out_channels();
    if (n_filters < 3) throw std::invalid_argument("target layer too narrow");
    if (filter >= n_filters) throw std::invalid_argument("filter out of range");

    for (ConvLayer* c : convs) make_score_uniform(*c);
    const std::size_t per = layer.w.size() / n_filters;
    std::fill(layer.w.data.begin() + (std::ptrdiff_t)(filter * per),
              layer.w.data.begin() + (std::ptrdiff_t)((filter + 1) * per), 0.0);
    layer.b.data[filter] = 0.0;

    const double root = std::sqrt((double)(n_filters - 1));
    return ZeroPlant{target, filter, 0.5 * (1.0 / root + root)};
}

/// Random batches through both models; returns the largest absolute logit gap.
inline double max_forward_gap(const ModelGraph& a, const ModelGraph& b,
                              std::size_t batches, std::size_t batch_size,
                              Rng& rng) {
    double worst = 0.0;
    fedprune::Shape shape = {batch_size, a.input_shape[0], a.input_shape[1],
                             a.input_shape[2]};
    for (std::size_t i = 0; i < batches; ++i) {
        TensorBuffer x = TensorBuffer::zeros(shape);
        for (double& v : x.data) v = rng.uniform();
        TensorBuffer ya = fedprune::forward(a, x);
        TensorBuffer yb = fedprune::forward(b, x);
        for (std::size_t j = 0; j < ya.size(); ++j)
            worst = std::max(worst, std::fabs(ya.data[j] - yb.data[j]));
    }
    return worst;
}

}  // namespace prune_equiv
