#pragma once

#include <string>
#include <variant>
#include <vector>

#include "fedprune/autograd.hpp"
#include "fedprune/tensor.hpp"

namespace fedprune {

/// 2-d convolution layer. prunable marks whether the output filter count may
/// change; it is false for any conv whose output feeds an element-wise
/// residual addition, where removing filters would break the skip shape.
struct ConvLayer {
    std::string name;
    TensorBuffer w;  // [N,C,K,K]
    TensorBuffer b;  // [N]
    autograd::Padding padding = autograd::Padding::same;
    std::size_t stride = 1;
    bool prunable = true;

    std::size_t out_channels() const { return w.dim(0); }
    std::size_t in_channels() const { return w.dim(1); }
    std::size_t kernel() const { return w.dim(2); }
};

ConvLayer make_conv(std::string name, std::size_t out_ch, std::size_t in_ch,
                    std::size_t kernel, autograd::Padding padding,
                    bool prunable);

struct DenseLayer {
    std::string name;
    TensorBuffer w;  // [F,O]
    TensorBuffer b;  // [O]

    std::size_t in_features() const { return w.dim(0); }
    std::size_t out_features() const { return w.dim(1); }
};

DenseLayer make_dense(std::string name, std::size_t in_f, std::size_t out_f);

struct PoolLayer {
    std::size_t kernel = 2;
    std::size_t stride = 2;
    std::size_t pad = 0;
};

struct ReluLayer {};
struct FlattenLayer {};

/// x -> relu(conv2(relu(conv1(x))) + x). conv2 keeps the skip channel count.
struct ResidualBlock {
    ConvLayer conv1;  // prunable
    ConvLayer conv2;  // never prunable: its output feeds the addition
};

/// One inception branch: optional stride-1 max pool first (the
/// pool-projection branch), then a conv chain with relu after every conv.
struct InceptionBranch {
    std::vector<ConvLayer> convs;
    bool pool_first = false;
    PoolLayer pre_pool{3, 1, 1};
};

/// Branch outputs are concatenated along the channel axis; every branch conv
/// is prunable independently.
struct InceptionBlock {
    std::vector<InceptionBranch> branches;
};

using GraphNode = std::variant<ConvLayer, ResidualBlock, InceptionBlock,
                               PoolLayer, ReluLayer, FlattenLayer, DenseLayer>;

}  // namespace fedprune
