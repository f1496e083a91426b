#include "fedprune/layers.hpp"

namespace fedprune {

ConvLayer make_conv(std::string name, std::size_t out_ch, std::size_t in_ch,
                    std::size_t kernel, autograd::Padding padding,
                    bool prunable) {
    ConvLayer l;
    l.name = std::move(name);
    l.w = TensorBuffer::zeros({out_ch, in_ch, kernel, kernel});
    l.b = TensorBuffer::zeros({out_ch});
    l.padding = padding;
    l.stride = 1;
    l.prunable = prunable;
    return l;
}

DenseLayer make_dense(std::string name, std::size_t in_f, std::size_t out_f) {
    DenseLayer l;
    l.name = std::move(name);
    l.w = TensorBuffer::zeros({in_f, out_f});
    l.b = TensorBuffer::zeros({out_f});
    return l;
}

}  // namespace fedprune
