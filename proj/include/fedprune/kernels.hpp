#pragma once

#include <cstddef>
#include <cstdint>

// Low-level compute kernels on raw double buffers. Every kernel comes in two
// flavours selected by Exec: a straightforward serial reference and an OpenMP
// implementation. Both accumulate partial sums in the same fixed order, so for
// identical inputs they produce equal results regardless of thread count.
// Callers are responsible for shape validation; kernels assume consistent dims.

namespace fedprune::kernels {

enum class Exec { serial, parallel };

// Process-wide default used by callers that do not pass an explicit Exec.
Exec default_exec();
void set_default_exec(Exec ex);

// Dimensions for a 2-d convolution over NCHW input with [N,C,K,K] weights.
struct ConvDims {
    std::size_t batch = 0;
    std::size_t in_ch = 0;
    std::size_t in_h = 0;
    std::size_t in_w = 0;
    std::size_t out_ch = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t out_h = 0;
    std::size_t out_w = 0;
};

// Computes output dims; throws ShapeError if the window never fits.
ConvDims conv_dims(std::size_t batch, std::size_t in_ch, std::size_t in_h,
                   std::size_t in_w, std::size_t out_ch, std::size_t kernel,
                   std::size_t stride, std::size_t pad);

// out[b,n,ho,wo] = bias[n] + sum_{c,kh,kw} in[b,c,ho*s+kh-p,wo*s+kw-p] * w[n,c,kh,kw]
// bias may be null.
void conv2d_forward(const double* in, const double* w, const double* bias,
                    double* out, const ConvDims& d, Exec ex);

// din[b,c,h,wi] = sum over output positions whose window covers (h,wi).
void conv2d_backward_input(const double* dout, const double* w, double* din,
                           const ConvDims& d, Exec ex);

// dw[n,c,kh,kw] = sum_{b,ho,wo} dout[b,n,ho,wo] * in[b,c,ho*s+kh-p,wo*s+kw-p]
void conv2d_backward_weights(const double* dout, const double* in, double* dw,
                             const ConvDims& d, Exec ex);

// db[n] = sum_{b,ho,wo} dout[b,n,ho,wo]
void conv2d_backward_bias(const double* dout, double* db, const ConvDims& d,
                          Exec ex);

// Dense weights are laid out [F,O]: w[f*out_f + o].
// out[b,o] = bias[o] + sum_f in[b,f] * w[f,o]; bias may be null.
void dense_forward(const double* in, const double* w, const double* bias,
                   double* out, std::size_t batch, std::size_t in_f,
                   std::size_t out_f, Exec ex);

void dense_backward_input(const double* dout, const double* w, double* din,
                          std::size_t batch, std::size_t in_f,
                          std::size_t out_f, Exec ex);

void dense_backward_weights(const double* dout, const double* in, double* dw,
                            std::size_t batch, std::size_t in_f,
                            std::size_t out_f, Exec ex);

void dense_backward_bias(const double* dout, double* db, std::size_t batch,
                         std::size_t out_f, Exec ex);

// Dimensions for max pooling over NCHW input; channels pass through unchanged.
struct PoolDims {
    std::size_t batch = 0;
    std::size_t ch = 0;
    std::size_t in_h = 0;
    std::size_t in_w = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t out_h = 0;
    std::size_t out_w = 0;
};

PoolDims pool_dims(std::size_t batch, std::size_t ch, std::size_t in_h,
                   std::size_t in_w, std::size_t kernel, std::size_t stride,
                   std::size_t pad);

// Padded cells never win the max. argmax records, per output element, the flat
// index of the winning input element (first occurrence on ties, scanning the
// window row-major), which backward uses to route gradients.
void maxpool_forward(const double* in, double* out, std::size_t* argmax,
                     const PoolDims& d, Exec ex);

// din must be zeroed by the caller before the call.
void maxpool_backward(const double* dout, const std::size_t* argmax,
                      double* din, const PoolDims& d, Exec ex);

void relu_forward(const double* in, double* out, std::size_t n, Exec ex);

// din[i] = dout[i] if in[i] > 0 else 0.
void relu_backward(const double* in, const double* dout, double* din,
                   std::size_t n, Exec ex);

}  // namespace fedprune::kernels
