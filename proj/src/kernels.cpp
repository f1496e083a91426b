#include "fedprune/kernels.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "fedprune/errors.hpp"

namespace fedprune::kernels {

namespace {
Exec g_default_exec = Exec::parallel;
}

Exec default_exec() { return g_default_exec; }
void set_default_exec(Exec ex) { g_default_exec = ex; }

namespace {

using std::size_t;
using i64 = std::int64_t;

// Copies one image [C,H,W] into a zero-padded [C,H+2p,W+2p] buffer.
void pad_image(const double* src, double* dst, size_t ch, size_t h, size_t w,
               size_t pad) {
    const size_t hp = h + 2 * pad;
    const size_t wp = w + 2 * pad;
    for (size_t i = 0; i < ch * hp * wp; ++i) dst[i] = 0.0;
    for (size_t c = 0; c < ch; ++c)
        for (size_t y = 0; y < h; ++y) {
            const double* s = src + (c * h + y) * w;
            double* t = dst + (c * hp + y + pad) * wp + pad;
            for (size_t x = 0; x < w; ++x) t[x] = s[x];
        }
}

// Zero-pads a whole batch [B,C,H,W] -> [B,C,H+2p,W+2p].
std::vector<double> pad_batch(const double* in, const ConvDims& d, Exec ex) {
    const size_t hp = d.in_h + 2 * d.pad;
    const size_t wp = d.in_w + 2 * d.pad;
    std::vector<double> out(d.batch * d.in_ch * hp * wp);
    if (ex == Exec::parallel) {
#pragma omp parallel for
        for (i64 b = 0; b < (i64)d.batch; ++b)
            pad_image(in + (size_t)b * d.in_ch * d.in_h * d.in_w,
                      out.data() + (size_t)b * d.in_ch * hp * wp, d.in_ch,
                      d.in_h, d.in_w, d.pad);
    } else {
        for (size_t b = 0; b < d.batch; ++b)
            pad_image(in + b * d.in_ch * d.in_h * d.in_w,
                      out.data() + b * d.in_ch * hp * wp, d.in_ch, d.in_h,
                      d.in_w, d.pad);
    }
    return out;
}

size_t window_count(size_t in, size_t kernel, size_t stride, size_t pad,
                    const char* what) {
    if (kernel == 0 || stride == 0)
        throw ShapeError(std::string(what) + ": kernel and stride must be positive");
    if (in + 2 * pad < kernel)
        throw ShapeError(std::string(what) + ": window larger than padded input");
    return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace

ConvDims conv_dims(size_t batch, size_t in_ch, size_t in_h, size_t in_w,
                   size_t out_ch, size_t kernel, size_t stride, size_t pad) {
    ConvDims d;
    d.batch = batch;
    d.in_ch = in_ch;
    d.in_h = in_h;
    d.in_w = in_w;
    d.out_ch = out_ch;
    d.kernel = kernel;
    d.stride = stride;
    d.pad = pad;
    d.out_h = window_count(in_h, kernel, stride, pad, "conv2d");
    d.out_w = window_count(in_w, kernel, stride, pad, "conv2d");
    return d;
}

PoolDims pool_dims(size_t batch, size_t ch, size_t in_h, size_t in_w,
                   size_t kernel, size_t stride, size_t pad) {
    if (pad >= kernel)
        throw ShapeError("maxpool: pad must be smaller than kernel");
    PoolDims d;
    d.batch = batch;
    d.ch = ch;
    d.in_h = in_h;
    d.in_w = in_w;
    d.kernel = kernel;
    d.stride = stride;
    d.pad = pad;
    d.out_h = window_count(in_h, kernel, stride, pad, "maxpool");
    d.out_w = window_count(in_w, kernel, stride, pad, "maxpool");
    return d;
}

// ---- conv2d forward ----

namespace {

void conv2d_forward_serial(const double* in, const double* w,
                           const double* bias, double* out, const ConvDims& d) {
    for (size_t b = 0; b < d.batch; ++b)
        for (size_t n = 0; n < d.out_ch; ++n)
            for (size_t ho = 0; ho < d.out_h; ++ho)
                for (size_t wo = 0; wo < d.out_w; ++wo) {
                    double acc = bias ? bias[n] : 0.0;
                    for (size_t c = 0; c < d.in_ch; ++c)
                        for (size_t kh = 0; kh < d.kernel; ++kh)
                            for (size_t kw = 0; kw < d.kernel; ++kw) {
                                const i64 y = (i64)(ho * d.stride + kh) - (i64)d.pad;
                                const i64 x = (i64)(wo * d.stride + kw) - (i64)d.pad;
                                if (y < 0 || y >= (i64)d.in_h || x < 0 ||
                                    x >= (i64)d.in_w)
                                    continue;
                                acc += in[((b * d.in_ch + c) * d.in_h + (size_t)y) *
                                              d.in_w +
                                          (size_t)x] *
                                       w[((n * d.in_ch + c) * d.kernel + kh) *
                                             d.kernel +
                                         kw];
                            }
                    out[((b * d.out_ch + n) * d.out_h + ho) * d.out_w + wo] = acc;
                }
}

void conv2d_forward_parallel(const double* in, const double* w,
                             const double* bias, double* out,
                             const ConvDims& d) {
    const std::vector<double> pad = pad_batch(in, d, Exec::parallel);
    const size_t hp = d.in_h + 2 * d.pad;
    const size_t wp = d.in_w + 2 * d.pad;
    // Pure gather: each (b,n) pair owns a disjoint slice of out.
#pragma omp parallel for collapse(2)
    for (i64 b = 0; b < (i64)d.batch; ++b)
        for (i64 n = 0; n < (i64)d.out_ch; ++n) {
            const double* img = pad.data() + (size_t)b * d.in_ch * hp * wp;
            const double* wn = w + (size_t)n * d.in_ch * d.kernel * d.kernel;
            double* on =
                out + ((size_t)b * d.out_ch + (size_t)n) * d.out_h * d.out_w;
            for (size_t ho = 0; ho < d.out_h; ++ho)
                for (size_t wo = 0; wo < d.out_w; ++wo) {
                    double acc = bias ? bias[(size_t)n] : 0.0;
                    for (size_t c = 0; c < d.in_ch; ++c)
                        for (size_t kh = 0; kh < d.kernel; ++kh) {
                            const double* row = img + (c * hp + ho * d.stride + kh) * wp +
                                                wo * d.stride;
                            const double* wr = wn + (c * d.kernel + kh) * d.kernel;
                            for (size_t kw = 0; kw < d.kernel; ++kw)
                                acc += row[kw] * wr[kw];
                        }
                    on[ho * d.out_w + wo] = acc;
                }
        }
}

}  // namespace

void conv2d_forward(const double* in, const double* w, const double* bias,
                    double* out, const ConvDims& d, Exec ex) {
    if (ex == Exec::parallel)
        conv2d_forward_parallel(in, w, bias, out, d);
    else
        conv2d_forward_serial(in, w, bias, out, d);
}

// ---- conv2d backward: input ----

namespace {

void conv2d_backward_input_serial(const double* dout, const double* w,
                                  double* din, const ConvDims& d) {
    for (size_t i = 0; i < d.batch * d.in_ch * d.in_h * d.in_w; ++i) din[i] = 0.0;
    for (size_t b = 0; b < d.batch; ++b)
        for (size_t n = 0; n < d.out_ch; ++n)
            for (size_t ho = 0; ho < d.out_h; ++ho)
                for (size_t wo = 0; wo < d.out_w; ++wo) {
                    const double g =
                        dout[((b * d.out_ch + n) * d.out_h + ho) * d.out_w + wo];
                    for (size_t c = 0; c < d.in_ch; ++c)
                        for (size_t kh = 0; kh < d.kernel; ++kh)
                            for (size_t kw = 0; kw < d.kernel; ++kw) {
                                const i64 y = (i64)(ho * d.stride + kh) - (i64)d.pad;
                                const i64 x = (i64)(wo * d.stride + kw) - (i64)d.pad;
                                if (y < 0 || y >= (i64)d.in_h || x < 0 ||
                                    x >= (i64)d.in_w)
                                    continue;
                                din[((b * d.in_ch + c) * d.in_h + (size_t)y) *
                                        d.in_w +
                                    (size_t)x] +=
                                    g * w[((n * d.in_ch + c) * d.kernel + kh) *
                                              d.kernel +
                                          kw];
                            }
                }
}

void conv2d_backward_input_parallel(const double* dout, const double* w,
                                    double* din, const ConvDims& d) {
    const size_t hp = d.in_h + 2 * d.pad;
    const size_t wp = d.in_w + 2 * d.pad;
    // Scatter confined to a per-image private buffer; images are independent,
    // and within one image the accumulation order matches the serial kernel.
#pragma omp parallel for
    for (i64 b = 0; b < (i64)d.batch; ++b) {
        std::vector<double> buf(d.in_ch * hp * wp, 0.0);
        for (size_t n = 0; n < d.out_ch; ++n)
            for (size_t ho = 0; ho < d.out_h; ++ho)
                for (size_t wo = 0; wo < d.out_w; ++wo) {
                    const double g =
                        dout[(((size_t)b * d.out_ch + n) * d.out_h + ho) * d.out_w +
                             wo];
                    for (size_t c = 0; c < d.in_ch; ++c)
                        for (size_t kh = 0; kh < d.kernel; ++kh) {
                            double* row = buf.data() +
                                          (c * hp + ho * d.stride + kh) * wp +
                                          wo * d.stride;
                            const double* wr =
                                w + ((n * d.in_ch + c) * d.kernel + kh) * d.kernel;
                            for (size_t kw = 0; kw < d.kernel; ++kw)
                                row[kw] += g * wr[kw];
                        }
                }
        double* dst = din + (size_t)b * d.in_ch * d.in_h * d.in_w;
        for (size_t c = 0; c < d.in_ch; ++c)
            for (size_t y = 0; y < d.in_h; ++y)
                for (size_t x = 0; x < d.in_w; ++x)
                    dst[(c * d.in_h + y) * d.in_w + x] =
                        buf[(c * hp + y + d.pad) * wp + x + d.pad];
    }
}

}  // namespace

void conv2d_backward_input(const double* dout, const double* w, double* din,
                           const ConvDims& d, Exec ex) {
    if (ex == Exec::parallel)
        conv2d_backward_input_parallel(dout, w, din, d);
    else
        conv2d_backward_input_serial(dout, w, din, d);
}

// ---- conv2d backward: weights ----

namespace {

void conv2d_backward_weights_serial(const double* dout, const double* in,
                                    double* dw, const ConvDims& d) {
    for (size_t n = 0; n < d.out_ch; ++n)
        for (size_t c = 0; c < d.in_ch; ++c)
            for (size_t kh = 0; kh < d.kernel; ++kh)
                for (size_t kw = 0; kw < d.kernel; ++kw) {
                    double acc = 0.0;
                    for (size_t b = 0; b < d.batch; ++b)
                        for (size_t ho = 0; ho < d.out_h; ++ho)
                            for (size_t wo = 0; wo < d.out_w; ++wo) {
                                const i64 y = (i64)(ho * d.stride + kh) - (i64)d.pad;
                                const i64 x = (i64)(wo * d.stride + kw) - (i64)d.pad;
                                if (y < 0 || y >= (i64)d.in_h || x < 0 ||
                                    x >= (i64)d.in_w)
                                    continue;
                                acc += dout[((b * d.out_ch + n) * d.out_h + ho) *
                                                d.out_w +
                                            wo] *
                                       in[((b * d.in_ch + c) * d.in_h + (size_t)y) *
                                              d.in_w +
                                          (size_t)x];
                            }
                    dw[((n * d.in_ch + c) * d.kernel + kh) * d.kernel + kw] = acc;
                }
}

void conv2d_backward_weights_parallel(const double* dout, const double* in,
                                      double* dw, const ConvDims& d) {
    const std::vector<double> pad = pad_batch(in, d, Exec::parallel);
    const size_t hp = d.in_h + 2 * d.pad;
    const size_t wp = d.in_w + 2 * d.pad;
    // Gather: each (n,c) pair owns a disjoint slice of dw.
#pragma omp parallel for collapse(2)
    for (i64 n = 0; n < (i64)d.out_ch; ++n)
        for (i64 c = 0; c < (i64)d.in_ch; ++c)
            for (size_t kh = 0; kh < d.kernel; ++kh)
                for (size_t kw = 0; kw < d.kernel; ++kw) {
                    double acc = 0.0;
                    for (size_t b = 0; b < d.batch; ++b) {
                        const double* img =
                            pad.data() + (b * d.in_ch + (size_t)c) * hp * wp;
                        const double* g =
                            dout + (b * d.out_ch + (size_t)n) * d.out_h * d.out_w;
                        for (size_t ho = 0; ho < d.out_h; ++ho) {
                            const double* row =
                                img + (ho * d.stride + kh) * wp + kw;
                            for (size_t wo = 0; wo < d.out_w; ++wo)
                                acc += g[ho * d.out_w + wo] * row[wo * d.stride];
                        }
                    }
                    dw[(((size_t)n * d.in_ch + (size_t)c) * d.kernel + kh) *
                           d.kernel +
                       kw] = acc;
                }
}

}  // namespace

void conv2d_backward_weights(const double* dout, const double* in, double* dw,
                             const ConvDims& d, Exec ex) {
    if (ex == Exec::parallel)
        conv2d_backward_weights_parallel(dout, in, dw, d);
    else
        conv2d_backward_weights_serial(dout, in, dw, d);
}

// ---- conv2d backward: bias ----

void conv2d_backward_bias(const double* dout, double* db, const ConvDims& d,
                          Exec ex) {
    const size_t plane = d.out_h * d.out_w;
    if (ex == Exec::parallel) {
#pragma omp parallel for
        for (i64 n = 0; n < (i64)d.out_ch; ++n) {
            double acc = 0.0;
            for (size_t b = 0; b < d.batch; ++b) {
                const double* g = dout + (b * d.out_ch + (size_t)n) * plane;
                for (size_t i = 0; i < plane; ++i) acc += g[i];
            }
            db[(size_t)n] = acc;
        }
    } else {
        for (size_t n = 0; n < d.out_ch; ++n) {
            double acc = 0.0;
            for (size_t b = 0; b < d.batch; ++b) {
                const double* g = dout + (b * d.out_ch + n) * plane;
                for (size_t i = 0; i < plane; ++i) acc += g[i];
            }
            db[n] = acc;
        }
    }
}

// ---- dense ----

void dense_forward(const double* in, const double* w, const double* bias,
                   double* out, size_t batch, size_t in_f, size_t out_f,
                   Exec ex) {
    if (ex == Exec::parallel) {
#pragma omp parallel for collapse(2)
        for (i64 b = 0; b < (i64)batch; ++b)
            for (i64 o = 0; o < (i64)out_f; ++o) {
                double acc = bias ? bias[(size_t)o] : 0.0;
                const double* x = in + (size_t)b * in_f;
                for (size_t f = 0; f < in_f; ++f)
                    acc += x[f] * w[f * out_f + (size_t)o];
                out[(size_t)b * out_f + (size_t)o] = acc;
            }
    } else {
        for (size_t b = 0; b < batch; ++b)
            for (size_t o = 0; o < out_f; ++o) {
                double acc = bias ? bias[o] : 0.0;
                const double* x = in + b * in_f;
                for (size_t f = 0; f < in_f; ++f) acc += x[f] * w[f * out_f + o];
                out[b * out_f + o] = acc;
            }
    }
}

void dense_backward_input(const double* dout, const double* w, double* din,
                          size_t batch, size_t in_f, size_t out_f, Exec ex) {
    if (ex == Exec::parallel) {
#pragma omp parallel for collapse(2)
        for (i64 b = 0; b < (i64)batch; ++b)
            for (i64 f = 0; f < (i64)in_f; ++f) {
                double acc = 0.0;
                const double* g = dout + (size_t)b * out_f;
                const double* wr = w + (size_t)f * out_f;
                for (size_t o = 0; o < out_f; ++o) acc += g[o] * wr[o];
                din[(size_t)b * in_f + (size_t)f] = acc;
            }
    } else {
        for (size_t b = 0; b < batch; ++b)
            for (size_t f = 0; f < in_f; ++f) {
                double acc = 0.0;
                const double* g = dout + b * out_f;
                const double* wr = w + f * out_f;
                for (size_t o = 0; o < out_f; ++o) acc += g[o] * wr[o];
                din[b * in_f + f] = acc;
            }
    }
}

void dense_backward_weights(const double* dout, const double* in, double* dw,
                            size_t batch, size_t in_f, size_t out_f, Exec ex) {
    if (ex == Exec::parallel) {
#pragma omp parallel for collapse(2)
        for (i64 f = 0; f < (i64)in_f; ++f)
            for (i64 o = 0; o < (i64)out_f; ++o) {
                double acc = 0.0;
                for (size_t b = 0; b < batch; ++b)
                    acc += dout[b * out_f + (size_t)o] * in[b * in_f + (size_t)f];
                dw[(size_t)f * out_f + (size_t)o] = acc;
            }
    } else {
        for (size_t f = 0; f < in_f; ++f)
            for (size_t o = 0; o < out_f; ++o) {
                double acc = 0.0;
                for (size_t b = 0; b < batch; ++b)
                    acc += dout[b * out_f + o] * in[b * in_f + f];
                dw[f * out_f + o] = acc;
            }
    }
}

void dense_backward_bias(const double* dout, double* db, size_t batch,
                         size_t out_f, Exec ex) {
    if (ex == Exec::parallel) {
#pragma omp parallel for
        for (i64 o = 0; o < (i64)out_f; ++o) {
            double acc = 0.0;
            for (size_t b = 0; b < batch; ++b) acc += dout[b * out_f + (size_t)o];
            db[(size_t)o] = acc;
        }
    } else {
        for (size_t o = 0; o < out_f; ++o) {
            double acc = 0.0;
            for (size_t b = 0; b < batch; ++b) acc += dout[b * out_f + o];
            db[o] = acc;
        }
    }
}

// ---- max pooling ----

namespace {

void maxpool_plane(const double* in, double* out, size_t* argmax,
                   const PoolDims& d, size_t b, size_t c) {
    const double* img = in + (b * d.ch + c) * d.in_h * d.in_w;
    const size_t base = (b * d.ch + c) * d.in_h * d.in_w;
    for (size_t ho = 0; ho < d.out_h; ++ho)
        for (size_t wo = 0; wo < d.out_w; ++wo) {
            double best = -std::numeric_limits<double>::infinity();
            size_t best_idx = 0;
            bool found = false;
            for (size_t kh = 0; kh < d.kernel; ++kh)
                for (size_t kw = 0; kw < d.kernel; ++kw) {
                    const i64 y = (i64)(ho * d.stride + kh) - (i64)d.pad;
                    const i64 x = (i64)(wo * d.stride + kw) - (i64)d.pad;
                    if (y < 0 || y >= (i64)d.in_h || x < 0 || x >= (i64)d.in_w)
                        continue;
                    const double v = img[(size_t)y * d.in_w + (size_t)x];
                    if (!found || v > best) {
                        best = v;
                        best_idx = base + (size_t)y * d.in_w + (size_t)x;
                        found = true;
                    }
                }
            const size_t oi = (b * d.ch + c) * d.out_h * d.out_w + ho * d.out_w + wo;
            out[oi] = best;
            argmax[oi] = best_idx;
        }
}

}  // namespace

void maxpool_forward(const double* in, double* out, size_t* argmax,
                     const PoolDims& d, Exec ex) {
    if (ex == Exec::parallel) {
#pragma omp parallel for collapse(2)
        for (i64 b = 0; b < (i64)d.batch; ++b)
            for (i64 c = 0; c < (i64)d.ch; ++c)
                maxpool_plane(in, out, argmax, d, (size_t)b, (size_t)c);
    } else {
        for (size_t b = 0; b < d.batch; ++b)
            for (size_t c = 0; c < d.ch; ++c) maxpool_plane(in, out, argmax, d, b, c);
    }
}

void maxpool_backward(const double* dout, const size_t* argmax, double* din,
                      const PoolDims& d, Exec ex) {
    const size_t plane = d.out_h * d.out_w;
    // argmax entries of plane (b,c) point into input plane (b,c), so distinct
    // (b,c) iterations touch disjoint parts of din.
    if (ex == Exec::parallel) {
#pragma omp parallel for collapse(2)
        for (i64 b = 0; b < (i64)d.batch; ++b)
            for (i64 c = 0; c < (i64)d.ch; ++c) {
                const size_t off = ((size_t)b * d.ch + (size_t)c) * plane;
                for (size_t i = 0; i < plane; ++i)
                    din[argmax[off + i]] += dout[off + i];
            }
    } else {
        for (size_t b = 0; b < d.batch; ++b)
            for (size_t c = 0; c < d.ch; ++c) {
                const size_t off = (b * d.ch + c) * plane;
                for (size_t i = 0; i < plane; ++i)
                    din[argmax[off + i]] += dout[off + i];
            }
    }
}

// ---- relu ----

void relu_forward(const double* in, double* out, size_t n, Exec ex) {
    if (ex == Exec::parallel) {
#pragma omp parallel for
        for (i64 i = 0; i < (i64)n; ++i)
            out[i] = in[i] > 0.0 ? in[i] : 0.0;
    } else {
        for (size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    }
}

void relu_backward(const double* in, const double* dout, double* din, size_t n,
                   Exec ex) {
    if (ex == Exec::parallel) {
#pragma omp parallel for
        for (i64 i = 0; i < (i64)n; ++i)
            din[i] = in[i] > 0.0 ? dout[i] : 0.0;
    } else {
        for (size_t i = 0; i < n; ++i) din[i] = in[i] > 0.0 ? dout[i] : 0.0;
    }
}

}  // namespace fedprune::kernels
