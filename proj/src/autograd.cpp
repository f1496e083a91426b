#include "fedprune/autograd.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "fedprune/errors.hpp"
#include "fedprune/kernels.hpp"

namespace fedprune::autograd {

namespace k = fedprune::kernels;

Var make_var(TensorBuffer value, bool requires_grad) {
    auto v = std::make_shared<VarData>();
    v->value = std::move(value);
    v->requires_grad = requires_grad;
    return v;
}

TensorBuffer& ensure_grad(const Var& v) {
    if (v->grad.size() == 0) v->grad = TensorBuffer::zeros(v->value.shape);
    return v->grad;
}

void accumulate_grad(const Var& v, const double* delta, std::size_t n) {
    TensorBuffer& g = ensure_grad(v);
    if (g.size() != n)
        throw InternalError("gradient length mismatch: have " +
                            std::to_string(g.size()) + ", got " +
                            std::to_string(n));
    double* p = g.ptr();
    for (std::size_t i = 0; i < n; ++i) p[i] += delta[i];
}

void zero_grad(const Var& v) {
    std::fill(v->grad.data.begin(), v->grad.data.end(), 0.0);
}

void Tape::record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

void Tape::backward(const Var& loss) {
    if (!loss) throw StateError("backward: loss is null");
    if (loss->value.size() != 1)
        throw ShapeError("backward: loss must be scalar, got " +
                         shape_str(loss->value.shape));
    if (loss->tape == nullptr) {
        // Constant loss: nothing upstream, every gradient is zero.
        nodes_.clear();
        ++epoch_;
        return;
    }
    if (loss->tape != this || loss->epoch != epoch_)
        throw StateError("backward: loss was not produced by the current forward pass");
    ensure_grad(loss).data[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
    ++epoch_;
}

namespace {

void require_rank(const Var& v, std::size_t rank, const char* what) {
    if (v->value.rank() != rank)
        throw ShapeError(std::string(what) + ": expected rank " +
                         std::to_string(rank) + " tensor, got " +
                         shape_str(v->value.shape));
}

bool any_requires_grad(std::initializer_list<const Var*> vs) {
    for (const Var* v : vs)
        if (*v && (*v)->requires_grad) return true;
    return false;
}

// Marks out as produced by tape (current epoch) and records its closure.
Var finish(Tape* tape, Var out, bool needs_grad, std::function<void()> fn) {
    out->requires_grad = needs_grad;
    if (tape != nullptr) {
        out->tape = tape;
        out->epoch = tape->epoch();
        if (needs_grad) tape->record(std::move(fn));
    }
    return out;
}

}  // namespace

std::size_t pad_amount(Padding padding, std::size_t kernel) {
    if (padding == Padding::valid) return 0;
    if (kernel % 2 == 0)
        throw ShapeError("same padding requires an odd kernel, got " +
                         std::to_string(kernel));
    return (kernel - 1) / 2;
}

Var conv2d(Tape* tape, const Var& x, const Var& w, const Var& b,
           Padding padding, std::size_t stride) {
    require_rank(x, 4, "conv2d input");
    require_rank(w, 4, "conv2d weights");
    require_rank(b, 1, "conv2d bias");
    if (w->value.dim(2) != w->value.dim(3))
        throw ShapeError("conv2d: kernel must be square, got " +
                         shape_str(w->value.shape));
    if (x->value.dim(1) != w->value.dim(1))
        throw ShapeError("conv2d: channel mismatch between input " +
                         shape_str(x->value.shape) + " and weights " +
                         shape_str(w->value.shape));
    if (b->value.dim(0) != w->value.dim(0))
        throw ShapeError("conv2d: bias " + shape_str(b->value.shape) +
                         " does not match weights " + shape_str(w->value.shape));
    const std::size_t kernel = w->value.dim(2);
    const std::size_t pad = pad_amount(padding, kernel);
    const k::ConvDims d =
        k::conv_dims(x->value.dim(0), x->value.dim(1), x->value.dim(2),
                     x->value.dim(3), w->value.dim(0), kernel, stride, pad);
    const k::Exec ex = k::default_exec();

    Var out = make_var(TensorBuffer::zeros({d.batch, d.out_ch, d.out_h, d.out_w}));
    k::conv2d_forward(x->value.ptr(), w->value.ptr(), b->value.ptr(),
                      out->value.ptr(), d, ex);
    ensure_finite(out->value, "conv2d output");

    const bool needs = any_requires_grad({&x, &w, &b});
    return finish(tape, out, needs, [x, w, b, out, d, ex] {
        if (out->grad.size() == 0) return;
        if (x->requires_grad) {
            TensorBuffer tmp = TensorBuffer::zeros(x->value.shape);
            k::conv2d_backward_input(out->grad.ptr(), w->value.ptr(), tmp.ptr(),
                                     d, ex);
            accumulate_grad(x, tmp.ptr(), tmp.size());
        }
        if (w->requires_grad) {
            TensorBuffer tmp = TensorBuffer::zeros(w->value.shape);
            k::conv2d_backward_weights(out->grad.ptr(), x->value.ptr(),
                                       tmp.ptr(), d, ex);
            accumulate_grad(w, tmp.ptr(), tmp.size());
        }
        if (b->requires_grad) {
            TensorBuffer tmp = TensorBuffer::zeros(b->value.shape);
            k::conv2d_backward_bias(out->grad.ptr(), tmp.ptr(), d, ex);
            accumulate_grad(b, tmp.ptr(), tmp.size());
        }
    });
}

Var dense(Tape* tape, const Var& x, const Var& w, const Var& b) {
    require_rank(x, 2, "dense input");
    require_rank(w, 2, "dense weights");
    require_rank(b, 1, "dense bias");
    if (x->value.dim(1) != w->value.dim(0))
        throw ShapeError("dense: input " + shape_str(x->value.shape) +
                         " does not match weights " + shape_str(w->value.shape));
    if (b->value.dim(0) != w->value.dim(1))
        throw ShapeError("dense: bias " + shape_str(b->value.shape) +
                         " does not match weights " + shape_str(w->value.shape));
    const std::size_t batch = x->value.dim(0);
    const std::size_t in_f = w->value.dim(0);
    const std::size_t out_f = w->value.dim(1);
    const k::Exec ex = k::default_exec();

    Var out = make_var(TensorBuffer::zeros({batch, out_f}));
    k::dense_forward(x->value.ptr(), w->value.ptr(), b->value.ptr(),
                     out->value.ptr(), batch, in_f, out_f, ex);
    ensure_finite(out->value, "dense output");

    const bool needs = any_requires_grad({&x, &w, &b});
    return finish(tape, out, needs, [x, w, b, out, batch, in_f, out_f, ex] {
        if (out->grad.size() == 0) return;
        if (x->requires_grad) {
            TensorBuffer tmp = TensorBuffer::zeros(x->value.shape);
            k::dense_backward_input(out->grad.ptr(), w->value.ptr(), tmp.ptr(),
                                    batch, in_f, out_f, ex);
            accumulate_grad(x, tmp.ptr(), tmp.size());
        }
        if (w->requires_grad) {
            TensorBuffer tmp = TensorBuffer::zeros(w->value.shape);
            k::dense_backward_weights(out->grad.ptr(), x->value.ptr(),
                                      tmp.ptr(), batch, in_f, out_f, ex);
            accumulate_grad(w, tmp.ptr(), tmp.size());
        }
        if (b->requires_grad) {
            TensorBuffer tmp = TensorBuffer::zeros(b->value.shape);
            k::dense_backward_bias(out->grad.ptr(), tmp.ptr(), batch, out_f, ex);
            accumulate_grad(b, tmp.ptr(), tmp.size());
        }
    });
}

Var relu(Tape* tape, const Var& x) {
    const k::Exec ex = k::default_exec();
    Var out = make_var(TensorBuffer::zeros(x->value.shape));
    k::relu_forward(x->value.ptr(), out->value.ptr(), x->value.size(), ex);

    return finish(tape, out, x->requires_grad, [x, out, ex] {
        if (out->grad.size() == 0 || !x->requires_grad) return;
        TensorBuffer tmp = TensorBuffer::zeros(x->value.shape);
        k::relu_backward(x->value.ptr(), out->grad.ptr(), tmp.ptr(),
                         tmp.size(), ex);
        accumulate_grad(x, tmp.ptr(), tmp.size());
    });
}

Var maxpool(Tape* tape, const Var& x, std::size_t kernel, std::size_t stride,
            std::size_t pad) {
    require_rank(x, 4, "maxpool input");
    const k::PoolDims d = k::pool_dims(x->value.dim(0), x->value.dim(1),
                                       x->value.dim(2), x->value.dim(3),
                                       kernel, stride, pad);
    const k::Exec ex = k::default_exec();

    Var out = make_var(TensorBuffer::zeros({d.batch, d.ch, d.out_h, d.out_w}));
    auto argmax = std::make_shared<std::vector<std::size_t>>(out->value.size());
    k::maxpool_forward(x->value.ptr(), out->value.ptr(), argmax->data(), d, ex);

    return finish(tape, out, x->requires_grad, [x, out, argmax, d, ex] {
        if (out->grad.size() == 0 || !x->requires_grad) return;
        TensorBuffer tmp = TensorBuffer::zeros(x->value.shape);
        k::maxpool_backward(out->grad.ptr(), argmax->data(), tmp.ptr(), d, ex);
        accumulate_grad(x, tmp.ptr(), tmp.size());
    });
}

Var add(Tape* tape, const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    Var out = make_var(TensorBuffer::zeros(a->value.shape));
    const double* pa = a->value.ptr();
    const double* pb = b->value.ptr();
    double* po = out->value.ptr();
    for (std::size_t i = 0; i < out->value.size(); ++i) po[i] = pa[i] + pb[i];
    ensure_finite(out->value, "add output");

    const bool needs = any_requires_grad({&a, &b});
    return finish(tape, out, needs, [a, b, out] {
        if (out->grad.size() == 0) return;
        if (a->requires_grad)
            accumulate_grad(a, out->grad.ptr(), out->grad.size());
        if (b->requires_grad)
            accumulate_grad(b, out->grad.ptr(), out->grad.size());
    });
}

Var concat_channels(Tape* tape, const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: no inputs");
    for (const Var& x : xs) require_rank(x, 4, "concat_channels input");
    const std::size_t batch = xs[0]->value.dim(0);
    const std::size_t h = xs[0]->value.dim(2);
    const std::size_t w = xs[0]->value.dim(3);
    std::size_t total_ch = 0;
    for (const Var& x : xs) {
        if (x->value.dim(0) != batch || x->value.dim(2) != h ||
            x->value.dim(3) != w)
            throw ShapeError("concat_channels: mismatched input " +
                             shape_str(x->value.shape) + " vs " +
                             shape_str(xs[0]->value.shape));
        total_ch += x->value.dim(1);
    }
    const std::size_t plane = h * w;

    Var out = make_var(TensorBuffer::zeros({batch, total_ch, h, w}));
    std::size_t ch_off = 0;
    for (const Var& x : xs) {
        const std::size_t c = x->value.dim(1);
        for (std::size_t b = 0; b < batch; ++b) {
            const double* src = x->value.ptr() + b * c * plane;
            double* dst = out->value.ptr() + (b * total_ch + ch_off) * plane;
            for (std::size_t i = 0; i < c * plane; ++i) dst[i] = src[i];
        }
        ch_off += c;
    }

    bool needs = false;
    for (const Var& x : xs) needs = needs || x->requires_grad;
    return finish(tape, out, needs, [xs, out, batch, total_ch, plane] {
        if (out->grad.size() == 0) return;
        std::size_t ch_off = 0;
        for (const Var& x : xs) {
            const std::size_t c = x->value.dim(1);
            if (x->requires_grad) {
                TensorBuffer& g = ensure_grad(x);
                for (std::size_t b = 0; b < batch; ++b) {
                    const double* src =
                        out->grad.ptr() + (b * total_ch + ch_off) * plane;
                    double* dst = g.ptr() + b * c * plane;
                    for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
                }
            }
            ch_off += c;
        }
    });
}

Var flatten(Tape* tape, const Var& x) {
    if (x->value.rank() < 2)
        throw ShapeError("flatten: expected rank >= 2, got " +
                         shape_str(x->value.shape));
    const std::size_t batch = x->value.dim(0);
    const std::size_t rest = x->value.size() / (batch == 0 ? 1 : batch);
    // Row-major layout makes this a pure reshape: element (c,h,w) of an image
    // lands at flat index c*H*W + h*W + w.
    Var out = make_var(TensorBuffer({batch, rest}, x->value.data));

    return finish(tape, out, x->requires_grad, [x, out] {
        if (out->grad.size() == 0 || !x->requires_grad) return;
        accumulate_grad(x, out->grad.ptr(), out->grad.size());
    });
}

Var sum(Tape* tape, const Var& x) {
    double acc = 0.0;
    const double* p = x->value.ptr();
    for (std::size_t i = 0; i < x->value.size(); ++i) acc += p[i];
    Var out = make_var(TensorBuffer({1}, {acc}));
    ensure_finite(out->value, "sum output");

    return finish(tape, out, x->requires_grad, [x, out] {
        if (out->grad.size() == 0 || !x->requires_grad) return;
        const double g = out->grad.data[0];
        TensorBuffer& xg = ensure_grad(x);
        for (std::size_t i = 0; i < xg.size(); ++i) xg.data[i] += g;
    });
}

Var cross_entropy(Tape* tape, const Var& logits,
                  const std::vector<int>& labels) {
    require_rank(logits, 2, "cross_entropy logits");
    const std::size_t batch = logits->value.dim(0);
    const std::size_t classes = logits->value.dim(1);
    if (labels.size() != batch)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch " + std::to_string(batch));
    for (int y : labels)
        if (y < 0 || (std::size_t)y >= classes)
            throw ShapeError("cross_entropy: label " + std::to_string(y) +
                             " outside [0, " + std::to_string(classes) + ")");
    if (batch == 0) throw ShapeError("cross_entropy: empty batch");
    ensure_finite(logits->value, "cross_entropy logits");

    auto probs = std::make_shared<TensorBuffer>(
        TensorBuffer::zeros(logits->value.shape));
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* z = logits->value.ptr() + b * classes;
        double m = z[0];
        for (std::size_t j = 1; j < classes; ++j)
            if (z[j] > m) m = z[j];
        double denom = 0.0;
        for (std::size_t j = 0; j < classes; ++j) denom += std::exp(z[j] - m);
        double* p = probs->ptr() + b * classes;
        for (std::size_t j = 0; j < classes; ++j)
            p[j] = std::exp(z[j] - m) / denom;
        total += m + std::log(denom) - z[labels[b]];
    }
    Var out = make_var(TensorBuffer({1}, {total / (double)batch}));
    ensure_finite(out->value, "cross_entropy output");

    return finish(tape, out, logits->requires_grad,
                  [logits, labels, probs, out, batch, classes] {
        if (out->grad.size() == 0 || !logits->requires_grad) return;
        const double g = out->grad.data[0] / (double)batch;
        TensorBuffer& lg = ensure_grad(logits);
        for (std::size_t b = 0; b < batch; ++b) {
            const double* p = probs->ptr() + b * classes;
            double* d = lg.ptr() + b * classes;
            for (std::size_t j = 0; j < classes; ++j) {
                double delta = p[j];
                if ((std::size_t)labels[b] == j) delta -= 1.0;
                d[j] += g * delta;
            }
        }
    });
}

}  // namespace fedprune::autograd
