#include "fedprune/model.hpp"

#include <cmath>
#include <utility>

#include "fedprune/errors.hpp"
#include "fedprune/kernels.hpp"
#include "fedprune/rng.hpp"

namespace fedprune {

namespace ag = autograd;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

struct Cursor {
    std::size_t c = 0, h = 0, w = 0;  // spatial form
    std::size_t f = 0;                // flattened form
    bool flat = false;
};

// Single shape-inference walk shared by count_flops and check_shapes.
// Throws ShapeError on the first inconsistency.
FlopsBreakdown walk_and_count(const ModelGraph& g) {
    if (g.input_shape.size() != 3)
        throw ShapeError("model input shape must be [C,H,W], got " +
                         shape_str(g.input_shape));
    Cursor cur{g.input_shape[0], g.input_shape[1], g.input_shape[2], 0, false};
    FlopsBreakdown fb;

    auto apply_conv = [&fb](const ConvLayer& l, Cursor& c) {
        if (c.flat) throw ShapeError(l.name + ": conv applied after flatten");
        if (l.in_channels() != c.c)
            throw ShapeError(l.name + ": weights " + shape_str(l.w.shape) +
                             " expect " + std::to_string(l.in_channels()) +
                             " input channels, got " + std::to_string(c.c));
        const std::size_t pad = ag::pad_amount(l.padding, l.kernel());
        const kernels::ConvDims d = kernels::conv_dims(
            1, c.c, c.h, c.w, l.out_channels(), l.kernel(), l.stride, pad);
        fb.conv += 2ull * l.kernel() * l.kernel() * c.c * d.out_h * d.out_w *
                   l.out_channels();
        c.c = l.out_channels();
        c.h = d.out_h;
        c.w = d.out_w;
    };
    auto apply_pool = [&fb](const PoolLayer& p, Cursor& c, const char* what) {
        if (c.flat) throw ShapeError(std::string(what) + " applied after flatten");
        const kernels::PoolDims d =
            kernels::pool_dims(1, c.c, c.h, c.w, p.kernel, p.stride, p.pad);
        c.h = d.out_h;
        c.w = d.out_w;
        fb.other += c.c * c.h * c.w;
    };
    auto apply_relu = [&fb](const Cursor& c) {
        fb.other += c.flat ? c.f : c.c * c.h * c.w;
    };

    for (const GraphNode& node : g.nodes) {
        std::visit(
            overloaded{
                [&](const ConvLayer& l) { apply_conv(l, cur); },
                [&](const ReluLayer&) { apply_relu(cur); },
                [&](const PoolLayer& p) { apply_pool(p, cur, "pool"); },
                [&](const FlattenLayer&) {
                    if (cur.flat) throw ShapeError("flatten applied twice");
                    cur.f = cur.c * cur.h * cur.w;
                    cur.flat = true;
                },
                [&](const DenseLayer& l) {
                    if (!cur.flat)
                        throw ShapeError(l.name + ": dense requires flattened input");
                    if (l.in_features() != cur.f)
                        throw ShapeError(l.name + ": weights " +
                                         shape_str(l.w.shape) + " expect " +
                                         std::to_string(l.in_features()) +
                                         " features, got " + std::to_string(cur.f));
                    fb.dense += 2ull * l.in_features() * l.out_features();
                    cur.f = l.out_features();
                },
                [&](const ResidualBlock& rb) {
                    const Cursor entry = cur;
                    Cursor c = cur;
                    apply_conv(rb.conv1, c);
                    apply_relu(c);
                    apply_conv(rb.conv2, c);
                    if (c.c != entry.c || c.h != entry.h || c.w != entry.w)
                        throw ShapeError(
                            rb.conv2.name + ": residual path produces [" +
                            std::to_string(c.c) + "x" + std::to_string(c.h) +
                            "x" + std::to_string(c.w) + "], skip carries [" +
                            std::to_string(entry.c) + "x" +
                            std::to_string(entry.h) + "x" +
                            std::to_string(entry.w) + "]");
                    fb.other += c.c * c.h * c.w;  // addition
                    apply_relu(c);
                    cur = c;
                },
                [&](const InceptionBlock& ib) {
                    if (ib.branches.empty())
                        throw ShapeError("inception block has no branches");
                    std::size_t total_c = 0;
                    std::size_t oh = 0, ow = 0;
                    bool first = true;
                    for (const InceptionBranch& br : ib.branches) {
                        if (br.convs.empty())
                            throw ShapeError("inception branch has no convs");
                        Cursor c = cur;
                        if (br.pool_first) apply_pool(br.pre_pool, c, "branch pool");
                        for (const ConvLayer& l : br.convs) {
                            apply_conv(l, c);
                            apply_relu(c);
                        }
                        if (first) {
                            oh = c.h;
                            ow = c.w;
                            first = false;
                        } else if (c.h != oh || c.w != ow) {
                            throw ShapeError(
                                br.convs.back().name +
                                ": branch spatial extents " + std::to_string(c.h) +
                                "x" + std::to_string(c.w) +
                                " differ from sibling " + std::to_string(oh) +
                                "x" + std::to_string(ow));
                        }
                        total_c += c.c;
                    }
                    cur.c = total_c;
                    cur.h = oh;
                    cur.w = ow;
                }},
            node);
    }
    if (!cur.flat)
        throw ShapeError("graph does not end in a flattened classifier");
    if (cur.f != g.num_classes)
        throw ShapeError("graph produces " + std::to_string(cur.f) +
                         " outputs for " + std::to_string(g.num_classes) +
                         " classes");
    return fb;
}

template <class Fn>
void for_each_conv(ModelGraph& g, Fn&& fn) {
    for (GraphNode& node : g.nodes)
        std::visit(overloaded{[&](ConvLayer& l) { fn(l); },
                              [&](ResidualBlock& rb) {
                                  fn(rb.conv1);
                                  fn(rb.conv2);
                              },
                              [&](InceptionBlock& ib) {
                                  for (InceptionBranch& br : ib.branches)
                                      for (ConvLayer& l : br.convs) fn(l);
                              },
                              [](auto&) {}},
                   node);
}

}  // namespace

ModelGraph build_architecture(const ArchSpec& spec) {
    if (spec.input_shape.size() != 3)
        throw ConfigError("architecture input shape must be [C,H,W], got " +
                          shape_str(spec.input_shape));
    if (spec.num_classes < 2)
        throw ConfigError("architecture needs at least 2 classes, got " +
                          std::to_string(spec.num_classes));
    if (spec.kernel == 0 || spec.kernel % 2 == 0)
        throw ConfigError("conv kernel must be odd for same padding, got " +
                          std::to_string(spec.kernel));

    ModelGraph g;
    g.input_shape = spec.input_shape;
    g.num_classes = spec.num_classes;
    const std::size_t in_c = spec.input_shape[0];
    std::size_t h = spec.input_shape[1];
    std::size_t w = spec.input_shape[2];
    const std::size_t K = spec.kernel;

    auto halve = [&](const char* family) {
        if (h < 2 || w < 2)
            throw ConfigError(std::string(family) + ": input too small to pool at " +
                              std::to_string(h) + "x" + std::to_string(w));
        h = (h - 2) / 2 + 1;
        w = (w - 2) / 2 + 1;
    };

    std::vector<std::size_t> widths = spec.widths;
    const auto same = ag::Padding::same;

    if (spec.family == "conv2") {
        if (widths.empty()) widths = {32, 64};
        if (widths.size() != 2)
            throw ConfigError("conv2 takes 2 widths, got " +
                              std::to_string(widths.size()));
        g.nodes.emplace_back(make_conv("conv1", widths[0], in_c, K, same, true));
        g.nodes.emplace_back(ReluLayer{});
        g.nodes.emplace_back(PoolLayer{});
        halve("conv2");
        g.nodes.emplace_back(make_conv("conv2", widths[1], widths[0], K, same, true));
        g.nodes.emplace_back(ReluLayer{});
        g.nodes.emplace_back(PoolLayer{});
        halve("conv2");
        g.nodes.emplace_back(FlattenLayer{});
        g.nodes.emplace_back(make_dense("fc", widths[1] * h * w, spec.num_classes));
    } else if (spec.family == "resnet7") {
        if (widths.empty()) widths = {16};
        if (widths.size() != 1)
            throw ConfigError("resnet7 takes 1 width, got " +
                              std::to_string(widths.size()));
        const std::size_t n = widths[0];
        // The stem's output rides the first block's skip path, so its filter
        // count is pinned like every conv feeding a residual addition.
        g.nodes.emplace_back(make_conv("stem", n, in_c, K, same, false));
        g.nodes.emplace_back(ReluLayer{});
        for (int i = 1; i <= 3; ++i) {
            const std::string p = "block" + std::to_string(i);
            ResidualBlock rb;
            rb.conv1 = make_conv(p + "_conv1", n, n, K, same, true);
            rb.conv2 = make_conv(p + "_conv2", n, n, K, same, false);
            g.nodes.emplace_back(std::move(rb));
            g.nodes.emplace_back(PoolLayer{});
            halve("resnet7");
        }
        g.nodes.emplace_back(FlattenLayer{});
        g.nodes.emplace_back(make_dense("fc", n * h * w, spec.num_classes));
    } else if (spec.family == "inception9") {
        if (widths.empty()) widths = {8, 16, 32};
        if (widths.size() != 3)
            throw ConfigError("inception9 takes 3 widths, got " +
                              std::to_string(widths.size()));
        std::size_t c = in_c;
        for (int i = 1; i <= 3; ++i) {
            const std::string p = "block" + std::to_string(i);
            const std::size_t n = widths[(std::size_t)i - 1];
            InceptionBlock ib;
            InceptionBranch b1;
            b1.convs.push_back(make_conv(p + "_br1", n, c, 1, same, true));
            InceptionBranch b2;
            b2.convs.push_back(make_conv(p + "_br2", n, c, K, same, true));
            InceptionBranch b3;
            b3.pool_first = true;
            b3.convs.push_back(make_conv(p + "_br3", n, c, 1, same, true));
            ib.branches = {std::move(b1), std::move(b2), std::move(b3)};
            g.nodes.emplace_back(std::move(ib));
            g.nodes.emplace_back(PoolLayer{});
            halve("inception9");
            c = 3 * n;
        }
        g.nodes.emplace_back(FlattenLayer{});
        g.nodes.emplace_back(make_dense("fc", c * h * w, spec.num_classes));
    } else {
        throw ConfigError("unknown architecture family: " + spec.family);
    }

    try {
        check_shapes(g);
    } catch (const ShapeError& e) {
        throw ConfigError("architecture does not fit the input: " +
                          std::string(e.what()));
    }
    return g;
}

void init_weights(ModelGraph& g, std::uint64_t seed) {
    std::size_t idx = 0;
    auto fill = [&](TensorBuffer& w, TensorBuffer& b, std::size_t fan_in) {
        Rng r(Rng::mix(seed, idx++));
        const double lim = std::sqrt(3.0 / (double)fan_in);
        for (double& v : w.data) v = r.uniform(-lim, lim);
        for (double& v : b.data) v = 0.0;
    };
    for (GraphNode& node : g.nodes)
        std::visit(overloaded{[&](ConvLayer& l) {
                                  fill(l.w, l.b,
                                       l.in_channels() * l.kernel() * l.kernel());
                              },
                              [&](ResidualBlock& rb) {
                                  for (ConvLayer* l : {&rb.conv1, &rb.conv2})
                                      fill(l->w, l->b,
                                           l->in_channels() * l->kernel() *
                                               l->kernel());
                              },
                              [&](InceptionBlock& ib) {
                                  for (InceptionBranch& br : ib.branches)
                                      for (ConvLayer& l : br.convs)
                                          fill(l.w, l.b,
                                               l.in_channels() * l.kernel() *
                                                   l.kernel());
                              },
                              [&](DenseLayer& l) {
                                  fill(l.w, l.b, l.in_features());
                              },
                              [](auto&) {}},
                   node);
}

std::size_t count_params(const ModelGraph& g) {
    std::size_t total = 0;
    for (const TensorBuffer* t : parameter_list(g)) total += t->size();
    return total;
}

FlopsBreakdown count_flops(const ModelGraph& g) { return walk_and_count(g); }

void check_shapes(const ModelGraph& g) { (void)walk_and_count(g); }

std::vector<TensorBuffer*> parameter_list(ModelGraph& g) {
    std::vector<TensorBuffer*> out;
    for (GraphNode& node : g.nodes)
        std::visit(overloaded{[&](ConvLayer& l) {
                                  out.push_back(&l.w);
                                  out.push_back(&l.b);
                              },
                              [&](ResidualBlock& rb) {
                                  out.push_back(&rb.conv1.w);
                                  out.push_back(&rb.conv1.b);
                                  out.push_back(&rb.conv2.w);
                                  out.push_back(&rb.conv2.b);
                              },
                              [&](InceptionBlock& ib) {
                                  for (InceptionBranch& br : ib.branches)
                                      for (ConvLayer& l : br.convs) {
                                          out.push_back(&l.w);
                                          out.push_back(&l.b);
                                      }
                              },
                              [&](DenseLayer& l) {
                                  out.push_back(&l.w);
                                  out.push_back(&l.b);
                              },
                              [](auto&) {}},
                   node);
    return out;
}

std::vector<const TensorBuffer*> parameter_list(const ModelGraph& g) {
    auto mut = parameter_list(const_cast<ModelGraph&>(g));
    return std::vector<const TensorBuffer*>(mut.begin(), mut.end());
}

std::vector<std::size_t> conv_filter_counts(const ModelGraph& g) {
    std::vector<std::size_t> out;
    for_each_conv(const_cast<ModelGraph&>(g),
                  [&](const ConvLayer& l) { out.push_back(l.out_channels()); });
    return out;
}

std::vector<std::string> conv_layer_names(const ModelGraph& g) {
    std::vector<std::string> out;
    for_each_conv(const_cast<ModelGraph&>(g),
                  [&](const ConvLayer& l) { out.push_back(l.name); });
    return out;
}

std::vector<ag::Var> bind_params(const ModelGraph& g, bool requires_grad) {
    std::vector<ag::Var> out;
    for (const TensorBuffer* t : parameter_list(g))
        out.push_back(ag::make_var(*t, requires_grad));
    return out;
}

void assign_params(ModelGraph& g, const std::vector<ag::Var>& params) {
    std::vector<TensorBuffer*> dst = parameter_list(g);
    if (dst.size() != params.size())
        throw InternalError("assign_params: " + std::to_string(params.size()) +
                            " values for " + std::to_string(dst.size()) +
                            " parameters");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (!same_shape(*dst[i], params[i]->value))
            throw InternalError("assign_params: shape mismatch at parameter " +
                                std::to_string(i) + ": " +
                                shape_str(dst[i]->shape) + " vs " +
                                shape_str(params[i]->value.shape));
        dst[i]->data = params[i]->value.data;
    }
}

ag::Var forward_pass(const ModelGraph& g, ag::Tape* tape, const ag::Var& input,
                     const std::vector<ag::Var>& params) {
    std::size_t pi = 0;
    auto nextp = [&]() -> const ag::Var& {
        if (pi >= params.size())
            throw InternalError("forward_pass: parameter list exhausted");
        return params[pi++];
    };
    auto conv_apply = [&](const ConvLayer& l, const ag::Var& t) {
        const ag::Var& w = nextp();
        const ag::Var& b = nextp();
        return ag::conv2d(tape, t, w, b, l.padding, l.stride);
    };

    ag::Var x = input;
    for (const GraphNode& node : g.nodes)
        std::visit(
            overloaded{
                [&](const ConvLayer& l) { x = conv_apply(l, x); },
                [&](const ReluLayer&) { x = ag::relu(tape, x); },
                [&](const PoolLayer& p) {
                    x = ag::maxpool(tape, x, p.kernel, p.stride, p.pad);
                },
                [&](const FlattenLayer&) { x = ag::flatten(tape, x); },
                [&](const DenseLayer&) {
                    const ag::Var& w = nextp();
                    const ag::Var& b = nextp();
                    x = ag::dense(tape, x, w, b);
                },
                [&](const ResidualBlock& rb) {
                    ag::Var in = x;
                    ag::Var y = conv_apply(rb.conv1, x);
                    y = ag::relu(tape, y);
                    y = conv_apply(rb.conv2, y);
                    y = ag::add(tape, y, in);
                    x = ag::relu(tape, y);
                },
                [&](const InceptionBlock& ib) {
                    std::vector<ag::Var> outs;
                    for (const InceptionBranch& br : ib.branches) {
                        ag::Var t = x;
                        if (br.pool_first)
                            t = ag::maxpool(tape, t, br.pre_pool.kernel,
                                            br.pre_pool.stride, br.pre_pool.pad);
                        for (const ConvLayer& l : br.convs) {
                            t = conv_apply(l, t);
                            t = ag::relu(tape, t);
                        }
                        outs.push_back(std::move(t));
                    }
                    x = ag::concat_channels(tape, outs);
                }},
            node);
    if (pi != params.size())
        throw InternalError("forward_pass: " +
                            std::to_string(params.size() - pi) +
                            " unused parameters");
    return x;
}

TensorBuffer forward(const ModelGraph& g, const TensorBuffer& batch) {
    if (batch.rank() != 4)
        throw ShapeError("forward: batch must be [B,C,H,W], got " +
                         shape_str(batch.shape));
    if (batch.dim(0) == 0) throw ShapeError("forward: empty batch");
    if (g.input_shape.size() != 3 || batch.dim(1) != g.input_shape[0] ||
        batch.dim(2) != g.input_shape[1] || batch.dim(3) != g.input_shape[2])
        throw ShapeError("forward: batch " + shape_str(batch.shape) +
                         " does not match model input " +
                         shape_str(g.input_shape));
    std::vector<ag::Var> params = bind_params(g, false);
    ag::Var in = ag::make_var(batch);
    return forward_pass(g, nullptr, in, params)->value;
}

}  // namespace fedprune
