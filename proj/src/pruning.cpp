#include "fedprune/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <variant>

#include <json.hpp>

#include "fedprune/errors.hpp"
#include "fedprune/kernels.hpp"

namespace fedprune {

namespace {

using nlohmann::json;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::vector<std::size_t> identity_keep(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), (std::size_t)0);
    return v;
}

bool is_identity(const std::vector<std::size_t>& keep, std::size_t n) {
    if (keep.size() != n) return false;
    for (std::size_t i = 0; i < n; ++i)
        if (keep[i] != i) return false;
    return true;
}

// [N,C,K,K] -> [keep_n, keep_c, K, K], preserving element values.
TensorBuffer slice_conv_weights(const TensorBuffer& w,
                                const std::vector<std::size_t>& keep_n,
                                const std::vector<std::size_t>& keep_c) {
    const std::size_t kk = w.dim(2) * w.dim(3);
    const std::size_t c_in = w.dim(1);
    TensorBuffer out =
        TensorBuffer::zeros({keep_n.size(), keep_c.size(), w.dim(2), w.dim(3)});
    double* dst = out.ptr();
    for (std::size_t n : keep_n)
        for (std::size_t c : keep_c) {
            const double* src = w.ptr() + (n * c_in + c) * kk;
            for (std::size_t i = 0; i < kk; ++i) *dst++ = src[i];
        }
    return out;
}

TensorBuffer slice_vector(const TensorBuffer& v,
                          const std::vector<std::size_t>& keep) {
    TensorBuffer out = TensorBuffer::zeros({keep.size()});
    for (std::size_t i = 0; i < keep.size(); ++i) out.data[i] = v.data[keep[i]];
    return out;
}

// [F,O] -> [keep_rows, O].
TensorBuffer slice_dense_rows(const TensorBuffer& w,
                              const std::vector<std::size_t>& keep_rows) {
    const std::size_t out_f = w.dim(1);
    TensorBuffer out = TensorBuffer::zeros({keep_rows.size(), out_f});
    double* dst = out.ptr();
    for (std::size_t f : keep_rows) {
        const double* src = w.ptr() + f * out_f;
        for (std::size_t o = 0; o < out_f; ++o) *dst++ = src[o];
    }
    return out;
}

}  // namespace

void validate(const PruneConfig& config) {
    if (!(config.k >= 0.0))
        throw ConfigError("prune boundary scale k must be nonnegative, got " +
                          std::to_string(config.k));
    if (config.stop_patience < 1)
        throw ConfigError("stop patience must be positive, got " +
                          std::to_string(config.stop_patience));
    if (config.min_filters < 1)
        throw ConfigError("min_filters must be positive, got " +
                          std::to_string(config.min_filters));
}

FilterScoreSummary score_layer(const ConvLayer& layer) {
    const std::size_t n_filters = layer.out_channels();
    if (n_filters < 1)
        throw ShapeError(layer.name + ": cannot score a layer with no filters");
    ensure_finite(layer.w, (layer.name + " weights").c_str());

    FilterScoreSummary s;
    s.S.resize(n_filters);
    const std::size_t per_filter =
        layer.in_channels() * layer.kernel() * layer.kernel();
    for (std::size_t n = 0; n < n_filters; ++n) {
        const double* w = layer.w.ptr() + n * per_filter;
        double acc = 0.0;
        for (std::size_t i = 0; i < per_filter; ++i) acc += std::fabs(w[i]);
        s.S[n] = acc;
    }
    double mean = 0.0;
    for (double v : s.S) mean += v;
    mean /= (double)n_filters;
    double var = 0.0;
    for (double v : s.S) var += (v - mean) * (v - mean);
    var /= (double)n_filters;  // population normalization
    s.mu_s = mean;
    s.sigma_s = std::sqrt(var);
    return s;
}

std::vector<std::size_t> select_keep_set(FilterScoreSummary& summary,
                                         const PruneConfig& config) {
    validate(config);
    const std::size_t n = summary.S.size();
    summary.lower = summary.mu_s - config.k * summary.sigma_s;
    summary.upper = summary.mu_s + config.k * summary.sigma_s;

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i)
        if (summary.lower <= summary.S[i] && summary.S[i] <= summary.upper)
            keep.push_back(i);

    const std::size_t floor_count = std::min(config.min_filters, n);
    summary.guard_fired = keep.size() < floor_count;
    if (summary.guard_fired) {
        std::vector<std::size_t> order = identity_keep(n);
        // Distances compared in extended precision: scores that tie exactly
        // (a two-filter layer always does) must reach the index tie-break
        // instead of being split by rounding in the mean.
        long double total = 0.0L;
        for (double s : summary.S) total += (long double)s;
        const long double mu = total / (long double)n;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) {
                      const long double da = std::fabs((long double)summary.S[a] - mu);
                      const long double db = std::fabs((long double)summary.S[b] - mu);
                      if (da != db) return da < db;
                      return a < b;
                  });
        keep.assign(order.begin(), order.begin() + (std::ptrdiff_t)floor_count);
        std::sort(keep.begin(), keep.end());
    }
    summary.keep_indices = keep;
    return keep;
}

std::pair<ModelGraph, PruneReport> prune_model(const ModelGraph& g,
                                               const PruneConfig& config) {
    validate(config);
    PruneReport rep;
    rep.params_before = count_params(g);
    rep.flops_before = count_flops(g).total();

    // Scoring pass: every layer's keep set is decided on the pre-prune
    // snapshot, before any structural edit.
    std::map<std::string, std::vector<std::size_t>> keep_map;
    auto score_one = [&](const ConvLayer& l) {
        if (keep_map.count(l.name) != 0)
            throw InternalError("prune_model: duplicate conv layer name '" +
                                l.name + "'");
        LayerPruneRecord rec;
        rec.name = l.name;
        rec.prunable = l.prunable;
        rec.filters_before = l.out_channels();
        if (l.prunable) {
            FilterScoreSummary s = score_layer(l);
            const auto keep = select_keep_set(s, config);
            rec.filters_after = keep.size();
            rec.guard_fired = s.guard_fired;
            rec.mu_s = s.mu_s;
            rec.sigma_s = s.sigma_s;
            rec.lower = s.lower;
            rec.upper = s.upper;
            keep_map[l.name] = keep;
        } else {
            rec.filters_after = rec.filters_before;
            keep_map[l.name] = identity_keep(l.out_channels());
        }
        rep.layers.push_back(rec);
    };
    for (const GraphNode& node : g.nodes)
        std::visit(overloaded{[&](const ConvLayer& l) { score_one(l); },
                              [&](const ResidualBlock& rb) {
                                  score_one(rb.conv1);
                                  score_one(rb.conv2);
                              },
                              [&](const InceptionBlock& ib) {
                                  for (const InceptionBranch& br : ib.branches)
                                      for (const ConvLayer& l : br.convs)
                                          score_one(l);
                              },
                              [](const auto&) {}},
                   node);

    // Structural pass: rebuild each node, tracking which original channels of
    // the producing layer survive. keep_in lists them in the producer's
    // original index space; orig_c is the producer's original channel count.
    ModelGraph out = g;
    if (g.input_shape.size() != 3)
        throw ShapeError("prune_model: model input shape must be [C,H,W], got " +
                         shape_str(g.input_shape));
    std::vector<std::size_t> keep_in = identity_keep(g.input_shape[0]);
    std::size_t orig_c = g.input_shape[0];
    std::size_t h = g.input_shape[1];
    std::size_t w = g.input_shape[2];
    bool flat = false;
    bool dense_rewired = false;
    std::vector<std::size_t> keep_flat;

    auto rewire_conv = [&](ConvLayer& l,
                           const std::vector<std::size_t>& keep_channels) {
        const std::vector<std::size_t>& keep_self = keep_map.at(l.name);
        l.w = slice_conv_weights(l.w, keep_self, keep_channels);
        l.b = slice_vector(l.b, keep_self);
        return keep_self;
    };

    for (GraphNode& node : out.nodes) {
        std::visit(
            overloaded{
                [&](ConvLayer& l) {
                    const std::size_t n_orig = l.out_channels();
                    keep_in = rewire_conv(l, keep_in);
                    orig_c = n_orig;
                },
                [&](ResidualBlock& rb) {
                    if (!is_identity(keep_in, orig_c))
                        throw InternalError(
                            rb.conv1.name +
                            ": pruned channels reached a residual block entry");
                    const std::size_t n_orig = rb.conv2.out_channels();
                    const auto keep_mid = rewire_conv(rb.conv1, keep_in);
                    const auto keep_out = rewire_conv(rb.conv2, keep_mid);
                    if (!is_identity(keep_out, n_orig))
                        throw InternalError(
                            rb.conv2.name +
                            ": filters removed from a non-prunable conv");
                    keep_in = keep_out;
                    orig_c = n_orig;
                },
                [&](InceptionBlock& ib) {
                    std::vector<std::size_t> merged;
                    std::size_t offset = 0;
                    for (InceptionBranch& br : ib.branches) {
                        if (br.convs.empty())
                            throw InternalError(
                                "prune_model: inception branch has no convs");
                        const std::size_t branch_orig =
                            br.convs.back().out_channels();
                        std::vector<std::size_t> branch_keep = keep_in;
                        for (ConvLayer& l : br.convs)
                            branch_keep = rewire_conv(l, branch_keep);
                        for (std::size_t n : branch_keep)
                            merged.push_back(offset + n);
                        offset += branch_orig;
                    }
                    keep_in = merged;
                    orig_c = offset;
                },
                [&](PoolLayer& p) {
                    const kernels::PoolDims d = kernels::pool_dims(
                        1, orig_c, h, w, p.kernel, p.stride, p.pad);
                    h = d.out_h;
                    w = d.out_w;
                },
                [&](ReluLayer&) {},
                [&](FlattenLayer&) {
                    const std::size_t plane = h * w;
                    keep_flat.clear();
                    for (std::size_t c : keep_in)
                        for (std::size_t p = 0; p < plane; ++p)
                            keep_flat.push_back(c * plane + p);
                    flat = true;
                },
                [&](DenseLayer& l) {
                    if (flat && !dense_rewired) {
                        l.w = slice_dense_rows(l.w, keep_flat);
                        dense_rewired = true;
                    }
                }},
            node);
    }

    try {
        check_shapes(out);
    } catch (const ShapeError& e) {
        throw InternalError("prune_model produced an inconsistent graph: " +
                            std::string(e.what()));
    }
    rep.params_after = count_params(out);
    rep.flops_after = count_flops(out).total();
    return {std::move(out), std::move(rep)};
}

std::string prune_report_format(const PruneReport& report) {
    auto fraction = [](double before, double after) {
        return before > 0.0 ? 1.0 - after / before : 0.0;
    };
    json layers = json::array();
    for (const LayerPruneRecord& r : report.layers) {
        json row{{"name", r.name},
                 {"prunable", r.prunable},
                 {"filters_before", r.filters_before},
                 {"filters_after", r.filters_after},
                 {"filter_reduction",
                  fraction((double)r.filters_before, (double)r.filters_after)},
                 {"guard_fired", r.guard_fired}};
        if (r.prunable) {
            row["mu_s"] = r.mu_s;
            row["sigma_s"] = r.sigma_s;
            row["lower"] = r.lower;
            row["upper"] = r.upper;
        }
        layers.push_back(row);
    }
    json out{{"params_before", report.params_before},
             {"params_after", report.params_after},
             {"params_reduction", fraction((double)report.params_before,
                                           (double)report.params_after)},
             {"flops_before", report.flops_before},
             {"flops_after", report.flops_after},
             {"flops_reduction", fraction((double)report.flops_before,
                                          (double)report.flops_after)},
             {"layers", layers}};
    return out.dump(2);
}

}  // namespace fedprune
