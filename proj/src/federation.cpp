#include "fedprune/federation.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "fedprune/errors.hpp"
#include "fedprune/rng.hpp"

namespace fedprune {

namespace {

constexpr std::uint64_t kSelectTag = 0x5e1ec7u;
constexpr std::uint64_t kTrainTag = 0x12a1du;

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    const auto d = std::chrono::steady_clock::now() - start;
    return std::chrono::duration<double, std::milli>(d).count();
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void append_conv_tag(std::string& sig, const ConvLayer& c) {
    sig += 'c';
    sig += c.padding == autograd::Padding::same ? 's' : 'v';
    sig += std::to_string(c.stride);
    sig += c.prunable ? 'p' : 'f';
}

/// Node kinds plus the parameter-free geometry (pool windows, padding,
/// branch layout) that parameter shapes alone cannot reveal.
std::string structure_signature(const ModelGraph& g) {
    std::string sig;
    for (const GraphNode& node : g.nodes) {
        std::visit(
            overloaded{
                [&](const ConvLayer& c) { append_conv_tag(sig, c); },
                [&](const DenseLayer&) { sig += 'd'; },
                [&](const PoolLayer& p) {
                    sig += 'P' + std::to_string(p.kernel) + ':' +
                           std::to_string(p.stride) + ':' + std::to_string(p.pad);
                },
                [&](const ReluLayer&) { sig += 'r'; },
                [&](const FlattenLayer&) { sig += 'F'; },
                [&](const ResidualBlock& rb) {
                    sig += '(';
                    append_conv_tag(sig, rb.conv1);
                    append_conv_tag(sig, rb.conv2);
                    sig += ')';
                },
                [&](const InceptionBlock& ib) {
                    sig += '[';
                    for (const InceptionBranch& br : ib.branches) {
                        sig += br.pool_first ? 'q' : 'b';
                        sig += std::to_string(br.convs.size());
                    }
                    sig += ']';
                }},
            node);
    }
    return sig;
}

void check_population(const FederatedRun& run, const FederatedDataset& data) {
    if (run.cfg.clients == 0) throw ConfigError("federated run: zero clients");
    if (data.clients.size() != run.cfg.clients) {
        throw ConfigError("federated run: config expects " +
                          std::to_string(run.cfg.clients) + " clients, dataset has " +
                          std::to_string(data.clients.size()));
    }
    if (!(run.cfg.fraction > 0.0) || run.cfg.fraction > 1.0) {
        throw ConfigError("federated run: selection fraction must be in (0, 1]");
    }
}

/// Select, train locally, aggregate. Fills everything in RoundInfo except
/// params_end / accuracy / filters / wall_ms, which depend on what the
/// caller does with the aggregated model.
RoundInfo do_round(FederatedRun& run, const FederatedDataset& data) {
    run.round += 1;
    RoundInfo info;
    info.round = run.round;
    info.stage = run.stage;
    info.params_broadcast = count_params(run.global);
    info.selected =
        select_clients(run.cfg.seed, run.round, run.cfg.clients, run.cfg.fraction);

    std::vector<ModelGraph> models;
    std::vector<std::size_t> counts;
    models.reserve(info.selected.size());
    counts.reserve(info.selected.size());
    for (std::size_t id : info.selected) {
        ClientState client{id, &data.clients[id]};
        const std::uint64_t seed =
            Rng::mix(Rng::mix(Rng::mix(run.cfg.seed, kTrainTag), run.round), id);
        models.push_back(local_train(run.global, client, run.cfg.local, seed));
        counts.push_back(client.sample_count());
    }
    run.global = fedavg(models, counts);
    return info;
}

}  // namespace

std::vector<std::size_t> select_clients(std::uint64_t seed, std::size_t round,
                                        std::size_t clients, double fraction) {
    if (clients == 0) throw ConfigError("select_clients: zero clients");
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw ConfigError("select_clients: fraction must be in (0, 1]");
    }
    std::size_t want = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(clients)));
    if (want < 1) want = 1;
    if (want > clients) want = clients;
    Rng rng(Rng::mix(Rng::mix(seed, kSelectTag), round));
    return rng.sample_without_replacement(clients, want);
}

ModelGraph fedavg(const std::vector<ModelGraph>& models,
                  const std::vector<std::size_t>& counts) {
    if (models.empty()) throw AggregationError("fedavg: no client models");
    if (counts.size() != models.size()) {
        throw AggregationError("fedavg: " + std::to_string(models.size()) +
                               " models but " + std::to_string(counts.size()) +
                               " sample counts");
    }

    unsigned long long total = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0) {
            throw AggregationError("fedavg: client at position " + std::to_string(i) +
                                   " reports zero samples");
        }
        total += counts[i];
    }

    ModelGraph out = models[0];
    std::vector<TensorBuffer*> acc = parameter_list(out);
    const std::string sig = structure_signature(models[0]);
    std::vector<std::vector<const TensorBuffer*>> plists;
    plists.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        std::vector<const TensorBuffer*> pl = parameter_list(models[i]);
        if (pl.size() != acc.size() || structure_signature(models[i]) != sig) {
            throw AggregationError("fedavg: model at position " + std::to_string(i) +
                                   " has a different layer structure");
        }
        for (std::size_t j = 0; j < pl.size(); ++j) {
            if (!same_shape(*pl[j], *acc[j])) {
                throw AggregationError(
                    "fedavg: model at position " + std::to_string(i) +
                    " disagrees on parameter " + std::to_string(j) + " shape (" +
                    shape_str(pl[j]->shape) + " vs " + shape_str(acc[j]->shape) + ")");
            }
        }
        plists.push_back(std::move(pl));
    }

    std::vector<double> weights(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        weights[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    }

    for (std::size_t j = 0; j < acc.size(); ++j) {
        TensorBuffer& dst = *acc[j];
        for (std::size_t e = 0; e < dst.size(); ++e) {
            double s = 0.0;
            for (std::size_t i = 0; i < models.size(); ++i) {
                s += weights[i] * plists[i][j]->data[e];
            }
            dst.data[e] = s;
        }
        ensure_finite(dst, ("fedavg parameter " + std::to_string(j)).c_str());
    }
    return out;
}

double evaluate(const ModelGraph& g, const std::vector<Sample>& test) {
    if (test.empty()) throw ConfigError("evaluate: empty test set");
    constexpr std::size_t kChunk = 64;
    std::vector<std::size_t> order(test.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::size_t correct = 0;
    for (std::size_t first = 0; first < test.size(); first += kChunk) {
        const std::size_t last = std::min(first + kChunk, test.size());
        auto [images, labels] = make_batch(test, order, first, last);
        TensorBuffer logits = forward(g, images);
        const std::size_t classes = logits.dim(1);
        for (std::size_t b = 0; b < labels.size(); ++b) {
            const double* row = logits.data.data() + b * classes;
            std::size_t best = 0;
            for (std::size_t j = 1; j < classes; ++j) {
                if (row[j] > row[best]) best = j;  // ties keep the lower index
            }
            if (static_cast<int>(best) == labels[b]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::size_t run_stage1(FederatedRun& run, const FederatedDataset& data,
                       const PruneConfig& config, const RoundHook& hook,
                       const PruneFn& custom_prune) {
    if (run.stage != Stage::search) {
        throw StateError("run_stage1: the search stage of this run already finished");
    }
    check_population(run, data);
    validate(config);
    if (run.cfg.stage1_cap == 0) throw ConfigError("run_stage1: zero round cap");

    run.param_history.clear();
    run.param_history.push_back(count_params(run.global));

    std::size_t rounds = 0;
    std::size_t streak = 0;
    for (std::size_t r = 1; r <= run.cfg.stage1_cap; ++r) {
        const auto start = std::chrono::steady_clock::now();
        RoundInfo info = do_round(run, data);
        run.global = custom_prune ? custom_prune(run.global)
                                  : prune_model(run.global, config).first;

        const std::size_t before = run.param_history.back();
        const std::size_t after = count_params(run.global);
        run.param_history.push_back(after);
        streak = after >= before ? streak + 1 : 0;
        rounds = r;

        info.params_end = after;
        info.filters = conv_filter_counts(run.global);
        info.accuracy = evaluate(run.global, data.test);
        info.wall_ms = elapsed_ms(start);
        if (hook) hook(info);
        if (streak >= static_cast<std::size_t>(config.stop_patience)) break;
    }
    run.stage = Stage::train;
    return rounds;
}

void run_stage2(FederatedRun& run, const FederatedDataset& data,
                std::size_t rounds, const RoundHook& hook) {
    if (run.stage != Stage::train) {
        throw StateError("run_stage2: the run has not finished its search stage");
    }
    check_population(run, data);

    const std::size_t fixed = count_params(run.global);
    for (std::size_t r = 1; r <= rounds; ++r) {
        const auto start = std::chrono::steady_clock::now();
        RoundInfo info = do_round(run, data);
        const std::size_t after = count_params(run.global);
        if (after != fixed) {
            throw InternalError("run_stage2: parameter count moved from " +
                                std::to_string(fixed) + " to " + std::to_string(after) +
                                " during fixed-architecture training");
        }
        info.params_end = after;
        info.filters = conv_filter_counts(run.global);
        info.accuracy = evaluate(run.global, data.test);
        info.wall_ms = elapsed_ms(start);
        if (hook) hook(info);
    }
}

}  // namespace fedprune
