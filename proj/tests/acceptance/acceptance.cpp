// Acceptance gate: ten behavioural checks across the pruning rule, the
// training stack, and the federated pipeline. One [PASS]/[FAIL] line per
// check; nonzero exit if any fail. Tolerances and budgets are pinned here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <string>
#include <vector>

#include "fedprune/autograd.hpp"
#include "fedprune/config.hpp"
#include "fedprune/dataset.hpp"
#include "fedprune/experiment.hpp"
#include "fedprune/federation.hpp"
#include "fedprune/layers.hpp"
#include "fedprune/metrics.hpp"
#include "fedprune/model.hpp"
#include "fedprune/pruning.hpp"
#include "fedprune/rng.hpp"
#include "fedprune/tensor.hpp"

#include "../oracle.hpp"
#include "../prune_equiv.hpp"

using namespace fedprune;
using autograd::Tape;
using autograd::Var;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Failure(what);
}

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void require_budget(const Stopwatch& sw, double limit_s) {
    std::ostringstream os;
    os << "took " << sw.seconds() << " s, budget " << limit_s << " s";
    require(sw.seconds() < limit_s, os.str());
}

int fresh_dir_counter = 0;

std::filesystem::path fresh_dir(const char* tag) {
    std::filesystem::path p = std::filesystem::temp_directory_path() /
                              ("acceptance_" + std::string(tag) + "_" +
                               std::to_string(fresh_dir_counter++));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// ---------------------------------------------------------------------------
// 1. Keep-set selection against a long-double brute-force oracle over
//    randomized layers; boundary-ambiguous layers (a score within 1e-9 of a
//    bound) are excluded, everything else must match exactly.

void boundary_oracle() {
    Stopwatch sw;
    Rng rng(0xacce5501ull);
    std::size_t checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(64);
        const std::size_t c = 1 + rng.below(16);
        const std::size_t kernel = rng.below(2) ? 5 : 3;
        ConvLayer layer =
            make_conv("l", n, c, kernel, autograd::Padding::same, true);
        switch (trial % 3) {
            case 0: oracle::fill_normal(layer.w, rng, 0.0, 1.0); break;
            case 1: oracle::fill_uniform(layer.w, rng, -1.5, 1.5); break;
            default: oracle::fill_heavy(layer.w, rng); break;
        }
        oracle::fill_normal(layer.b, rng, 0.0, 1.0);
        const double k = rng.uniform(0.25, 3.5);

        oracle::ScoreOracle want =
            oracle::keep_set(layer.w, (long double)k, 1, 1e-9L);
        if (want.ambiguous) continue;

        FilterScoreSummary summary = score_layer(layer);
        PruneConfig pc;
        pc.k = k;
        std::vector<std::size_t> keep = select_keep_set(summary, pc);
        if (keep != want.keep) {
            std::ostringstream os;
            os << "keep set diverges from the oracle at trial " << trial
               << " (n=" << n << ", c=" << c << ", k=" << k << ")";
            throw Failure(os.str());
        }
        ++checked;
    }
    require(checked >= 800,
            "only " + std::to_string(checked) + "/1000 layers were unambiguous");
    require_budget(sw, 60.0);
}

// ---------------------------------------------------------------------------
// 2. Zeroing one prunable filter (weights and bias), then pruning it away,
//    must leave the network function unchanged within 1e-5 over random
//    batches. 50 random models per family.

void zero_filter_preservation() {
    Stopwatch sw;
    Rng rng(0x2e70f117ull);
    const std::vector<std::string> families = {"conv2", "resnet7", "inception9"};
    for (const std::string& family : families) {
        for (int i = 0; i < 50; ++i) {
            ArchSpec spec;
            spec.family = family;
            spec.kernel = 3;
            spec.input_shape = {1, 8, 8};
            spec.num_classes = 3 + rng.below(4);
            if (family == "conv2")
                spec.widths = {4 + rng.below(9), 4 + rng.below(9)};
            else if (family == "resnet7")
                spec.widths = {4 + rng.below(7)};
            else
                spec.widths = {3 + rng.below(6), 3 + rng.below(6),
                               3 + rng.below(6)};
            ModelGraph g = build_architecture(spec);
            init_weights(g, rng.next());

            std::vector<ConvLayer*> convs = prune_equiv::prunable_convs(g);
            std::vector<std::size_t> eligible;
            for (std::size_t t = 0; t < convs.size(); ++t)
                if (convs[t]->out_channels() >= 3) eligible.push_back(t);
            require(!eligible.empty(), "no prunable conv wide enough");
            const std::size_t target = eligible[rng.below(eligible.size())];
            const std::size_t filter = rng.below(convs[target]->out_channels());
            prune_equiv::ZeroPlant plant =
                prune_equiv::plant_zero_filter(g, target, filter);

            PruneConfig pc;
            pc.k = plant.k;
            auto [pruned, report] = prune_model(g, pc);
            std::size_t removed = 0;
            for (const LayerPruneRecord& lr : report.layers)
                removed += lr.filters_before - lr.filters_after;
            if (removed != 1) {
                std::ostringstream os;
                os << family << " model " << i << ": expected 1 filter removed, got "
                   << removed;
                throw Failure(os.str());
            }

            Rng batch_rng(rng.next());
            const double gap =
                prune_equiv::max_forward_gap(g, pruned, 100, 2, batch_rng);
            if (gap > 1e-5) {
                std::ostringstream os;
                os << family << " model " << i << ": forward gap " << gap;
                throw Failure(os.str());
            }
        }
    }
    require_budget(sw, 300.0);
}

// ---------------------------------------------------------------------------
// 3. Central finite differences against the tape gradients for every layer
//    type, relative error under 1e-4.

double scalar_loss(const Var& v) { return v->value.data[0]; }

double fd_max_rel(const std::vector<Var>& params,
                  const std::function<Var(Tape*)>& make_loss,
                  double eps = 1e-4) {
    Tape tape;
    Var loss = make_loss(&tape);
    tape.backward(loss);
    double worst = 0.0;
    for (const Var& p : params) {
        const std::size_t total = p->value.size();
        const std::size_t step = total > 200 ? total / 100 : 1;
        for (std::size_t i = 0; i < total; i += step) {
            const double keep = p->value.data[i];
            p->value.data[i] = keep + eps;
            const double up = scalar_loss(make_loss(nullptr));
            p->value.data[i] = keep - eps;
            const double dn = scalar_loss(make_loss(nullptr));
            p->value.data[i] = keep;
            const double fd = (up - dn) / (2.0 * eps);
            const double got = p->grad.size() ? p->grad.data[i] : 0.0;
            const double denom =
                std::max({1e-6, std::fabs(fd), std::fabs(got)});
            worst = std::max(worst, std::fabs(fd - got) / denom);
        }
    }
    return worst;
}

Var random_param(Rng& rng, const Shape& shape, double scale = 0.7) {
    TensorBuffer t = TensorBuffer::zeros(shape);
    for (double& v : t.data) v = rng.uniform(-scale, scale);
    return autograd::make_var(std::move(t), true);
}

void gradient_check() {
    Stopwatch sw;
    Rng rng(0x96add1e47ull);
    auto expect = [](double rel, const char* what) {
        if (rel >= 1e-4) {
            std::ostringstream os;
            os << what << ": max relative error " << rel;
            throw Failure(os.str());
        }
    };

    {  // dense + cross-entropy
        Var x = random_param(rng, {3, 4});
        Var w = random_param(rng, {4, 5});
        Var b = random_param(rng, {5});
        const std::vector<int> labels = {0, 2, 4};
        expect(fd_max_rel({x, w, b},
                          [&](Tape* t) {
                              return autograd::cross_entropy(
                                  t, autograd::dense(t, x, w, b), labels);
                          }),
               "dense");
    }
    {  // same-padding conv, summed
        Var x = random_param(rng, {2, 2, 6, 6});
        Var w = random_param(rng, {3, 2, 3, 3});
        Var b = random_param(rng, {3});
        expect(fd_max_rel({x, w, b},
                          [&](Tape* t) {
                              return autograd::sum(
                                  t, autograd::conv2d(t, x, w, b,
                                                      autograd::Padding::same));
                          }),
               "conv same");
    }
    {  // valid conv, stride 2, relu
        Var x = random_param(rng, {1, 3, 7, 7});
        Var w = random_param(rng, {2, 3, 3, 3});
        Var b = random_param(rng, {2});
        expect(fd_max_rel({x, w, b},
                          [&](Tape* t) {
                              return autograd::sum(
                                  t, autograd::relu(
                                         t, autograd::conv2d(
                                                t, x, w, b,
                                                autograd::Padding::valid, 2)));
                          }),
               "conv valid stride 2 + relu");
    }
    {  // maxpool; inputs spread out so probes cannot flip an argmax
        Var x = random_param(rng, {2, 2, 6, 6}, 7.0);
        expect(fd_max_rel({x},
                          [&](Tape* t) {
                              return autograd::sum(
                                  t, autograd::maxpool(t, x, 2, 2));
                          }),
               "maxpool");
    }
    {  // residual add, flatten, classifier
        Var x = random_param(rng, {2, 2, 5, 5});
        Var w = random_param(rng, {2, 2, 3, 3});
        Var b = random_param(rng, {2});
        Var fw = random_param(rng, {50, 3});
        Var fb = random_param(rng, {3});
        const std::vector<int> labels = {1, 2};
        expect(fd_max_rel({x, w, b, fw, fb},
                          [&](Tape* t) {
                              Var y = autograd::relu(
                                  t, autograd::add(
                                         t,
                                         autograd::conv2d(
                                             t, x, w, b,
                                             autograd::Padding::same),
                                         x));
                              return autograd::cross_entropy(
                                  t,
                                  autograd::dense(t, autograd::flatten(t, y),
                                                  fw, fb),
                                  labels);
                          }),
               "residual add");
    }
    {  // channel concat of two branches
        Var x = random_param(rng, {2, 2, 5, 5});
        Var w1 = random_param(rng, {2, 2, 3, 3});
        Var b1 = random_param(rng, {2});
        Var w2 = random_param(rng, {3, 2, 1, 1});
        Var b2 = random_param(rng, {3});
        Var fw = random_param(rng, {125, 4});
        Var fb = random_param(rng, {4});
        const std::vector<int> labels = {0, 3};
        expect(fd_max_rel({x, w1, b1, w2, b2, fw, fb},
                          [&](Tape* t) {
                              Var a = autograd::conv2d(
                                  t, x, w1, b1, autograd::Padding::same);
                              Var c = autograd::conv2d(
                                  t, x, w2, b2, autograd::Padding::same);
                              Var y = autograd::concat_channels(t, {a, c});
                              return autograd::cross_entropy(
                                  t,
                                  autograd::dense(t, autograd::flatten(t, y),
                                                  fw, fb),
                                  labels);
                          }),
               "channel concat");
    }
    require_budget(sw, 120.0);
}

// ---------------------------------------------------------------------------
// 4. Aggregation equals the sample-count-weighted element-wise mean, checked
//    against a long-double accumulator, plus the single-client identity and
//    the all-identical consensus case.

void fedavg_oracle() {
    Rng rng(0xfeda59ull);

    auto random_base = [&]() {
        ArchSpec spec;
        spec.family = "conv2";
        spec.kernel = 3;
        spec.input_shape = {1, 6, 6};
        spec.num_classes = 2 + rng.below(4);
        spec.widths = {2 + rng.below(3), 2 + rng.below(3)};
        return build_architecture(spec);
    };

    for (int trial = 0; trial < 180; ++trial) {
        ModelGraph base = random_base();
        const std::size_t n = 1 + rng.below(6);
        std::vector<ModelGraph> models;
        std::vector<std::size_t> counts;
        for (std::size_t i = 0; i < n; ++i) {
            ModelGraph m = base;
            init_weights(m, rng.next());
            models.push_back(std::move(m));
            counts.push_back(1 + rng.below(1000));
        }
        ModelGraph avg = fedavg(models, counts);

        std::vector<const TensorBuffer*> out = parameter_list(std::as_const(avg));
        std::vector<std::vector<const TensorBuffer*>> in;
        for (const ModelGraph& m : models) in.push_back(parameter_list(m));
        long double total = 0.0L;
        for (std::size_t c : counts) total += (long double)c;
        for (std::size_t t = 0; t < out.size(); ++t) {
            for (std::size_t e = 0; e < out[t]->size(); ++e) {
                long double acc = 0.0L;
                for (std::size_t i = 0; i < n; ++i)
                    acc += (long double)counts[i] * (long double)in[i][t]->data[e];
                const long double want = acc / total;
                const double got = out[t]->data[e];
                if (std::fabs((long double)got - want) > 1e-12L) {
                    std::ostringstream os;
                    os << "trial " << trial << ": element off by "
                       << (double)std::fabs((long double)got - want);
                    throw Failure(os.str());
                }
            }
        }
    }

    for (int trial = 0; trial < 10; ++trial) {  // single-client identity
        ModelGraph base = random_base();
        init_weights(base, rng.next());
        ModelGraph avg = fedavg({base}, {1 + rng.below(1000)});
        std::vector<const TensorBuffer*> a = parameter_list(std::as_const(avg));
        std::vector<const TensorBuffer*> b = parameter_list(std::as_const(base));
        for (std::size_t t = 0; t < a.size(); ++t)
            require(a[t]->data == b[t]->data,
                    "single-client aggregation is not the identity");
    }

    for (int trial = 0; trial < 10; ++trial) {  // consensus of identical models
        ModelGraph base = random_base();
        init_weights(base, rng.next());
        const std::size_t n = 2 + rng.below(5);
        std::vector<ModelGraph> models(n, base);
        std::vector<std::size_t> counts;
        for (std::size_t i = 0; i < n; ++i) counts.push_back(1 + rng.below(1000));
        ModelGraph avg = fedavg(models, counts);
        std::vector<const TensorBuffer*> a = parameter_list(std::as_const(avg));
        std::vector<const TensorBuffer*> b = parameter_list(std::as_const(base));
        for (std::size_t t = 0; t < a.size(); ++t)
            for (std::size_t e = 0; e < a[t]->size(); ++e)
                require(std::fabs(a[t]->data[e] - b[t]->data[e]) <= 1e-12,
                        "consensus aggregation moved the parameters");
    }
}

// ---------------------------------------------------------------------------
// 5. Desk-scale two-stage run: 50 clients at 10% selection, 5 local epochs,
//    batch 32, two conv layers at 64/128 filters, k=2.0, patience 3, then 50
//    fixed-architecture rounds. The search must halt before the round cap,
//    the final model must keep at most 60% of the initial parameters, and
//    final accuracy must stay within 5 points of a width-matched unpruned
//    control trained for the same total rounds. Kept for the byte check.

std::optional<ExperimentResult> desk_result;

RunConfig desk_config(const std::string& out_dir) {
    RunConfig cfg;
    cfg.seed = 1;
    cfg.family = "conv2";
    cfg.widths = {64, 128};
    cfg.kernel = 3;
    cfg.clients = 50;
    cfg.fraction = 0.10;
    cfg.local_epochs = 5;
    cfg.batch_size = 32;
    cfg.k = 2.0;
    cfg.patience = 3;
    cfg.stage1_cap = 100;
    cfg.stage2_rounds = 50;
    // A gentle learning rate matters here: with aggressive local steps the
    // strongest filters race ahead of the pack, land outside the score band,
    // and the search amputates exactly the features the model just learned.
    cfg.lr = 1e-3;
    cfg.dataset.type = "synthetic";
    cfg.dataset.classes = 4;
    cfg.dataset.samples_per_client = 20;
    cfg.dataset.test_samples = 100;
    cfg.dataset.image_shape = {1, 8, 8};
    cfg.dataset.noise = 0.1;
    cfg.dataset.shards_per_client = 3;
    cfg.baseline = true;
    cfg.out_dir = out_dir;
    return cfg;
}

void two_stage_desk_run() {
    Stopwatch sw;
    const std::filesystem::path dir = fresh_dir("desk");
    ExperimentResult res = run_experiment(desk_config(dir.string()));

    {
        std::ostringstream os;
        os << "search used " << res.stage1_rounds << " rounds (cap 100)";
        require(res.stage1_rounds < 100, os.str());
    }
    {
        std::ostringstream os;
        os << "kept " << res.params_final << " of " << res.params_initial
           << " params, above the 60% ceiling";
        require(res.params_final * 10 <= res.params_initial * 6, os.str());
    }
    const double pruned_acc = res.run.rows.back().accuracy;
    const double control_acc = res.baseline.rows.back().accuracy;
    {
        std::ostringstream os;
        os << "final accuracy " << pruned_acc << " vs control " << control_acc;
        require(control_acc - pruned_acc <= 0.05, os.str());
    }
    require_budget(sw, 1800.0);

    desk_result = std::move(res);
    std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// 6. Over the desk run: the pruned ledger's cumulative traffic undercuts the
//    control's, and every row's bytes equal params * 4 bytes * selected * 2
//    directions exactly.

void communication_cost() {
    require(desk_result.has_value(),
            "depends on the two-stage desk run, which did not finish");
    const MetricsLedger& run = desk_result->run;
    const MetricsLedger& control = desk_result->baseline;

    for (const MetricsLedger* ledger : {&run, &control}) {
        for (const LedgerRow& row : ledger->rows) {
            const unsigned long long want =
                (unsigned long long)row.params_broadcast * 4ull * row.selected *
                2ull;
            if (row.bytes_down + row.bytes_up != want) {
                std::ostringstream os;
                os << ledger->label << " round " << row.round << ": bytes "
                   << (row.bytes_down + row.bytes_up) << " != " << want;
                throw Failure(os.str());
            }
        }
    }
    const unsigned long long pruned_total = cumulative_bytes(run);
    const unsigned long long control_total = cumulative_bytes(control);
    std::ostringstream os;
    os << "pruned run moved " << pruned_total << " bytes vs control "
       << control_total;
    require(pruned_total < control_total, os.str());
}

// ---------------------------------------------------------------------------
// 7. Widening the boundary can only keep more: keep(2.0) ⊆ keep(2.5) ⊆
//    keep(3.0) on fixed snapshots, and an end-to-end sweep at those k values
//    retains a non-decreasing parameter count on the shared entry snapshot.

void k_monotonicity() {
    Rng rng(0x700c0ffeull);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 4 + rng.below(61);
        const std::size_t c = 1 + rng.below(8);
        ConvLayer layer = make_conv("l", n, c, 3, autograd::Padding::same, true);
        switch (trial % 3) {
            case 0: oracle::fill_normal(layer.w, rng, 0.0, 1.0); break;
            case 1: oracle::fill_uniform(layer.w, rng, -2.0, 2.0); break;
            default: oracle::fill_heavy(layer.w, rng); break;
        }
        std::vector<std::vector<std::size_t>> keeps;
        for (double k : {2.0, 2.5, 3.0}) {
            FilterScoreSummary summary = score_layer(layer);
            PruneConfig pc;
            pc.k = k;
            keeps.push_back(select_keep_set(summary, pc));
        }
        for (int j = 0; j < 2; ++j) {
            if (!std::includes(keeps[j + 1].begin(), keeps[j + 1].end(),
                               keeps[j].begin(), keeps[j].end())) {
                std::ostringstream os;
                os << "snapshot " << trial << ": keep set at k="
                   << (j ? 2.5 : 2.0) << " is not contained in the next";
                throw Failure(os.str());
            }
        }
    }

    const std::filesystem::path dir = fresh_dir("ksweep");
    RunConfig cfg;
    cfg.seed = 11;
    cfg.family = "conv2";
    cfg.widths = {12, 16};
    cfg.kernel = 3;
    cfg.clients = 10;
    cfg.fraction = 0.3;
    cfg.local_epochs = 1;
    cfg.batch_size = 8;
    cfg.patience = 3;
    cfg.stage1_cap = 6;
    cfg.stage2_rounds = 2;
    cfg.lr = 3e-3;
    cfg.dataset.classes = 4;
    cfg.dataset.samples_per_client = 8;
    cfg.dataset.test_samples = 24;
    cfg.dataset.image_shape = {1, 8, 8};
    cfg.baseline = false;
    cfg.out_dir = dir.string();
    std::vector<KSweepPoint> points = sweep_k(cfg, {2.0, 2.5, 3.0});
    require(points.size() == 3, "sweep did not produce three points");
    std::ostringstream os;
    os << "entry params " << points[0].entry_params << ", "
       << points[1].entry_params << ", " << points[2].entry_params
       << " are not non-decreasing in k";
    require(points[0].entry_params <= points[1].entry_params &&
                points[1].entry_params <= points[2].entry_params,
            os.str());
    std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// 8. With the prune step stubbed to emit parameter counts 100, 90, 90, 90,
//    90, patience 3 halts the search exactly after round 5, the third
//    consecutive round without a decrease.

ModelGraph flat_dense_model(std::size_t width, std::uint64_t seed) {
    ModelGraph g;
    g.input_shape = {1, 3, 3};
    g.num_classes = width;
    g.nodes.emplace_back(FlattenLayer{});
    g.nodes.emplace_back(make_dense("fc", 9, width));
    init_weights(g, seed);
    return g;
}

void early_stop_schedule() {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.clients = 5;
    spec.samples_per_client = 4;
    spec.test_samples = 8;
    spec.image_shape = {1, 3, 3};
    FederatedDataset data = generate_synthetic(spec, 7);

    FederatedRun run;
    run.global = flat_dense_model(12, 1);  // 120 params
    run.cfg.clients = 5;
    run.cfg.fraction = 0.4;
    run.cfg.local.epochs = 0;
    run.cfg.stage1_cap = 100;
    run.cfg.seed = 9;

    std::size_t calls = 0;
    PruneFn stub = [&](const ModelGraph&) {
        ++calls;
        return flat_dense_model(calls == 1 ? 10 : 9, 100 + calls);
    };
    PruneConfig pc;
    pc.stop_patience = 3;
    const std::size_t used = run_stage1(run, data, pc, {}, stub);

    require(used == 5,
            "search halted after " + std::to_string(used) + " rounds, not 5");
    const std::vector<std::size_t> want = {120, 100, 90, 90, 90, 90};
    require(run.param_history == want, "parameter history does not match");
}

// ---------------------------------------------------------------------------
// 9. Architecture search lands on about the same size whether 5 or 10
//    clients train per round: over 10 seeds each, the mean final parameter
//    counts differ by less than two pooled standard deviations.

void client_count_robustness() {
    const std::filesystem::path dir = fresh_dir("csweep");
    RunConfig cfg = desk_config(dir.string());
    std::vector<ClientSweepPoint> points = sweep_clients(cfg, {5, 10}, 10);
    require(points.size() == 2, "sweep did not produce two points");
    for (const ClientSweepPoint& p : points)
        require(p.finals.size() == 10,
                "expected 10 runs per client count, got " +
                    std::to_string(p.finals.size()));

    const double diff =
        std::fabs(points[0].mean_params - points[1].mean_params);
    const double pooled =
        std::sqrt((points[0].stddev_params * points[0].stddev_params +
                   points[1].stddev_params * points[1].stddev_params) /
                  2.0);
    std::ostringstream os;
    os << "means " << points[0].mean_params << " vs " << points[1].mean_params
       << ", pooled stddev " << pooled;
    if (pooled > 0.0)
        require(diff < 2.0 * pooled, os.str());
    else
        require(diff == 0.0, os.str());
    std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// 10. Identical config and seed give identical ledgers (wall clock aside)
//     and the same final per-layer filter counts.

void determinism() {
    RunConfig cfg;
    cfg.seed = 5;
    cfg.family = "conv2";
    cfg.widths = {8, 12};
    cfg.kernel = 3;
    cfg.clients = 6;
    cfg.fraction = 0.5;
    cfg.local_epochs = 1;
    cfg.batch_size = 8;
    cfg.patience = 2;
    cfg.stage1_cap = 6;
    cfg.stage2_rounds = 3;
    cfg.lr = 3e-3;
    cfg.dataset.classes = 3;
    cfg.dataset.samples_per_client = 8;
    cfg.dataset.test_samples = 24;
    cfg.dataset.image_shape = {1, 8, 8};
    cfg.baseline = true;

    const std::filesystem::path d1 = fresh_dir("rep1");
    const std::filesystem::path d2 = fresh_dir("rep2");
    cfg.out_dir = d1.string();
    ExperimentResult r1 = run_experiment(cfg);
    cfg.out_dir = d2.string();
    ExperimentResult r2 = run_experiment(cfg);

    auto same_rows = [](const MetricsLedger& a, const MetricsLedger& b,
                        const char* which) {
        require(a.rows.size() == b.rows.size(),
                std::string(which) + ": round counts differ");
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            const LedgerRow& x = a.rows[i];
            const LedgerRow& y = b.rows[i];
            const bool same =
                x.round == y.round && x.stage == y.stage &&
                x.params_broadcast == y.params_broadcast &&
                x.params_end == y.params_end && x.flops == y.flops &&
                x.accuracy == y.accuracy &&
                x.best_accuracy == y.best_accuracy &&
                x.bytes_down == y.bytes_down && x.bytes_up == y.bytes_up &&
                x.selected == y.selected && x.filters == y.filters;
            require(same, std::string(which) + ": round " +
                              std::to_string(x.round) + " differs");
        }
    };
    same_rows(r1.run, r2.run, "pruned run");
    same_rows(r1.baseline, r2.baseline, "control run");
    require(r1.run.rows.back().filters == r2.run.rows.back().filters,
            "final filter counts differ");
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
}

int failures = 0;

void run_criterion(const char* name, const std::function<void()>& body) {
    try {
        body();
        std::printf("[PASS] %s\n", name);
    } catch (const std::exception& e) {
        ++failures;
        std::printf("[FAIL] %s: %s\n", name, e.what());
    }
    std::fflush(stdout);
}

}  // namespace

int main() {
    run_criterion("boundary selection matches a high-precision oracle",
                  boundary_oracle);
    run_criterion("removing a zeroed filter leaves the network unchanged",
                  zero_filter_preservation);
    run_criterion("analytic gradients match central finite differences",
                  gradient_check);
    run_criterion("aggregation matches the weighted-mean oracle", fedavg_oracle);
    run_criterion("two-stage run halts early, sheds 40% of params, holds accuracy",
                  two_stage_desk_run);
    run_criterion("pruned run moves fewer bytes and per-round bytes are exact",
                  communication_cost);
    run_criterion("wider boundaries keep supersets of filters", k_monotonicity);
    run_criterion("patience rule halts exactly on schedule", early_stop_schedule);
    run_criterion("searched size is stable across client participation",
                  client_count_robustness);
    run_criterion("identical config and seed reproduce the ledger", determinism);
    return failures == 0 ? 0 : 1;
}
