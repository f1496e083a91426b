#include "fedprune/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fedprune/checkpoint.hpp"
#include "fedprune/errors.hpp"
#include "fedprune/plots.hpp"
#include "fedprune/rng.hpp"

namespace fedprune {

namespace {

namespace fs = std::filesystem;

std::string fmt_k(double k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", k);
    return buf;
}

void ensure_out_dir(const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + out_dir);
}

PruneConfig prune_config(const RunConfig& cfg) {
    PruneConfig pc;
    pc.k = cfg.k;
    pc.stop_patience = cfg.patience;
    pc.min_filters = cfg.min_filters;
    return pc;
}

FederatedRunConfig fed_config(const RunConfig& cfg) {
    FederatedRunConfig fc;
    fc.clients = cfg.clients;
    fc.fraction = cfg.fraction;
    fc.local.epochs = cfg.local_epochs;
    fc.local.batch_size = cfg.batch_size;
    fc.local.lr = cfg.lr;
    fc.local.beta1 = cfg.beta1;
    fc.local.beta2 = cfg.beta2;
    fc.local.eps = cfg.eps;
    fc.stage1_cap = cfg.stage1_cap;
    fc.stage2_rounds = cfg.stage2_rounds;
    fc.seed = cfg.seed;
    return fc;
}

MetricsLedger make_ledger(const RunConfig& cfg, const std::string& label) {
    MetricsLedger lg;
    lg.label = label;
    lg.seed = cfg.seed;
    lg.config_hash = config_hash(cfg);
    return lg;
}

RoundHook ledger_hook(MetricsLedger& ledger, const FederatedRun& run) {
    return [&ledger, &run](const RoundInfo& info) {
        append_round(ledger, info, count_flops(run.global).total());
    };
}

double ledger_best(const MetricsLedger& ledger) {
    return ledger.rows.empty() ? 0.0 : ledger.rows.back().best_accuracy;
}

}  // namespace

FederatedDataset build_dataset(const RunConfig& cfg) {
    const DatasetConfig& d = cfg.dataset;
    if (d.type == "synthetic") {
        SyntheticSpec spec;
        spec.classes = d.classes;
        spec.clients = cfg.clients;
        spec.samples_per_client = d.samples_per_client;
        spec.test_samples = d.test_samples;
        spec.shards_per_client = d.shards_per_client;
        spec.image_shape = d.image_shape;
        spec.noise = d.noise;
        return generate_synthetic(spec, cfg.seed);
    }
    std::vector<Sample> samples = load_idx(d.images, d.labels);
    return partition_label_shards(std::move(samples), cfg.clients,
                                  d.shards_per_client, d.test_count, cfg.seed);
}

ModelGraph build_initial_model(const RunConfig& cfg, const FederatedDataset& data) {
    ArchSpec spec;
    spec.family = cfg.family;
    spec.widths = cfg.widths;
    spec.kernel = cfg.kernel;
    spec.input_shape = data.image_shape;
    spec.num_classes = data.num_classes;
    ModelGraph g = build_architecture(spec);
    init_weights(g, cfg.seed);
    return g;
}

ExperimentResult run_experiment(const RunConfig& cfg) {
    validate(cfg);
    ensure_out_dir(cfg.out_dir);
    const FederatedDataset data = build_dataset(cfg);
    const ModelGraph initial = build_initial_model(cfg, data);

    ExperimentResult res;
    res.params_initial = count_params(initial);

    FederatedRun run;
    run.global = initial;
    run.cfg = fed_config(cfg);
    res.run = make_ledger(cfg, "pruned");

    std::vector<std::string> prune_reports;
    const PruneConfig pc = prune_config(cfg);
    const PruneFn logging_prune = [&](const ModelGraph& g) {
        auto [next, report] = prune_model(g, pc);
        prune_reports.push_back(prune_report_format(report));
        return next;
    };

    const RoundHook hook = ledger_hook(res.run, run);
    res.stage1_rounds = run_stage1(run, data, pc, hook, logging_prune);
    run_stage2(run, data, cfg.stage2_rounds, hook);

    res.params_final = count_params(run.global);
    res.best_accuracy = ledger_best(res.run);

    res.ledger_path = cfg.out_dir + "/run_ledger.tsv";
    write_ledger(res.run, res.ledger_path);
    res.checkpoint_path = cfg.out_dir + "/model.fpck";
    save_checkpoint(run.global, res.checkpoint_path);

    res.prune_log_path = cfg.out_dir + "/prune_log.json";
    {
        std::ofstream os(res.prune_log_path, std::ios::binary);
        if (!os) throw ConfigError("cannot open " + res.prune_log_path);
        os << "[\n";
        for (std::size_t i = 0; i < prune_reports.size(); ++i) {
            os << prune_reports[i];
            if (i + 1 < prune_reports.size()) os << ",";
            os << "\n";
        }
        os << "]\n";
    }

    std::vector<MetricsLedger> chart{res.run};
    if (cfg.baseline) {
        FederatedRun base;
        base.global = initial;
        base.cfg = fed_config(cfg);
        base.stage = Stage::train;  // no search stage: architecture stays fixed
        res.baseline = make_ledger(cfg, "baseline");
        run_stage2(base, data, res.stage1_rounds + cfg.stage2_rounds,
                   ledger_hook(res.baseline, base));
        res.baseline_best_accuracy = ledger_best(res.baseline);
        res.baseline_ledger_path = cfg.out_dir + "/baseline_ledger.tsv";
        write_ledger(res.baseline, res.baseline_ledger_path);
        res.baseline_checkpoint_path = cfg.out_dir + "/baseline_model.fpck";
        save_checkpoint(base.global, res.baseline_checkpoint_path);
        chart.push_back(res.baseline);
    }

    plot_metric(chart, "accuracy", "Test accuracy by round", cfg.out_dir + "/accuracy.svg");
    plot_metric(chart, "params_end", "Model size by round", cfg.out_dir + "/params.svg");
    plot_metric(chart, "cumulative_bytes", "Communication cost by round",
                cfg.out_dir + "/cost.svg");
    return res;
}

std::vector<KSweepPoint> sweep_k(const RunConfig& cfg, const std::vector<double>& ks) {
    validate(cfg);
    if (ks.empty()) throw ConfigError("sweep_k: no k values given");
    ensure_out_dir(cfg.out_dir);
    const FederatedDataset data = build_dataset(cfg);
    const ModelGraph snapshot = build_initial_model(cfg, data);

    std::vector<KSweepPoint> points;
    std::vector<MetricsLedger> ledgers;
    for (double k : ks) {
        RunConfig rc = cfg;
        rc.k = k;
        const PruneConfig pc = prune_config(rc);

        KSweepPoint p;
        p.k = k;
        p.entry_params = count_params(prune_model(snapshot, pc).first);

        FederatedRun run;
        run.global = snapshot;
        run.cfg = fed_config(rc);
        MetricsLedger ledger = make_ledger(rc, "k=" + fmt_k(k));
        const RoundHook hook = ledger_hook(ledger, run);
        p.stage1_rounds = run_stage1(run, data, pc, hook);
        run_stage2(run, data, rc.stage2_rounds, hook);

        p.final_params = count_params(run.global);
        p.best_accuracy = ledger_best(ledger);
        p.bytes = cumulative_bytes(ledger);
        write_ledger(ledger, cfg.out_dir + "/k_" + fmt_k(k) + "_ledger.tsv");
        ledgers.push_back(std::move(ledger));
        points.push_back(p);
    }

    {
        const std::string path = cfg.out_dir + "/k_sweep.tsv";
        std::ofstream os(path, std::ios::binary);
        if (!os) throw ConfigError("cannot open " + path);
        os << "k\tentry_params\tfinal_params\tstage1_rounds\tbest_accuracy\tbytes\n";
        for (const KSweepPoint& p : points) {
            char acc[40];
            std::snprintf(acc, sizeof(acc), "%.17g", p.best_accuracy);
            os << fmt_k(p.k) << '\t' << p.entry_params << '\t' << p.final_params << '\t'
               << p.stage1_rounds << '\t' << acc << '\t' << p.bytes << "\n";
        }
    }

    std::vector<ScatterPoint> scatter;
    for (const KSweepPoint& p : points) {
        scatter.push_back({"k=" + fmt_k(p.k), static_cast<double>(p.bytes),
                           p.best_accuracy});
    }
    plot_scatter(scatter, "cumulative bytes", "best accuracy",
                 "Accuracy against communication cost", cfg.out_dir + "/pareto.svg");
    plot_metric(ledgers, "params_end", "Model size by round",
                cfg.out_dir + "/k_params.svg");
    return points;
}

std::vector<ClientSweepPoint> sweep_clients(const RunConfig& cfg,
                                            const std::vector<std::size_t>& counts,
                                            std::size_t n_seeds) {
    validate(cfg);
    if (counts.empty()) throw ConfigError("sweep_clients: no client counts given");
    if (n_seeds == 0) throw ConfigError("sweep_clients: n_seeds must be >= 1");
    ensure_out_dir(cfg.out_dir);

    std::vector<ClientSweepPoint> points;
    for (std::size_t count : counts) {
        if (count == 0 || count > cfg.clients) {
            throw ConfigError("sweep_clients: count " + std::to_string(count) +
                              " outside the population of " +
                              std::to_string(cfg.clients));
        }
        ClientSweepPoint p;
        p.selected = count;
        for (std::size_t si = 0; si < n_seeds; ++si) {
            RunConfig rc = cfg;
            rc.seed = Rng::mix(cfg.seed, 0xc0047ull + si);
            rc.fraction =
                static_cast<double>(count) / static_cast<double>(cfg.clients);
            const FederatedDataset data = build_dataset(rc);
            FederatedRun run;
            run.global = build_initial_model(rc, data);
            run.cfg = fed_config(rc);
            run_stage1(run, data, prune_config(rc));
            p.finals.push_back(run.param_history.back());
        }
        double mean = 0.0;
        for (std::size_t v : p.finals) mean += static_cast<double>(v);
        mean /= static_cast<double>(p.finals.size());
        double var = 0.0;
        for (std::size_t v : p.finals) {
            const double d = static_cast<double>(v) - mean;
            var += d * d;
        }
        p.mean_params = mean;
        p.stddev_params = p.finals.size() > 1
                              ? std::sqrt(var / static_cast<double>(p.finals.size() - 1))
                              : 0.0;
        points.push_back(std::move(p));
    }

    const std::string path = cfg.out_dir + "/client_sweep.tsv";
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open " + path);
    os << "selected\tmean_params\tstddev_params\tfinals\n";
    for (const ClientSweepPoint& p : points) {
        char m[40], s[40];
        std::snprintf(m, sizeof(m), "%.17g", p.mean_params);
        std::snprintf(s, sizeof(s), "%.17g", p.stddev_params);
        os << p.selected << '\t' << m << '\t' << s << '\t';
        for (std::size_t i = 0; i < p.finals.size(); ++i) {
            if (i != 0) os << '|';
            os << p.finals[i];
        }
        os << "\n";
    }
    return points;
}

}  // namespace fedprune
