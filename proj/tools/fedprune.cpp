#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedprune/checkpoint.hpp"
#include "fedprune/config.hpp"
#include "fedprune/errors.hpp"
#include "fedprune/experiment.hpp"
#include "fedprune/plots.hpp"

namespace {

using namespace fedprune;

struct Overrides {
    CLI::App* cmd = nullptr;
    std::string config_path;

    void attach(CLI::App* app) {
        cmd = app;
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--seed", "RNG seed");
        cmd->add_option("--family", "architecture family");
        cmd->add_option("--widths", "conv widths, comma separated")
            ->delimiter(',');
        cmd->add_option("--kernel", "conv kernel size");
        cmd->add_option("--clients", "client population");
        cmd->add_option("--fraction", "fraction trained per round");
        cmd->add_option("--epochs", "local epochs per round");
        cmd->add_option("--batch", "local batch size");
        cmd->add_option("--k", "pruning boundary half-width in sigmas");
        cmd->add_option("--patience", "non-decreasing rounds before the search halts");
        cmd->add_option("--stage1-cap", "hard cap on search rounds");
        cmd->add_option("--stage2-rounds", "training rounds after the search");
        cmd->add_option("--out", "output directory");
        cmd->add_flag("--no-baseline", "skip the unpruned control run");
    }

    template <typename T>
    void take(const char* name, T& into) const {
        const CLI::Option* opt = cmd->get_option(name);
        if (opt->count() > 0) into = opt->as<T>();
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        take("--seed", cfg.seed);
        take("--family", cfg.family);
        take("--widths", cfg.widths);
        take("--kernel", cfg.kernel);
        take("--clients", cfg.clients);
        take("--fraction", cfg.fraction);
        take("--epochs", cfg.local_epochs);
        take("--batch", cfg.batch_size);
        take("--k", cfg.k);
        take("--patience", cfg.patience);
        take("--stage1-cap", cfg.stage1_cap);
        take("--stage2-rounds", cfg.stage2_rounds);
        take("--out", cfg.out_dir);
        if (cmd->get_option("--no-baseline")->count() > 0) cfg.baseline = false;
        validate(cfg);
        return cfg;
    }
};

int do_run(const Overrides& ov) {
    const RunConfig cfg = ov.resolve();
    const ExperimentResult res = run_experiment(cfg);
    std::printf("stage 1 rounds:     %zu\n", res.stage1_rounds);
    std::printf("params initial:     %zu\n", res.params_initial);
    std::printf("params final:       %zu\n", res.params_final);
    std::printf("best accuracy:      %.4f\n", res.best_accuracy);
    if (!res.baseline.rows.empty()) {
        std::printf("baseline accuracy:  %.4f\n", res.baseline_best_accuracy);
    }
    std::printf("ledger:             %s\n", res.ledger_path.c_str());
    std::printf("checkpoint:         %s\n", res.checkpoint_path.c_str());
    return 0;
}

int do_sweep_k(const Overrides& ov, const std::vector<double>& ks) {
    const RunConfig cfg = ov.resolve();
    const std::vector<KSweepPoint> points = sweep_k(cfg, ks);
    std::printf("k\tentry_params\tfinal_params\trounds\tbest_acc\tbytes\n");
    for (const KSweepPoint& p : points) {
        std::printf("%g\t%zu\t%zu\t%zu\t%.4f\t%llu\n", p.k, p.entry_params,
                    p.final_params, p.stage1_rounds, p.best_accuracy, p.bytes);
    }
    return 0;
}

int do_sweep_clients(const Overrides& ov, const std::vector<std::size_t>& counts,
                     std::size_t seeds) {
    const RunConfig cfg = ov.resolve();
    const std::vector<ClientSweepPoint> points = sweep_clients(cfg, counts, seeds);
    std::printf("selected\tmean_params\tstddev_params\n");
    for (const ClientSweepPoint& p : points) {
        std::printf("%zu\t%.2f\t%.2f\n", p.selected, p.mean_params, p.stddev_params);
    }
    return 0;
}

int do_plot(const std::vector<std::string>& ledger_paths, const std::string& out_dir) {
    std::vector<MetricsLedger> ledgers;
    for (const std::string& path : ledger_paths) ledgers.push_back(read_ledger(path));
    std::filesystem::create_directories(out_dir);
    plot_metric(ledgers, "accuracy", "Test accuracy by round", out_dir + "/accuracy.svg");
    plot_metric(ledgers, "params_end", "Model size by round", out_dir + "/params.svg");
    plot_metric(ledgers, "cumulative_bytes", "Communication cost by round",
                out_dir + "/cost.svg");
    std::printf("wrote accuracy.svg, params.svg, cost.svg to %s\n", out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated training with server-side structured pruning"};
    app.require_subcommand(1);

    Overrides run_ov;
    CLI::App* run_cmd = app.add_subcommand("run", "two-stage run plus optional control");
    run_ov.attach(run_cmd);

    Overrides sk_ov;
    std::vector<double> ks{2.0, 2.5, 3.0};
    CLI::App* sk_cmd = app.add_subcommand("sweep-k", "full runs over several k values");
    sk_ov.attach(sk_cmd);
    sk_cmd->add_option("--ks", ks, "k values to sweep")->delimiter(',');

    Overrides sc_ov;
    std::vector<std::size_t> counts{5, 10};
    std::size_t n_seeds = 10;
    CLI::App* sc_cmd = app.add_subcommand(
        "sweep-clients", "repeat the search stage at several per-round client counts");
    sc_ov.attach(sc_cmd);
    sc_cmd->add_option("--counts", counts, "clients per round to sweep")->delimiter(',');
    sc_cmd->add_option("--seeds", n_seeds, "seeds per count");

    std::vector<std::string> ledger_paths;
    std::string plot_out = ".";
    CLI::App* plot_cmd = app.add_subcommand("plot", "charts from existing ledgers");
    plot_cmd->add_option("ledgers", ledger_paths, "ledger files")->required();
    plot_cmd->add_option("--out", plot_out, "output directory");

    std::string ckpt_path;
    CLI::App* ins_cmd = app.add_subcommand("inspect-checkpoint",
                                           "shapes, parameter and FLOP counts");
    ins_cmd->add_option("file", ckpt_path, "checkpoint file")->required();

    try {
        app.parse(argc, argv);
        if (run_cmd->parsed()) return do_run(run_ov);
        if (sk_cmd->parsed()) return do_sweep_k(sk_ov, ks);
        if (sc_cmd->parsed()) return do_sweep_clients(sc_ov, counts, n_seeds);
        if (plot_cmd->parsed()) return do_plot(ledger_paths, plot_out);
        if (ins_cmd->parsed()) {
            std::printf("%s\n", checkpoint_summary(ckpt_path).c_str());
            return 0;
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
