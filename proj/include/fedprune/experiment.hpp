#pragma once

#include <string>
#include <vector>

#include "fedprune/config.hpp"
#include "fedprune/federation.hpp"
#include "fedprune/metrics.hpp"

namespace fedprune {

struct ExperimentResult {
    MetricsLedger run;       // two-stage ledger
    MetricsLedger baseline;  // no rows when the control run is disabled
    std::size_t stage1_rounds = 0;
    std::size_t params_initial = 0;
    std::size_t params_final = 0;
    double best_accuracy = 0.0;
    double baseline_best_accuracy = 0.0;
    std::string ledger_path;
    std::string baseline_ledger_path;
    std::string checkpoint_path;
    std::string baseline_checkpoint_path;
    std::string prune_log_path;
};

/// Builds the dataset and initial model from cfg, runs the two-stage
/// federated procedure, and writes the ledger, per-round pruning log,
/// checkpoint, and standard charts into cfg.out_dir. When cfg.baseline is
/// set, an identically initialized control run trains without pruning for
/// the same total rounds under the same seed, so round counts and client
/// selections line up exactly.
ExperimentResult run_experiment(const RunConfig& cfg);

struct KSweepPoint {
    double k = 0.0;
    std::size_t entry_params = 0;  // params kept when pruning the shared snapshot
    std::size_t final_params = 0;
    std::size_t stage1_rounds = 0;
    double best_accuracy = 0.0;
    unsigned long long bytes = 0;  // cumulative over the whole run
};

/// Full runs at several boundary widths, all starting from one shared
/// initial model. entry_params comes from a single pruning pass over that
/// shared snapshot; per-run ledgers, a summary table, and an
/// accuracy-versus-cost chart land in cfg.out_dir.
std::vector<KSweepPoint> sweep_k(const RunConfig& cfg, const std::vector<double>& ks);

struct ClientSweepPoint {
    std::size_t selected = 0;  // clients trained per round
    double mean_params = 0.0;
    double stddev_params = 0.0;  // sample stddev over seeds, 0 for one seed
    std::vector<std::size_t> finals;
};

/// Architecture-search-only runs at several per-round client counts, each
/// repeated under n_seeds seeds (fresh data and init per seed). Records the
/// final searched parameter count of every run and writes a summary table.
std::vector<ClientSweepPoint> sweep_clients(const RunConfig& cfg,
                                            const std::vector<std::size_t>& counts,
                                            std::size_t n_seeds);

/// The dataset a config describes: synthetic generation or an IDX pair
/// partitioned into label shards.
FederatedDataset build_dataset(const RunConfig& cfg);

/// The freshly initialized model a config describes.
ModelGraph build_initial_model(const RunConfig& cfg, const FederatedDataset& data);

}  // namespace fedprune
