#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fedprune/client.hpp"
#include "fedprune/dataset.hpp"
#include "fedprune/model.hpp"
#include "fedprune/pruning.hpp"

namespace fedprune {

enum class Stage { search, train };

struct FederatedRunConfig {
    std::size_t clients = 50;  // total population M
    double fraction = 0.10;    // selected per round: max(1, round(fraction*M))
    LocalTrainConfig local;
    std::size_t stage1_cap = 100;
    std::size_t stage2_rounds = 50;
    std::uint64_t seed = 1;
};

/// Everything the server learns from one completed round.
struct RoundInfo {
    std::size_t round = 0;  // 1-based, keeps counting across the stage switch
    Stage stage = Stage::search;
    std::size_t params_broadcast = 0;  // size of the model sent to clients
    std::size_t params_end = 0;        // size after aggregation (and pruning)
    std::vector<std::size_t> selected;
    double accuracy = 0.0;  // test accuracy of the end-of-round model, in [0,1]
    std::vector<std::size_t> filters;  // per-conv filter counts at round end
    double wall_ms = 0.0;
};

using RoundHook = std::function<void(const RoundInfo&)>;

/// Replacement pruning step for run_stage1; receives the aggregated model.
using PruneFn = std::function<ModelGraph(const ModelGraph&)>;

/// Server-side run state. A run moves through the stages exactly once:
/// search (prune after every aggregation) then train (fixed architecture).
/// A run constructed directly in Stage::train is a no-pruning control.
struct FederatedRun {
    ModelGraph global;
    FederatedRunConfig cfg;
    Stage stage = Stage::search;
    std::size_t round = 0;
    std::vector<std::size_t> param_history;  // P_0 then one entry per search round
};

/// Deterministic per (seed, round): same inputs give the same set, in
/// sampling order, regardless of how many rounds ran before.
std::vector<std::size_t> select_clients(std::uint64_t seed, std::size_t round,
                                        std::size_t clients, double fraction);

/// Sample-count-weighted element-wise mean of structurally identical models.
/// Structure mismatch, empty input, or a zero-sample client is an
/// AggregationError.
ModelGraph fedavg(const std::vector<ModelGraph>& models,
                  const std::vector<std::size_t>& counts);

/// Fraction of test samples whose argmax logit matches the label; an argmax
/// tie resolves to the lowest class index.
double evaluate(const ModelGraph& g, const std::vector<Sample>& test);

/// Architecture search: rounds of select/train/aggregate, each followed by a
/// pruning pass. Halts once the parameter count has failed to drop for
/// config.stop_patience consecutive rounds, or at cfg.stage1_cap. Leaves the
/// run in Stage::train and returns the number of rounds used. custom_prune
/// (tests only) replaces the default pruning pass.
std::size_t run_stage1(FederatedRun& run, const FederatedDataset& data,
                       const PruneConfig& config, const RoundHook& hook = {},
                       const PruneFn& custom_prune = {});

/// Fixed-architecture training for the given number of rounds. The round
/// counter continues from where stage 1 left it, so client selections line
/// up with a control run that skipped pruning.
void run_stage2(FederatedRun& run, const FederatedDataset& data,
                std::size_t rounds, const RoundHook& hook = {});

}  // namespace fedprune
