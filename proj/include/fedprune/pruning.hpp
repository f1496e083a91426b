#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fedprune/model.hpp"

namespace fedprune {

/// Per-layer filter statistics. S[n] is the sum of |w| over all C*K*K
/// elements of filter n (biases excluded); mu_s/sigma_s use population (1/N)
/// normalization. lower/upper and keep_indices are filled by select_keep_set.
struct FilterScoreSummary {
    std::vector<double> S;
    double mu_s = 0.0;
    double sigma_s = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    std::vector<std::size_t> keep_indices;
    bool guard_fired = false;
};

struct PruneConfig {
    double k = 2.0;                 // boundary half-width in sigmas
    int stop_patience = 3;          // consecutive non-decreasing rounds to halt
    std::size_t min_filters = 1;    // floor on retained filters per layer
};

/// Validates k >= 0, stop_patience >= 1, min_filters >= 1.
void validate(const PruneConfig& config);

/// Scores one conv layer; does not compute the keep set.
FilterScoreSummary score_layer(const ConvLayer& layer);

/// Fills lower/upper/keep_indices: filters with lower <= S_n <= upper stay,
/// boundaries inclusive. If fewer than min_filters would remain, the
/// min_filters filters with S_n closest to mu_s are retained instead (ties
/// broken toward the lower index) and guard_fired is set.
std::vector<std::size_t> select_keep_set(FilterScoreSummary& summary,
                                         const PruneConfig& config);

struct LayerPruneRecord {
    std::string name;
    bool prunable = false;
    std::size_t filters_before = 0;
    std::size_t filters_after = 0;
    bool guard_fired = false;
    double mu_s = 0.0;
    double sigma_s = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

struct PruneReport {
    std::vector<LayerPruneRecord> layers;
    std::size_t params_before = 0;
    std::size_t params_after = 0;
    unsigned long long flops_before = 0;
    unsigned long long flops_after = 0;
};

/// Removes out-of-boundary filters from every prunable conv layer and rewires
/// the graph: downstream convs drop the matching input-channel kernel slices,
/// a flatten-fed dense layer drops all spatial rows of removed channels, and
/// inception branch outputs keep their concatenation offsets. All layers are
/// scored on the pre-prune snapshot before any filter is removed. Kept
/// weights keep their values.
std::pair<ModelGraph, PruneReport> prune_model(const ModelGraph& g,
                                               const PruneConfig& config);

/// JSON rendering of a report: global and per-layer reductions as fractions.
std::string prune_report_format(const PruneReport& report);

}  // namespace fedprune
