#pragma once

#include <string>
#include <vector>

#include "fedprune/metrics.hpp"

namespace fedprune {

/// Renders one ledger column per round as an SVG line chart, one series per
/// ledger. Columns: accuracy, best_accuracy, params_end, flops,
/// cumulative_bytes, wall_ms. The exact plotted values are embedded in a
/// <metadata> block so the chart can be audited without the ledgers. A
/// ledger with no rounds is a ConfigError; no file is written.
void plot_metric(const std::vector<MetricsLedger>& ledgers,
                 const std::string& column, const std::string& title,
                 const std::string& path);

struct ScatterPoint {
    std::string label;
    double x = 0.0;
    double y = 0.0;
};

/// Labelled scatter chart with the same embedded source table contract.
void plot_scatter(const std::vector<ScatterPoint>& points,
                  const std::string& x_label, const std::string& y_label,
                  const std::string& title, const std::string& path);

}  // namespace fedprune
