#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedprune/federation.hpp"

namespace fedprune {

/// One ledger line per completed round. wall_ms is wall clock and is the
/// only column expected to differ between repeated runs of the same config.
struct LedgerRow {
    std::size_t round = 0;
    std::string stage;  // "search" | "train"
    std::size_t params_broadcast = 0;
    std::size_t params_end = 0;
    unsigned long long flops = 0;  // per-sample forward cost at round end
    double accuracy = 0.0;
    double best_accuracy = 0.0;  // running max up to this round
    unsigned long long bytes_down = 0;
    unsigned long long bytes_up = 0;
    std::size_t selected = 0;
    std::vector<std::size_t> filters;  // per-conv filter counts at round end
    double wall_ms = 0.0;
};

struct MetricsLedger {
    std::string label;  // run name, e.g. "pruned" or "k=2.5"
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<LedgerRow> rows;
};

/// Payload bytes for one round: a params-sized model serialized at width
/// bytes per scalar, sent once to each of selected clients and once back.
unsigned long long round_bytes(std::size_t params, std::size_t selected,
                               std::size_t width);

/// Sum of bytes_down + bytes_up over all rows. Empty ledger is a ConfigError.
unsigned long long cumulative_bytes(const MetricsLedger& ledger);

/// Derives a row from a completed round. flops is the per-sample forward
/// cost of the end-of-round model; width feeds round_bytes. best_accuracy
/// continues the running max over the ledger so far.
void append_round(MetricsLedger& ledger, const RoundInfo& info,
                  unsigned long long flops, std::size_t width = 4);

/// Tab-separated file: "# key=value" metadata lines, a header line, one row
/// per round. Doubles are written with enough digits to round-trip exactly.
void write_ledger(const MetricsLedger& ledger, const std::string& path);

/// Parses a file written by write_ledger. Structural defects throw
/// IngestError naming the path and line.
MetricsLedger read_ledger(const std::string& path);

}  // namespace fedprune
