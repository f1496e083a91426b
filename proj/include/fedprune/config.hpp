#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fedprune {

struct DatasetConfig {
    std::string type = "synthetic";  // "synthetic" | "idx"
    // synthetic generator
    std::size_t classes = 6;
    std::size_t samples_per_client = 16;
    std::size_t test_samples = 120;
    std::vector<std::size_t> image_shape{1, 12, 12};
    double noise = 0.1;
    // idx file pair
    std::string images;
    std::string labels;
    std::size_t test_count = 1000;
    // both
    std::size_t shards_per_client = 2;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string family = "conv2";
    std::vector<std::size_t> widths;  // empty picks the family default
    std::size_t kernel = 5;
    std::size_t clients = 50;
    double fraction = 0.10;
    std::size_t local_epochs = 5;
    std::size_t batch_size = 32;
    double k = 2.0;
    int patience = 3;
    std::size_t min_filters = 1;
    std::size_t stage1_cap = 100;
    std::size_t stage2_rounds = 50;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool baseline = true;  // also train a width-matched unpruned control
    DatasetConfig dataset;
    std::string out_dir = "runs";
};

/// Parses a JSON object; unknown keys and ill-typed values are ConfigErrors
/// naming the key. origin labels error messages (a path or "<memory>").
RunConfig config_from_json_text(const std::string& text,
                                const std::string& origin = "<memory>");

RunConfig load_config(const std::string& path);

/// Canonical JSON rendering: every field, keys sorted. Two configs are equal
/// iff their renderings are byte-identical.
std::string config_to_json(const RunConfig& cfg);

/// FNV-1a 64 over the canonical rendering, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// Range checks across all fields; throws ConfigError naming the field.
void validate(const RunConfig& cfg);

}  // namespace fedprune
