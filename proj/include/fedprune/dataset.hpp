#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedprune/tensor.hpp"

namespace fedprune {

struct Sample {
    TensorBuffer image;  // [C,H,W]
    int label = 0;
};

/// Client partitions plus a centralized held-out test split. Client sample
/// sets are disjoint, every client holds at least one sample, and the test
/// split overlaps no client.
struct FederatedDataset {
    std::vector<std::vector<Sample>> clients;
    std::vector<Sample> test;
    std::size_t num_classes = 0;
    Shape image_shape;
};

struct SyntheticSpec {
    std::size_t classes = 6;
    std::size_t clients = 50;
    std::size_t samples_per_client = 16;
    std::size_t test_samples = 120;
    std::size_t shards_per_client = 2;
    Shape image_shape = {1, 12, 12};
    double noise = 0.1;
};

/// Deterministic synthetic classification data: each class is a distinct
/// smoothed random template, each sample the template plus Gaussian pixel
/// noise, clamped to [0,1]. Clients are assigned label shards, giving each a
/// skewed class distribution.
FederatedDataset generate_synthetic(const SyntheticSpec& spec,
                                    std::uint64_t seed);

/// Reads an IDX image/label file pair (big-endian magics 0x00000803 and
/// 0x00000801). Pixels are scaled to [0,1]. Throws IngestError naming the
/// offending file on any structural defect.
std::vector<Sample> load_idx(const std::string& images_path,
                             const std::string& labels_path);

/// Carves test_count samples into the test split (uniformly at random), then
/// groups the rest by label, cuts them into clients*shards_per_client
/// label-pure shards, and deals shards_per_client shards to each client; a
/// client therefore sees at most shards_per_client distinct labels.
FederatedDataset partition_label_shards(std::vector<Sample> samples,
                                        std::size_t clients,
                                        std::size_t shards_per_client,
                                        std::size_t test_count,
                                        std::uint64_t seed);

/// Stacks samples order[first..last) into a [n,C,H,W] batch plus labels.
std::pair<TensorBuffer, std::vector<int>> make_batch(
    const std::vector<Sample>& samples, const std::vector<std::size_t>& order,
    std::size_t first, std::size_t last);

}  // namespace fedprune
