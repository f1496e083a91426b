#pragma once

#include <cstdint>

#include "fedprune/dataset.hpp"
#include "fedprune/model.hpp"

namespace fedprune {

/// One simulated client: an id and a handle to its private samples.
struct ClientState {
    std::size_t id = 0;
    const std::vector<Sample>* data = nullptr;

    std::size_t sample_count() const { return data ? data->size() : 0; }
};

struct LocalTrainConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Full local pass: epochs over the client's data with Adam + cross-entropy,
/// fresh optimizer state, shuffled batches. Returns a trained copy; the
/// server's model instance is never touched. Deterministic given seed.
ModelGraph local_train(const ModelGraph& global, const ClientState& client,
                       const LocalTrainConfig& cfg, std::uint64_t seed);

}  // namespace fedprune
