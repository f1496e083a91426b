#include "fedprune/client.hpp"

#include <numeric>
#include <vector>

#include "fedprune/autograd.hpp"
#include "fedprune/errors.hpp"
#include "fedprune/optim.hpp"
#include "fedprune/rng.hpp"

namespace fedprune {

namespace ag = autograd;

ModelGraph local_train(const ModelGraph& global, const ClientState& client,
                       const LocalTrainConfig& cfg, std::uint64_t seed) {
    if (client.data == nullptr || client.data->empty()) {
        throw ConfigError("local_train: client " + std::to_string(client.id) +
                          " has no samples");
    }
    if (cfg.batch_size == 0) throw ConfigError("local_train: batch_size must be >= 1");

    ModelGraph trained = global;
    if (cfg.epochs == 0) return trained;  // no-op round: weights pass through untouched

    std::vector<ag::Var> params = bind_params(trained, /*requires_grad=*/true);
    std::vector<AdamState> states;
    states.reserve(params.size());
    for (const ag::Var& p : params) states.push_back(make_adam_state(p->value.shape));

    const std::vector<Sample>& data = *client.data;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
            const std::size_t last = std::min(first + cfg.batch_size, order.size());
            auto [images, labels] = make_batch(data, order, first, last);

            ag::Tape tape;
            ag::Var x = ag::make_var(std::move(images), /*requires_grad=*/false);
            ag::Var logits = forward_pass(trained, &tape, x, params);
            ag::Var loss = ag::cross_entropy(&tape, logits, labels);
            tape.backward(loss);

            for (std::size_t i = 0; i < params.size(); ++i) {
                ag::ensure_grad(params[i]);
                adam_step(params[i]->value, params[i]->grad, states[i], cfg.lr,
                          cfg.beta1, cfg.beta2, cfg.eps);
                ag::zero_grad(params[i]);
            }
        }
    }

    assign_params(trained, params);
    return trained;
}

}  // namespace fedprune
