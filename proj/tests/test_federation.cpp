#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <set>
#include <vector>

#include "fedprune/errors.hpp"
#include "fedprune/federation.hpp"
#include "fedprune/model.hpp"
#include "fedprune/rng.hpp"
#include "oracle.hpp"
#include "prune_equiv.hpp"

using namespace fedprune;

namespace {

ModelGraph scalar_model(double w, double b) {
    ModelGraph g;
    g.input_shape = {1, 1, 1};
    g.num_classes = 1;
    DenseLayer d = make_dense("d", 1, 1);
    d.w.data = {w};
    d.b.data = {b};
    g.nodes.push_back(d);
    return g;
}

ModelGraph small_net(std::uint64_t seed, const Shape& input = {1, 8, 8},
                     std::size_t classes = 3) {
    ArchSpec spec;
    spec.family = "conv2";
    spec.widths = {4, 6};
    spec.kernel = 3;
    spec.input_shape = input;
    spec.num_classes = classes;
    ModelGraph g = build_architecture(spec);
    init_weights(g, seed);
    return g;
}

FederatedDataset small_data(std::uint64_t seed, const Shape& shape = {1, 8, 8},
                            std::size_t clients = 6, std::size_t classes = 3,
                            std::size_t samples_per_client = 6) {
    SyntheticSpec spec;
    spec.classes = classes;
    spec.clients = clients;
    spec.samples_per_client = samples_per_client;
    spec.test_samples = 24;
    spec.shards_per_client = 2;
    spec.image_shape = shape;
    spec.noise = 0.1;
    return generate_synthetic(spec, seed);
}

bool params_equal(const ModelGraph& a, const ModelGraph& b) {
    auto pa = parameter_list(a);
    auto pb = parameter_list(b);
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i]->shape != pb[i]->shape) return false;
        if (std::memcmp(pa[i]->data.data(), pb[i]->data.data(),
                        pa[i]->size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

double mean_loss(const ModelGraph& g, const std::vector<Sample>& samples) {
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto [batch, labels] = make_batch(samples, order, 0, order.size());
    TensorBuffer logits = forward(g, batch);
    return (double)oracle::cross_entropy(logits, labels);
}

// Returns a model with a flat parameter count that only depends on `width`.
ModelGraph dense_only(std::size_t width, std::uint64_t seed) {
    ModelGraph g;
    g.input_shape = {1, 3, 3};
    g.num_classes = width;
    g.nodes.push_back(FlattenLayer{});
    g.nodes.push_back(make_dense("fc", 9, width));
    init_weights(g, seed);
    return g;
}

}  // namespace

TEST_CASE("client selection count, range and determinism") {
    auto sel = select_clients(7, 1, 100, 0.1);
    CHECK(sel.size() == 10);
    std::set<std::size_t> uniq(sel.begin(), sel.end());
    CHECK(uniq.size() == 10);
    for (std::size_t c : sel) CHECK(c < 100);

    CHECK(select_clients(7, 1, 100, 0.1) == sel);
    CHECK(select_clients(7, 2, 100, 0.1) != sel);
    CHECK(select_clients(8, 1, 100, 0.1) != sel);

    CHECK(select_clients(1, 1, 1, 0.9) == std::vector<std::size_t>{0});
    CHECK(select_clients(1, 3, 10, 1.0).size() == 10);
    CHECK(select_clients(1, 3, 10, 0.04).size() == 1);  // floor of one client
    CHECK(select_clients(1, 3, 10, 0.25).size() == 3);  // 2.5 rounds away from zero
}

TEST_CASE("fedavg weights models by sample count") {
    std::vector<ModelGraph> models;
    models.push_back(scalar_model(1.0, 5.0));
    models.push_back(scalar_model(3.0, 7.0));
    ModelGraph avg = fedavg(models, {10, 30});
    const DenseLayer& d = std::get<DenseLayer>(avg.nodes[0]);
    CHECK(std::fabs(d.w.data[0] - 2.5) < 1e-12);
    CHECK(std::fabs(d.b.data[0] - 6.5) < 1e-12);
}

TEST_CASE("fedavg of one model is the identity") {
    ModelGraph m = small_net(3);
    ModelGraph avg = fedavg({m}, {17});
    CHECK(params_equal(m, avg));
}

TEST_CASE("fedavg consensus: identical models average to themselves") {
    ModelGraph m = small_net(4);
    std::vector<ModelGraph> models(5, m);
    ModelGraph avg = fedavg(models, {1, 9, 100, 3, 7});
    auto pm = parameter_list(m);
    auto pa = parameter_list(avg);
    for (std::size_t i = 0; i < pm.size(); ++i)
        for (std::size_t j = 0; j < pm[i]->size(); ++j)
            CHECK(std::fabs(pm[i]->data[j] - pa[i]->data[j]) < 1e-12);
}

TEST_CASE("fedavg matches a long double weighted mean") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<ModelGraph> models;
        std::vector<std::size_t> counts;
        const std::size_t n = 2 + rng.below(4);
        for (std::size_t i = 0; i < n; ++i) {
            models.push_back(small_net(100 + trial * 10 + i));
            counts.push_back(1 + rng.below(50));
        }
        ModelGraph avg = fedavg(models, counts);
        long double total = 0.0L;
        for (std::size_t c : counts) total += (long double)c;
        auto pa = parameter_list(avg);
        for (std::size_t p = 0; p < pa.size(); ++p) {
            auto first = parameter_list(models[0]);
            for (std::size_t j = 0; j < pa[p]->size(); ++j) {
                long double want = 0.0L;
                for (std::size_t i = 0; i < n; ++i)
                    want += ((long double)counts[i] / total) *
                            (long double)parameter_list(models[i])[p]->data[j];
                CHECK(std::fabs((long double)pa[p]->data[j] - want) < 1e-12L);
            }
            (void)first;
        }
    }
}

TEST_CASE("fedavg rejects malformed input") {
    CHECK_THROWS_AS(fedavg({}, {}), AggregationError);
    ModelGraph a = scalar_model(1.0, 0.0);
    CHECK_THROWS_AS(fedavg({a}, {1, 2}), AggregationError);
    CHECK_THROWS_AS(fedavg({a}, {0}), AggregationError);

    ModelGraph wide;
    wide.input_shape = {1, 1, 1};
    wide.num_classes = 2;
    wide.nodes.push_back(make_dense("d", 1, 2));
    CHECK_THROWS_AS(fedavg({a, wide}, {1, 1}), AggregationError);

    ModelGraph deeper = a;
    deeper.nodes.push_back(FlattenLayer{});
    CHECK_THROWS_AS(fedavg({a, deeper}, {1, 1}), AggregationError);
}

TEST_CASE("local training with zero epochs returns the model unchanged") {
    FederatedDataset data = small_data(10);
    ModelGraph g = small_net(11);
    ClientState client{0, &data.clients[0]};
    LocalTrainConfig cfg;
    cfg.epochs = 0;
    ModelGraph out = local_train(g, client, cfg, 5);
    CHECK(params_equal(g, out));
}

TEST_CASE("local training lowers the loss on the client's own data") {
    FederatedDataset data = small_data(12);
    ModelGraph g = small_net(13);
    ClientState client{0, &data.clients[0]};
    LocalTrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.lr = 3e-3;
    const double before = mean_loss(g, data.clients[0]);
    ModelGraph trained = local_train(g, client, cfg, 5);
    const double after = mean_loss(trained, data.clients[0]);
    CHECK(after < before);
    CHECK_FALSE(params_equal(g, trained));  // and the input model is intact:
    CHECK(params_equal(g, small_net(13)));
}

TEST_CASE("local training is seed-deterministic and data-sensitive") {
    FederatedDataset data = small_data(14);
    ModelGraph g = small_net(15);
    LocalTrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    ClientState c0{0, &data.clients[0]};
    ClientState c1{1, &data.clients[1]};
    CHECK(params_equal(local_train(g, c0, cfg, 9), local_train(g, c0, cfg, 9)));
    CHECK_FALSE(params_equal(local_train(g, c0, cfg, 9), local_train(g, c0, cfg, 10)));
    CHECK_FALSE(params_equal(local_train(g, c0, cfg, 9), local_train(g, c1, cfg, 9)));
}

TEST_CASE("local training rejects unusable clients") {
    ModelGraph g = small_net(16);
    LocalTrainConfig cfg;
    ClientState null_client{0, nullptr};
    CHECK_THROWS_AS(local_train(g, null_client, cfg, 1), ConfigError);
    std::vector<Sample> empty;
    ClientState empty_client{0, &empty};
    CHECK_THROWS_AS(local_train(g, empty_client, cfg, 1), ConfigError);
    FederatedDataset data = small_data(17);
    ClientState ok{0, &data.clients[0]};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(local_train(g, ok, cfg, 1), ConfigError);
}

TEST_CASE("evaluate: all-zero model predicts the first class everywhere") {
    ModelGraph g = small_net(18);
    for (TensorBuffer* p : parameter_list(g))
        std::fill(p->data.begin(), p->data.end(), 0.0);
    FederatedDataset data = small_data(19);
    std::size_t zeros = 0;
    for (const Sample& s : data.test) zeros += s.label == 0 ? 1 : 0;
    CHECK(evaluate(g, data.test) ==
          doctest::Approx((double)zeros / (double)data.test.size()).epsilon(1e-12));
}

TEST_CASE("evaluate: a model reading one-hot inputs scores 1.0") {
    ModelGraph g;
    g.input_shape = {3, 1, 1};
    g.num_classes = 3;
    g.nodes.push_back(FlattenLayer{});
    DenseLayer d = make_dense("fc", 3, 3);
    std::fill(d.w.data.begin(), d.w.data.end(), 0.0);
    for (std::size_t i = 0; i < 3; ++i) d.w.data[i * 3 + i] = 1.0;
    g.nodes.push_back(d);

    std::vector<Sample> test;
    for (int label : {0, 1, 2, 1, 2, 0, 2}) {
        Sample s;
        s.image = TensorBuffer::zeros({3, 1, 1});
        s.image.data[(std::size_t)label] = 1.0;
        s.label = label;
        test.push_back(s);
    }
    CHECK(evaluate(g, test) == 1.0);
}

TEST_CASE("evaluate agrees with a sample-by-sample recount") {
    ModelGraph g = small_net(20);
    FederatedDataset data = small_data(21);
    std::size_t hits = 0;
    for (const Sample& s : data.test) {
        TensorBuffer x = TensorBuffer::zeros({1, s.image.shape[0], s.image.shape[1],
                                              s.image.shape[2]});
        x.data = s.image.data;
        TensorBuffer logits = forward(g, x);
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.size(); ++j)
            if (logits.data[j] > logits.data[best]) best = j;
        hits += (int)best == s.label ? 1 : 0;
    }
    CHECK(evaluate(g, data.test) == (double)hits / (double)data.test.size());
    CHECK_THROWS_AS(evaluate(g, {}), ConfigError);
}

TEST_CASE("search stage halts after the patience run of non-decreasing sizes") {
    FederatedDataset data = small_data(22, {1, 3, 3}, 5);
    FederatedRun run;
    run.global = dense_only(12, 1);  // 120 params to start
    run.cfg.clients = 5;
    run.cfg.fraction = 0.4;
    run.cfg.local.epochs = 1;
    run.cfg.local.batch_size = 4;
    run.cfg.seed = 99;

    auto calls = std::make_shared<std::size_t>(0);
    PruneFn stub = [calls](const ModelGraph&) {
        ++*calls;
        return *calls == 1 ? dense_only(10, 2) : dense_only(9, 3);
    };

    std::vector<RoundInfo> seen;
    PruneConfig pc;
    pc.stop_patience = 3;
    const std::size_t used =
        run_stage1(run, data, pc, [&](const RoundInfo& r) { seen.push_back(r); }, stub);

    // Sizes 120 -> 100, 90, 90, 90, 90: the third flat round trips the halt.
    CHECK(used == 5);
    CHECK(run.param_history ==
          std::vector<std::size_t>{120, 100, 90, 90, 90, 90});
    CHECK(run.stage == Stage::train);
    CHECK(run.round == 5);
    REQUIRE(seen.size() == 5);
    for (std::size_t i = 0; i < seen.size(); ++i) {
        CHECK(seen[i].round == i + 1);
        CHECK(seen[i].stage == Stage::search);
        CHECK(seen[i].params_broadcast == run.param_history[i]);
        CHECK(seen[i].params_end == run.param_history[i + 1]);
        CHECK(seen[i].selected.size() == 2);  // max(1, round(0.4 * 5))
        CHECK(seen[i].accuracy >= 0.0);
        CHECK(seen[i].accuracy <= 1.0);
    }

    CHECK_THROWS_AS(run_stage1(run, data, pc), StateError);
}

TEST_CASE("search stage stops at the round cap when sizes keep falling") {
    FederatedDataset data = small_data(23, {1, 3, 3}, 5);
    FederatedRun run;
    run.global = dense_only(12, 1);
    run.cfg.clients = 5;
    run.cfg.fraction = 0.4;
    run.cfg.local.epochs = 1;
    run.cfg.local.batch_size = 4;
    run.cfg.stage1_cap = 4;

    auto calls = std::make_shared<std::size_t>(0);
    PruneFn shrink = [calls](const ModelGraph&) {
        ++*calls;
        return dense_only(11 - *calls, 50 + *calls);
    };
    PruneConfig pc;
    const std::size_t used = run_stage1(run, data, pc, {}, shrink);
    CHECK(used == 4);
    CHECK(run.param_history.size() == 5);
    CHECK(run.stage == Stage::train);
}

TEST_CASE("score-uniform layers never lose filters, so search halts in patience rounds") {
    FederatedDataset data = small_data(24, {1, 6, 6});
    FederatedRun run;
    run.global = small_net(25, {1, 6, 6});
    for (ConvLayer* c : prune_equiv::prunable_convs(run.global))
        prune_equiv::make_score_uniform(*c);
    run.cfg.clients = 6;
    run.cfg.fraction = 0.5;
    run.cfg.local.epochs = 0;  // aggregation preserves the filter symmetry
    const std::size_t before = count_params(run.global);
    const auto filters = conv_filter_counts(run.global);

    PruneConfig pc;
    pc.stop_patience = 3;
    const std::size_t used = run_stage1(run, data, pc);
    CHECK(used == 3);
    CHECK(run.param_history == std::vector<std::size_t>(4, before));
    CHECK(conv_filter_counts(run.global) == filters);
}

TEST_CASE("search stage validates its configuration") {
    FederatedDataset data = small_data(26, {1, 3, 3}, 5);
    FederatedRun run;
    run.global = dense_only(9, 1);
    run.cfg.clients = 4;  // population disagrees with the dataset
    PruneConfig pc;
    CHECK_THROWS_AS(run_stage1(run, data, pc), ConfigError);

    run.cfg.clients = 5;
    run.cfg.fraction = 0.0;
    CHECK_THROWS_AS(run_stage1(run, data, pc), ConfigError);

    run.cfg.fraction = 0.4;
    run.cfg.stage1_cap = 0;
    CHECK_THROWS_AS(run_stage1(run, data, pc), ConfigError);

    run.cfg.stage1_cap = 10;
    PruneConfig bad;
    bad.k = -1.0;
    CHECK_THROWS_AS(run_stage1(run, data, bad), ConfigError);
}

TEST_CASE("train stage keeps the architecture and continues the round count") {
    FederatedDataset data = small_data(27, {1, 3, 3}, 5);
    FederatedRun run;
    run.global = dense_only(12, 1);
    run.cfg.clients = 5;
    run.cfg.fraction = 0.4;
    run.cfg.local.epochs = 1;
    run.cfg.local.batch_size = 4;

    auto calls = std::make_shared<std::size_t>(0);
    PruneFn stub = [calls](const ModelGraph&) {
        ++*calls;
        return *calls == 1 ? dense_only(10, 2) : dense_only(9, 3);
    };
    PruneConfig pc;
    run_stage1(run, data, pc, {}, stub);
    REQUIRE(run.round == 5);

    const std::size_t fixed = count_params(run.global);
    std::vector<RoundInfo> seen;
    run_stage2(run, data, 3, [&](const RoundInfo& r) { seen.push_back(r); });
    REQUIRE(seen.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(seen[i].round == 6 + i);
        CHECK(seen[i].stage == Stage::train);
        CHECK(seen[i].params_broadcast == fixed);
        CHECK(seen[i].params_end == fixed);
        CHECK(seen[i].selected ==
              select_clients(run.cfg.seed, seen[i].round, 5, 0.4));
    }
    CHECK(run.round == 8);
}

TEST_CASE("zero train rounds change nothing") {
    FederatedDataset data = small_data(28, {1, 3, 3}, 5);
    FederatedRun run;
    run.global = dense_only(9, 4);
    run.cfg.clients = 5;
    run.stage = Stage::train;
    const ModelGraph before = run.global;
    std::size_t hook_calls = 0;
    run_stage2(run, data, 0, [&](const RoundInfo&) { ++hook_calls; });
    CHECK(hook_calls == 0);
    CHECK(run.round == 0);
    CHECK(params_equal(before, run.global));
}

TEST_CASE("train stage refuses a run still in search") {
    FederatedDataset data = small_data(29, {1, 3, 3}, 5);
    FederatedRun run;
    run.global = dense_only(9, 4);
    run.cfg.clients = 5;
    CHECK_THROWS_AS(run_stage2(run, data, 2), StateError);
}

TEST_CASE("a control run started in the train stage uses the same selections") {
    FederatedDataset data = small_data(30, {1, 3, 3}, 5);
    FederatedRun control;
    control.global = dense_only(9, 5);
    control.cfg.clients = 5;
    control.cfg.fraction = 0.4;
    control.cfg.local.epochs = 1;
    control.cfg.local.batch_size = 4;
    control.cfg.seed = 321;
    control.stage = Stage::train;
    std::vector<std::vector<std::size_t>> picks;
    run_stage2(control, data, 4, [&](const RoundInfo& r) { picks.push_back(r.selected); });
    for (std::size_t r = 0; r < 4; ++r)
        CHECK(picks[r] == select_clients(321, r + 1, 5, 0.4));
}

TEST_CASE("federated training improves test accuracy on an easy task") {
    FederatedDataset data = small_data(31, {1, 8, 8}, 6, 3, 16);
    FederatedRun run;
    run.global = small_net(32);
    run.cfg.clients = 6;
    run.cfg.fraction = 1.0;
    run.cfg.local.epochs = 2;
    run.cfg.local.batch_size = 4;
    run.cfg.local.lr = 3e-3;
    run.stage = Stage::train;
    const double before = evaluate(run.global, data.test);
    run_stage2(run, data, 20);
    const double after = evaluate(run.global, data.test);
    CHECK(after > before);
    CHECK(after > 0.5);  // well above the 1/3 chance level
}
