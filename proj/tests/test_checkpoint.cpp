#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "fedprune/checkpoint.hpp"
#include "fedprune/errors.hpp"
#include "fedprune/model.hpp"
#include "fedprune/pruning.hpp"

using namespace fedprune;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("ckpt_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

ModelGraph sample_model(const std::string& family = "conv2") {
    ArchSpec spec;
    spec.family = family;
    spec.widths = family == "conv2" ? std::vector<std::size_t>{5, 7} : std::vector<std::size_t>{};
    spec.kernel = 3;
    spec.input_shape = {1, 12, 12};
    spec.num_classes = 4;
    ModelGraph g = build_architecture(spec);
    init_weights(g, 321);
    return g;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("checkpoint round-trips structure and quantizes values to f32") {
    ModelGraph g = sample_model();
    TempFile f("roundtrip.fpck");
    save_checkpoint(g, f.path);
    ModelGraph loaded = load_checkpoint(f.path);

    CHECK(loaded.input_shape == g.input_shape);
    CHECK(loaded.num_classes == g.num_classes);
    CHECK(conv_filter_counts(loaded) == conv_filter_counts(g));
    CHECK(conv_layer_names(loaded) == conv_layer_names(g));
    CHECK(count_params(loaded) == count_params(g));
    CHECK_NOTHROW(check_shapes(loaded));

    auto orig = parameter_list(g);
    auto got = parameter_list(loaded);
    REQUIRE(orig.size() == got.size());
    bool narrowed = false;
    for (std::size_t i = 0; i < orig.size(); ++i) {
        REQUIRE(orig[i]->shape == got[i]->shape);
        for (std::size_t j = 0; j < orig[i]->size(); ++j) {
            const double stored = (double)(float)orig[i]->data[j];
            CHECK(got[i]->data[j] == stored);
            narrowed = narrowed || stored != orig[i]->data[j];
        }
    }
    CHECK(narrowed);  // doubles really were squeezed through f32
}

TEST_CASE("save-load-save produces a byte-identical file") {
    for (const char* family : {"conv2", "resnet7", "inception9"}) {
        ModelGraph g = sample_model(family);
        TempFile a("first.fpck"), b("second.fpck");
        save_checkpoint(g, a.path);
        ModelGraph loaded = load_checkpoint(a.path);
        save_checkpoint(loaded, b.path);
        CHECK(slurp(a.path) == slurp(b.path));
    }
}

TEST_CASE("checkpoint preserves prunability flags") {
    ModelGraph g = sample_model("resnet7");
    TempFile f("flags.fpck");
    save_checkpoint(g, f.path);
    ModelGraph loaded = load_checkpoint(f.path);
    std::size_t non_prunable = 0;
    for (const GraphNode& n : loaded.nodes) {
        if (const auto* c = std::get_if<ConvLayer>(&n))
            non_prunable += c->prunable ? 0 : 1;
        if (const auto* b = std::get_if<ResidualBlock>(&n)) {
            CHECK(b->conv1.prunable);
            non_prunable += b->conv2.prunable ? 0 : 1;
        }
    }
    CHECK(non_prunable == 4);  // stem + three block-closing convs
}

TEST_CASE("a pruned model survives the round trip") {
    ModelGraph g = sample_model();
    PruneConfig cfg;
    cfg.k = 0.5;
    auto [pruned, report] = prune_model(g, cfg);
    TempFile f("pruned.fpck");
    save_checkpoint(pruned, f.path);
    ModelGraph loaded = load_checkpoint(f.path);
    CHECK(conv_filter_counts(loaded) == conv_filter_counts(pruned));
    CHECK(count_params(loaded) == count_params(pruned));
    CHECK(forward(loaded, TensorBuffer::zeros({1, 1, 12, 12})).shape == Shape{1, 4});
}

TEST_CASE("load rejects missing and corrupt files, naming the path") {
    CHECK_THROWS_WITH_AS(load_checkpoint("no_such_file.fpck"),
                         doctest::Contains("no_such_file.fpck"), IngestError);

    TempFile bad("badmagic.fpck");
    {
        std::ofstream out(bad.path, std::ios::binary);
        out << "NOPE this is not a checkpoint";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(bad.path), doctest::Contains(bad.path.c_str()),
                         IngestError);

    ModelGraph g = sample_model();
    TempFile full("full.fpck"), cut("cut.fpck");
    save_checkpoint(g, full.path);
    const std::string bytes = slurp(full.path);
    {
        std::ofstream out(cut.path, std::ios::binary);
        out.write(bytes.data(), (std::streamsize)(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(cut.path), IngestError);
}

TEST_CASE("checkpoint summary reports the model inventory") {
    ModelGraph g = sample_model();
    TempFile f("summary.fpck");
    save_checkpoint(g, f.path);
    const nlohmann::json j = nlohmann::json::parse(checkpoint_summary(f.path));
    CHECK(j.at("params").get<std::size_t>() == count_params(g));
    CHECK(j.at("num_classes").get<std::size_t>() == 4);
    CHECK(j.at("conv_filters").get<std::vector<std::size_t>>() ==
          conv_filter_counts(g));
    CHECK(j.at("flops").get<unsigned long long>() == count_flops(g).total());
    CHECK(j.at("tensors").is_array());
    CHECK(j.at("tensors").size() == parameter_list(g).size());
}
