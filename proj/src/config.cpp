#include "fedprune/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fedprune/errors.hpp"

namespace fedprune {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& origin, const std::string& what) {
    throw ConfigError(origin + ": " + what);
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& origin, const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (known.count(key) == 0) bad(origin, "unknown key '" + where + key + "'");
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& origin,
                const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        bad(origin, "key '" + where + key + "' has the wrong type");
    }
}

DatasetConfig parse_dataset(const json& obj, const std::string& origin) {
    DatasetConfig d;
    reject_unknown_keys(obj,
                        {"type", "classes", "samples_per_client", "test_samples",
                         "image_shape", "noise", "images", "labels", "test_count",
                         "shards_per_client"},
                        origin, "dataset.");
    read_field(obj, "type", d.type, origin, "dataset.");
    read_field(obj, "classes", d.classes, origin, "dataset.");
    read_field(obj, "samples_per_client", d.samples_per_client, origin, "dataset.");
    read_field(obj, "test_samples", d.test_samples, origin, "dataset.");
    read_field(obj, "image_shape", d.image_shape, origin, "dataset.");
    read_field(obj, "noise", d.noise, origin, "dataset.");
    read_field(obj, "images", d.images, origin, "dataset.");
    read_field(obj, "labels", d.labels, origin, "dataset.");
    read_field(obj, "test_count", d.test_count, origin, "dataset.");
    read_field(obj, "shards_per_client", d.shards_per_client, origin, "dataset.");
    return d;
}

}  // namespace

RunConfig config_from_json_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        bad(origin, std::string("JSON parse error: ") + e.what());
    }
    if (!root.is_object()) bad(origin, "top level must be a JSON object");

    RunConfig cfg;
    reject_unknown_keys(
        root,
        {"seed", "family", "widths", "kernel", "clients", "fraction", "local_epochs",
         "batch_size", "k", "patience", "min_filters", "stage1_cap", "stage2_rounds",
         "lr", "beta1", "beta2", "eps", "baseline", "dataset", "out_dir"},
        origin, "");
    read_field(root, "seed", cfg.seed, origin, "");
    read_field(root, "family", cfg.family, origin, "");
    read_field(root, "widths", cfg.widths, origin, "");
    read_field(root, "kernel", cfg.kernel, origin, "");
    read_field(root, "clients", cfg.clients, origin, "");
    read_field(root, "fraction", cfg.fraction, origin, "");
    read_field(root, "local_epochs", cfg.local_epochs, origin, "");
    read_field(root, "batch_size", cfg.batch_size, origin, "");
    read_field(root, "k", cfg.k, origin, "");
    read_field(root, "patience", cfg.patience, origin, "");
    read_field(root, "min_filters", cfg.min_filters, origin, "");
    read_field(root, "stage1_cap", cfg.stage1_cap, origin, "");
    read_field(root, "stage2_rounds", cfg.stage2_rounds, origin, "");
    read_field(root, "lr", cfg.lr, origin, "");
    read_field(root, "beta1", cfg.beta1, origin, "");
    read_field(root, "beta2", cfg.beta2, origin, "");
    read_field(root, "eps", cfg.eps, origin, "");
    read_field(root, "baseline", cfg.baseline, origin, "");
    read_field(root, "out_dir", cfg.out_dir, origin, "");
    if (root.contains("dataset")) {
        if (!root.at("dataset").is_object()) bad(origin, "'dataset' must be an object");
        cfg.dataset = parse_dataset(root.at("dataset"), origin);
    }
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError(path + ": cannot open config file");
    std::ostringstream ss;
    ss << is.rdbuf();
    return config_from_json_text(ss.str(), path);
}

std::string config_to_json(const RunConfig& cfg) {
    json d{{"type", cfg.dataset.type},
           {"classes", cfg.dataset.classes},
           {"samples_per_client", cfg.dataset.samples_per_client},
           {"test_samples", cfg.dataset.test_samples},
           {"image_shape", cfg.dataset.image_shape},
           {"noise", cfg.dataset.noise},
           {"images", cfg.dataset.images},
           {"labels", cfg.dataset.labels},
           {"test_count", cfg.dataset.test_count},
           {"shards_per_client", cfg.dataset.shards_per_client}};
    json root{{"seed", cfg.seed},
              {"family", cfg.family},
              {"widths", cfg.widths},
              {"kernel", cfg.kernel},
              {"clients", cfg.clients},
              {"fraction", cfg.fraction},
              {"local_epochs", cfg.local_epochs},
              {"batch_size", cfg.batch_size},
              {"k", cfg.k},
              {"patience", cfg.patience},
              {"min_filters", cfg.min_filters},
              {"stage1_cap", cfg.stage1_cap},
              {"stage2_rounds", cfg.stage2_rounds},
              {"lr", cfg.lr},
              {"beta1", cfg.beta1},
              {"beta2", cfg.beta2},
              {"eps", cfg.eps},
              {"baseline", cfg.baseline},
              {"dataset", std::move(d)},
              {"out_dir", cfg.out_dir}};
    return root.dump();  // nlohmann objects iterate key-sorted
}

std::string config_hash(const RunConfig& cfg) {
    const std::string s = config_to_json(cfg);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void validate(const RunConfig& cfg) {
    if (cfg.family != "conv2" && cfg.family != "resnet7" && cfg.family != "inception9") {
        throw ConfigError("config: unknown family '" + cfg.family + "'");
    }
    if (cfg.kernel == 0 || cfg.kernel % 2 == 0) {
        throw ConfigError("config: kernel must be odd");
    }
    if (cfg.clients == 0) throw ConfigError("config: clients must be >= 1");
    if (!(cfg.fraction > 0.0) || cfg.fraction > 1.0) {
        throw ConfigError("config: fraction must be in (0, 1]");
    }
    if (cfg.batch_size == 0) throw ConfigError("config: batch_size must be >= 1");
    if (!(cfg.k >= 0.0)) throw ConfigError("config: k must be >= 0");
    if (cfg.patience < 1) throw ConfigError("config: patience must be >= 1");
    if (cfg.min_filters < 1) throw ConfigError("config: min_filters must be >= 1");
    if (cfg.stage1_cap == 0) throw ConfigError("config: stage1_cap must be >= 1");
    if (!(cfg.lr > 0.0)) throw ConfigError("config: lr must be > 0");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0)) {
        throw ConfigError("config: beta1 must be in [0, 1)");
    }
    if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
        throw ConfigError("config: beta2 must be in [0, 1)");
    }
    if (!(cfg.eps > 0.0)) throw ConfigError("config: eps must be > 0");
    if (cfg.out_dir.empty()) throw ConfigError("config: out_dir must be set");

    const DatasetConfig& d = cfg.dataset;
    if (d.type != "synthetic" && d.type != "idx") {
        throw ConfigError("config: dataset.type must be 'synthetic' or 'idx'");
    }
    if (d.shards_per_client == 0) {
        throw ConfigError("config: dataset.shards_per_client must be >= 1");
    }
    if (d.type == "synthetic") {
        if (d.classes < 2) throw ConfigError("config: dataset.classes must be >= 2");
        if (d.samples_per_client == 0) {
            throw ConfigError("config: dataset.samples_per_client must be >= 1");
        }
        if (d.image_shape.size() != 3) {
            throw ConfigError("config: dataset.image_shape must be [C, H, W]");
        }
        if (!(d.noise >= 0.0)) throw ConfigError("config: dataset.noise must be >= 0");
    } else {
        if (d.images.empty() || d.labels.empty()) {
            throw ConfigError("config: dataset.images and dataset.labels are required");
        }
    }
}

}  // namespace fedprune
