#include "fedprune/dataset.hpp"

#include <algorithm>
#include <fstream>

#include "fedprune/errors.hpp"
#include "fedprune/rng.hpp"

namespace fedprune {

namespace {

// 3x3 box blur with clamped edges, one pass.
void blur(TensorBuffer& t) {
    const std::size_t ch = t.dim(0), hh = t.dim(1), ww = t.dim(2);
    TensorBuffer src = t;
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t y = 0; y < hh; ++y)
            for (std::size_t x = 0; x < ww; ++x) {
                double acc = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        std::size_t yy = (std::size_t)std::clamp(
                            (long)y + dy, 0L, (long)hh - 1);
                        std::size_t xx = (std::size_t)std::clamp(
                            (long)x + dx, 0L, (long)ww - 1);
                        acc += src.data[(c * hh + yy) * ww + xx];
                    }
                t.data[(c * hh + y) * ww + x] = acc / 9.0;
            }
}

std::uint32_t read_u32_be(std::ifstream& is, const std::string& path) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) throw IngestError(path + ": truncated header");
    return ((std::uint32_t)b[0] << 24) | ((std::uint32_t)b[1] << 16) |
           ((std::uint32_t)b[2] << 8) | (std::uint32_t)b[3];
}

}  // namespace

FederatedDataset generate_synthetic(const SyntheticSpec& spec,
                                    std::uint64_t seed) {
    if (spec.classes < 2)
        throw ConfigError("synthetic data needs at least 2 classes, got " +
                          std::to_string(spec.classes));
    if (spec.clients < 1) throw ConfigError("synthetic data needs at least 1 client");
    if (spec.samples_per_client < 1)
        throw ConfigError("synthetic data needs at least 1 sample per client");
    if (spec.image_shape.size() != 3 || shape_numel(spec.image_shape) == 0)
        throw ConfigError("synthetic image shape must be [C,H,W], got " +
                          shape_str(spec.image_shape));
    if (spec.noise < 0.0)
        throw ConfigError("synthetic noise amplitude must be nonnegative");

    // One smoothed random template per class.
    std::vector<TensorBuffer> templates;
    Rng tpl_rng(Rng::mix(seed, 0x7e301));
    for (std::size_t c = 0; c < spec.classes; ++c) {
        TensorBuffer t = TensorBuffer::zeros(spec.image_shape);
        for (double& v : t.data) v = tpl_rng.uniform();
        blur(t);
        blur(t);
        templates.push_back(std::move(t));
    }

    const std::size_t total =
        spec.clients * spec.samples_per_client + spec.test_samples;
    if (total < spec.classes)
        throw ConfigError("synthetic data: " + std::to_string(total) +
                          " samples cannot cover " +
                          std::to_string(spec.classes) + " classes");

    std::vector<Sample> pool;
    pool.reserve(total);
    Rng noise_rng(Rng::mix(seed, 0x5a11));
    for (std::size_t c = 0; c < spec.classes; ++c) {
        const std::size_t n =
            total / spec.classes + (c < total % spec.classes ? 1 : 0);
        for (std::size_t i = 0; i < n; ++i) {
            Sample s;
            s.label = (int)c;
            s.image = templates[c];
            for (double& v : s.image.data)
                v = std::clamp(v + spec.noise * noise_rng.normal(), 0.0, 1.0);
            pool.push_back(std::move(s));
        }
    }

    FederatedDataset out = partition_label_shards(
        std::move(pool), spec.clients, spec.shards_per_client,
        spec.test_samples, Rng::mix(seed, 0x4a3d));
    out.num_classes = spec.classes;
    return out;
}

std::vector<Sample> load_idx(const std::string& images_path,
                             const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IngestError(images_path + ": cannot open");
    if (read_u32_be(imgs, images_path) != 0x00000803u)
        throw IngestError(images_path + ": bad magic, expected an IDX image file");
    const std::uint32_t n_images = read_u32_be(imgs, images_path);
    const std::uint32_t rows = read_u32_be(imgs, images_path);
    const std::uint32_t cols = read_u32_be(imgs, images_path);
    if (rows == 0 || cols == 0)
        throw IngestError(images_path + ": zero image dimensions");

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw IngestError(labels_path + ": cannot open");
    if (read_u32_be(labs, labels_path) != 0x00000801u)
        throw IngestError(labels_path + ": bad magic, expected an IDX label file");
    const std::uint32_t n_labels = read_u32_be(labs, labels_path);
    if (n_labels != n_images)
        throw IngestError(labels_path + ": " + std::to_string(n_labels) +
                          " labels for " + std::to_string(n_images) +
                          " images in " + images_path);

    std::vector<Sample> out;
    out.reserve(n_images);
    std::vector<unsigned char> px((std::size_t)rows * cols);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        imgs.read(reinterpret_cast<char*>(px.data()), (std::streamsize)px.size());
        if ((std::size_t)imgs.gcount() != px.size())
            throw IngestError(images_path + ": truncated at image " +
                              std::to_string(i));
        const int lab = labs.get();
        if (lab < 0)
            throw IngestError(labels_path + ": truncated at label " +
                              std::to_string(i));
        Sample s;
        s.label = lab;
        s.image = TensorBuffer::zeros({1, rows, cols});
        for (std::size_t j = 0; j < px.size(); ++j)
            s.image.data[j] = (double)px[j] / 255.0;
        out.push_back(std::move(s));
    }
    return out;
}

FederatedDataset partition_label_shards(std::vector<Sample> samples,
                                        std::size_t clients,
                                        std::size_t shards_per_client,
                                        std::size_t test_count,
                                        std::uint64_t seed) {
    if (clients < 1) throw ConfigError("partition needs at least 1 client");
    if (shards_per_client < 1)
        throw ConfigError("partition needs at least 1 shard per client");
    if (samples.empty()) throw ConfigError("partition got an empty sample list");
    if (test_count >= samples.size())
        throw ConfigError("test split of " + std::to_string(test_count) +
                          " would leave no training data from " +
                          std::to_string(samples.size()) + " samples");

    FederatedDataset out;
    out.image_shape = samples[0].image.shape;
    int max_label = 0;
    for (const Sample& s : samples) {
        if (s.label < 0)
            throw ConfigError("negative label " + std::to_string(s.label));
        max_label = std::max(max_label, s.label);
        if (s.image.shape != out.image_shape)
            throw ConfigError("mixed image shapes: " + shape_str(s.image.shape) +
                              " vs " + shape_str(out.image_shape));
    }
    out.num_classes = (std::size_t)max_label + 1;

    Rng rng(seed);
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    for (std::size_t i = 0; i < test_count; ++i)
        out.test.push_back(std::move(samples[order[i]]));

    // Group the rest by label, preserving shuffled order inside each group.
    std::vector<std::vector<std::size_t>> by_label(out.num_classes);
    for (std::size_t i = test_count; i < order.size(); ++i)
        by_label[(std::size_t)samples[order[i]].label].push_back(order[i]);

    std::vector<std::size_t> present;  // labels with at least one sample
    for (std::size_t l = 0; l < by_label.size(); ++l)
        if (!by_label[l].empty()) present.push_back(l);

    const std::size_t total_shards = clients * shards_per_client;
    const std::size_t train_total = order.size() - test_count;
    if (total_shards < present.size())
        throw ConfigError("cannot cut " + std::to_string(present.size()) +
                          " labels into " + std::to_string(total_shards) +
                          " label-pure shards; raise clients or shards per client");
    if (train_total < total_shards)
        throw ConfigError(std::to_string(train_total) +
                          " training samples cannot fill " +
                          std::to_string(total_shards) + " shards");

    // One shard per label to start, the rest proportional by largest
    // remainder, capped by each label's sample count so no shard is empty.
    std::vector<std::size_t> shard_counts(present.size(), 1);
    std::size_t assigned = present.size();
    std::vector<std::pair<double, std::size_t>> frac;  // (-remainder, idx)
    for (std::size_t i = 0; i < present.size(); ++i) {
        const double share = (double)by_label[present[i]].size() /
                             (double)train_total * (double)total_shards;
        const std::size_t extra =
            share >= 1.0 ? (std::size_t)share - 1 : 0;  // beyond the base shard
        const std::size_t cap = by_label[present[i]].size() - 1;
        const std::size_t take = std::min(extra, cap);
        shard_counts[i] += take;
        assigned += take;
        frac.emplace_back(-(share - std::floor(share)), i);
    }
    std::sort(frac.begin(), frac.end());
    while (assigned < total_shards) {
        bool progressed = false;
        for (const auto& [neg_rem, i] : frac) {
            if (assigned == total_shards) break;
            if (shard_counts[i] < by_label[present[i]].size()) {
                ++shard_counts[i];
                ++assigned;
                progressed = true;
            }
        }
        if (!progressed)
            throw ConfigError("not enough samples per label to fill " +
                              std::to_string(total_shards) + " shards");
    }
    while (assigned > total_shards) {
        bool progressed = false;
        for (auto it = frac.rbegin(); it != frac.rend(); ++it) {
            if (assigned == total_shards) break;
            if (shard_counts[it->second] > 1) {
                --shard_counts[it->second];
                --assigned;
                progressed = true;
            }
        }
        if (!progressed)
            throw ConfigError("cannot reduce shard allocation to " +
                              std::to_string(total_shards));
    }

    // Cut each label's samples into its shards (contiguous, sizes within 1).
    std::vector<std::vector<std::size_t>> shards;
    for (std::size_t i = 0; i < present.size(); ++i) {
        const auto& idxs = by_label[present[i]];
        const std::size_t k = shard_counts[i];
        std::size_t start = 0;
        for (std::size_t s = 0; s < k; ++s) {
            const std::size_t len = idxs.size() / k + (s < idxs.size() % k ? 1 : 0);
            shards.emplace_back(idxs.begin() + (std::ptrdiff_t)start,
                                idxs.begin() + (std::ptrdiff_t)(start + len));
            start += len;
        }
    }
    if (shards.size() != total_shards)
        throw InternalError("shard cut produced " +
                            std::to_string(shards.size()) + " of " +
                            std::to_string(total_shards) + " shards");

    std::vector<std::size_t> shard_order(shards.size());
    for (std::size_t i = 0; i < shard_order.size(); ++i) shard_order[i] = i;
    rng.shuffle(shard_order);

    out.clients.resize(clients);
    for (std::size_t c = 0; c < clients; ++c)
        for (std::size_t s = 0; s < shards_per_client; ++s)
            for (std::size_t idx : shards[shard_order[c * shards_per_client + s]])
                out.clients[c].push_back(std::move(samples[idx]));
    return out;
}

std::pair<TensorBuffer, std::vector<int>> make_batch(
    const std::vector<Sample>& samples, const std::vector<std::size_t>& order,
    std::size_t first, std::size_t last) {
    if (first >= last || last > order.size())
        throw ShapeError("make_batch: bad range [" + std::to_string(first) +
                         ", " + std::to_string(last) + ") over " +
                         std::to_string(order.size()) + " samples");
    const Shape& img = samples[order[first]].image.shape;
    const std::size_t n = last - first;
    TensorBuffer batch = TensorBuffer::zeros({n, img[0], img[1], img[2]});
    std::vector<int> labels(n);
    const std::size_t stride = shape_numel(img);
    for (std::size_t i = 0; i < n; ++i) {
        const Sample& s = samples[order[first + i]];
        if (s.image.shape != img)
            throw ShapeError("make_batch: mixed image shapes");
        std::copy(s.image.data.begin(), s.image.data.end(),
                  batch.data.begin() + (std::ptrdiff_t)(i * stride));
        labels[i] = s.label;
    }
    return {std::move(batch), std::move(labels)};
}

}  // namespace fedprune
