#include "fedprune/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <variant>

#include <json.hpp>

#include "fedprune/errors.hpp"

namespace fedprune {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'F', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// ---- little-endian primitives ----

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), (std::streamsize)n);
}

void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8)};
    put_bytes(os, b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    put_bytes(os, b, 4);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

void get_bytes(std::istream& is, void* p, std::size_t n, const std::string& path) {
    is.read(static_cast<char*>(p), (std::streamsize)n);
    if ((std::size_t)is.gcount() != n)
        throw IngestError(path + ": truncated checkpoint");
}

std::uint16_t get_u16(std::istream& is, const std::string& path) {
    unsigned char b[2];
    get_bytes(is, b, 2, path);
    return (std::uint16_t)(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    get_bytes(is, b, 4, path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= (std::uint32_t)b[i] << (8 * i);
    return v;
}

float get_f32(std::istream& is, const std::string& path) {
    const std::uint32_t bits = get_u32(is, path);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

// ---- architecture descriptor ----

const char* padding_name(autograd::Padding p) {
    return p == autograd::Padding::same ? "same" : "valid";
}

autograd::Padding padding_value(const std::string& s, const std::string& path) {
    if (s == "same") return autograd::Padding::same;
    if (s == "valid") return autograd::Padding::valid;
    throw IngestError(path + ": unknown padding '" + s + "'");
}

json conv_descriptor(const ConvLayer& l) {
    return json{{"type", "conv"},         {"name", l.name},
                {"out", l.out_channels()}, {"in", l.in_channels()},
                {"kernel", l.kernel()},    {"padding", padding_name(l.padding)},
                {"stride", l.stride},      {"prunable", l.prunable}};
}

json pool_descriptor(const PoolLayer& p) {
    return json{{"type", "pool"},
                {"kernel", p.kernel},
                {"stride", p.stride},
                {"pad", p.pad}};
}

json graph_descriptor(const ModelGraph& g) {
    json nodes = json::array();
    for (const GraphNode& node : g.nodes)
        std::visit(
            overloaded{
                [&](const ConvLayer& l) { nodes.push_back(conv_descriptor(l)); },
                [&](const ReluLayer&) { nodes.push_back({{"type", "relu"}}); },
                [&](const PoolLayer& p) { nodes.push_back(pool_descriptor(p)); },
                [&](const FlattenLayer&) {
                    nodes.push_back({{"type", "flatten"}});
                },
                [&](const DenseLayer& l) {
                    nodes.push_back({{"type", "dense"},
                                     {"name", l.name},
                                     {"in", l.in_features()},
                                     {"out", l.out_features()}});
                },
                [&](const ResidualBlock& rb) {
                    nodes.push_back({{"type", "residual"},
                                     {"conv1", conv_descriptor(rb.conv1)},
                                     {"conv2", conv_descriptor(rb.conv2)}});
                },
                [&](const InceptionBlock& ib) {
                    json branches = json::array();
                    for (const InceptionBranch& br : ib.branches) {
                        json convs = json::array();
                        for (const ConvLayer& l : br.convs)
                            convs.push_back(conv_descriptor(l));
                        branches.push_back({{"pool_first", br.pool_first},
                                            {"pre_pool", pool_descriptor(br.pre_pool)},
                                            {"convs", convs}});
                    }
                    nodes.push_back({{"type", "inception"}, {"branches", branches}});
                }},
            node);
    return json{{"input_shape", g.input_shape},
                {"num_classes", g.num_classes},
                {"nodes", nodes}};
}

ConvLayer conv_from_descriptor(const json& j, const std::string& path) {
    ConvLayer l = make_conv(j.at("name").get<std::string>(),
                            j.at("out").get<std::size_t>(),
                            j.at("in").get<std::size_t>(),
                            j.at("kernel").get<std::size_t>(),
                            padding_value(j.at("padding").get<std::string>(), path),
                            j.at("prunable").get<bool>());
    l.stride = j.at("stride").get<std::size_t>();
    return l;
}

PoolLayer pool_from_descriptor(const json& j) {
    PoolLayer p;
    p.kernel = j.at("kernel").get<std::size_t>();
    p.stride = j.at("stride").get<std::size_t>();
    p.pad = j.at("pad").get<std::size_t>();
    return p;
}

ModelGraph graph_from_descriptor(const json& desc, const std::string& path) {
    ModelGraph g;
    g.input_shape = desc.at("input_shape").get<Shape>();
    g.num_classes = desc.at("num_classes").get<std::size_t>();
    for (const json& j : desc.at("nodes")) {
        const std::string type = j.at("type").get<std::string>();
        if (type == "conv") {
            g.nodes.emplace_back(conv_from_descriptor(j, path));
        } else if (type == "relu") {
            g.nodes.emplace_back(ReluLayer{});
        } else if (type == "pool") {
            g.nodes.emplace_back(pool_from_descriptor(j));
        } else if (type == "flatten") {
            g.nodes.emplace_back(FlattenLayer{});
        } else if (type == "dense") {
            g.nodes.emplace_back(make_dense(j.at("name").get<std::string>(),
                                            j.at("in").get<std::size_t>(),
                                            j.at("out").get<std::size_t>()));
        } else if (type == "residual") {
            ResidualBlock rb;
            rb.conv1 = conv_from_descriptor(j.at("conv1"), path);
            rb.conv2 = conv_from_descriptor(j.at("conv2"), path);
            g.nodes.emplace_back(std::move(rb));
        } else if (type == "inception") {
            InceptionBlock ib;
            for (const json& bj : j.at("branches")) {
                InceptionBranch br;
                br.pool_first = bj.at("pool_first").get<bool>();
                br.pre_pool = pool_from_descriptor(bj.at("pre_pool"));
                for (const json& cj : bj.at("convs"))
                    br.convs.push_back(conv_from_descriptor(cj, path));
                ib.branches.push_back(std::move(br));
            }
            g.nodes.emplace_back(std::move(ib));
        } else {
            throw IngestError(path + ": unknown node type '" + type + "'");
        }
    }
    return g;
}

// Named parameter tensors in traversal order; names must be unique.
std::vector<std::pair<std::string, TensorBuffer*>> named_params(ModelGraph& g) {
    std::vector<std::pair<std::string, TensorBuffer*>> out;
    auto push = [&](const std::string& name, TensorBuffer& w, TensorBuffer& b) {
        out.emplace_back(name + ".w", &w);
        out.emplace_back(name + ".b", &b);
    };
    for (GraphNode& node : g.nodes)
        std::visit(overloaded{[&](ConvLayer& l) { push(l.name, l.w, l.b); },
                              [&](ResidualBlock& rb) {
                                  push(rb.conv1.name, rb.conv1.w, rb.conv1.b);
                                  push(rb.conv2.name, rb.conv2.w, rb.conv2.b);
                              },
                              [&](InceptionBlock& ib) {
                                  for (InceptionBranch& br : ib.branches)
                                      for (ConvLayer& l : br.convs)
                                          push(l.name, l.w, l.b);
                              },
                              [&](DenseLayer& l) { push(l.name, l.w, l.b); },
                              [](auto&) {}},
                   node);
    return out;
}

}  // namespace

void save_checkpoint(const ModelGraph& g, const std::string& path) {
    auto params = named_params(const_cast<ModelGraph&>(g));
    {
        std::map<std::string, int> seen;
        for (const auto& [name, t] : params)
            if (++seen[name] > 1)
                throw InternalError("save_checkpoint: duplicate tensor name '" +
                                    name + "'");
    }

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IngestError(path + ": cannot open for writing");

    put_bytes(os, kMagic, 4);
    put_u32(os, kVersion);
    const std::string desc = graph_descriptor(g).dump();
    put_u32(os, (std::uint32_t)desc.size());
    put_bytes(os, desc.data(), desc.size());

    put_u32(os, (std::uint32_t)params.size());
    for (const auto& [name, t] : params) {
        put_u16(os, (std::uint16_t)name.size());
        put_bytes(os, name.data(), name.size());
        os.put((char)t->rank());
        for (std::size_t i = 0; i < t->rank(); ++i)
            put_u32(os, (std::uint32_t)t->dim(i));
        for (double v : t->data) put_f32(os, (float)v);
    }
    os.flush();
    if (!os) throw IngestError(path + ": write failed");
}

ModelGraph load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestError(path + ": cannot open");

    char magic[4];
    get_bytes(is, magic, 4, path);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw IngestError(path + ": bad magic, not a checkpoint file");
    const std::uint32_t version = get_u32(is, path);
    if (version != kVersion)
        throw IngestError(path + ": unsupported checkpoint version " +
                          std::to_string(version));

    const std::uint32_t desc_len = get_u32(is, path);
    std::string desc(desc_len, '\0');
    get_bytes(is, desc.data(), desc_len, path);
    json parsed;
    try {
        parsed = json::parse(desc);
    } catch (const json::exception& e) {
        throw IngestError(path + ": bad architecture descriptor: " + e.what());
    }
    ModelGraph g;
    try {
        g = graph_from_descriptor(parsed, path);
    } catch (const json::exception& e) {
        throw IngestError(path + ": bad architecture descriptor: " + e.what());
    }

    auto params = named_params(g);
    const std::uint32_t blob_count = get_u32(is, path);
    if (blob_count != params.size())
        throw IngestError(path + ": " + std::to_string(blob_count) +
                          " blobs for " + std::to_string(params.size()) +
                          " parameter tensors");
    for (auto& [name, t] : params) {
        const std::uint16_t name_len = get_u16(is, path);
        std::string blob_name(name_len, '\0');
        get_bytes(is, blob_name.data(), name_len, path);
        if (blob_name != name)
            throw IngestError(path + ": expected blob '" + name + "', found '" +
                              blob_name + "'");
        int ndim = is.get();
        if (ndim < 0) throw IngestError(path + ": truncated checkpoint");
        Shape shape((std::size_t)ndim);
        for (std::size_t i = 0; i < shape.size(); ++i)
            shape[i] = get_u32(is, path);
        if (shape != t->shape)
            throw IngestError(path + ": blob '" + name + "' has shape " +
                              shape_str(shape) + ", descriptor says " +
                              shape_str(t->shape));
        for (double& v : t->data) v = (double)get_f32(is, path);
        ensure_finite(*t, ("checkpoint blob " + name).c_str());
    }
    is.peek();
    if (!is.eof()) throw IngestError(path + ": trailing bytes after last blob");

    try {
        check_shapes(g);
    } catch (const ShapeError& e) {
        throw IngestError(path + ": inconsistent architecture: " + e.what());
    }
    return g;
}

std::string checkpoint_summary(const std::string& path) {
    ModelGraph g = load_checkpoint(path);
    json tensors = json::array();
    for (const auto& [name, t] : named_params(g))
        tensors.push_back({{"name", name},
                           {"shape", t->shape},
                           {"elements", t->size()}});
    const FlopsBreakdown fb = count_flops(g);
    json out{{"file", path},
             {"input_shape", g.input_shape},
             {"num_classes", g.num_classes},
             {"params", count_params(g)},
             {"flops", fb.total()},
             {"conv_filters", conv_filter_counts(g)},
             {"conv_names", conv_layer_names(g)},
             {"tensors", tensors}};
    return out.dump(2);
}

}  // namespace fedprune
