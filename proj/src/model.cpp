#include "lanecast/model.hpp"

#include "lanecast/errors.hpp"
#include "lanecast/serialization.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace lanecast {

namespace {

constexpr double kMaskedLogit = -1e30;
constexpr double kPsiFloor = 1e-8;

std::string block_name(std::size_t b, const char* part) {
    return "temporal.block" + std::to_string(b) + "." + part;
}

template <std::floating_point T>
Bindings<T> bind_params(const ParamMap<T>& params) {
    Bindings<T> out;
    for (const auto& [name, value] : params) out.emplace(name, value);
    return out;
}

template <std::floating_point T>
NodeId mlp(Graph<T>& g, NodeId x, const std::string& prefix, std::size_t in, std::size_t hidden) {
    const NodeId w1 = g.leaf(prefix + ".w1", {in, hidden});
    const NodeId b1 = g.leaf(prefix + ".b1", {1, hidden});
    const NodeId w2 = g.leaf(prefix + ".w2", {hidden, in});
    const NodeId b2 = g.leaf(prefix + ".b2", {1, in});
    const NodeId h = g.gelu(g.add(g.matmul(x, w1), b1));
    return g.add(g.matmul(h, w2), b2);
}

} // namespace

void GraphMLPConfig::validate() const {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw std::invalid_argument("graphmlp config: " + what);
    };
    need(nodes >= 1, "nodes must be >= 1");
    need(window >= 1, "window must be >= 1");
    need(horizon >= 1, "horizon must be >= 1");
    need(key_dim >= 1, "key_dim must be >= 1");
    need(patches >= 1 && patches <= window, "patches must lie in 1..window");
    need(depth >= 1 && depth <= 4, "depth must lie in 1..4");
    need(hidden >= 1, "hidden must be >= 1");
    need(epsilon > 0.0, "epsilon must be positive");
    need(dynamic_graph || temporal_mlp, "cannot disable both branches");
    need(static_cast<int>(!instance_norm) + static_cast<int>(!dynamic_graph) + static_cast<int>(!temporal_mlp) <= 1,
         "at most one component may be disabled");
    need(attention_mask.empty() || attention_mask.size() == nodes * nodes, "attention mask must be N x N");
}

std::vector<std::uint8_t> neighbourhood_mask(const LaneNetwork& net) {
    const std::size_t n = net.size();
    std::vector<std::uint8_t> mask(n * n, 0);
    for (std::size_t u = 0; u < n; ++u) mask[u * n + u] = 1;
    for (const LaneEdge& e : net.edges()) mask[e.u * n + e.v] = mask[e.v * n + e.u] = 1;
    return mask;
}

namespace graphmlp {

template <std::floating_point T>
NormNodes build_instance_norm(Graph<T>& g, const GraphMLPConfig& cfg, NodeId x) {
    const std::size_t n = g.shape(x)[0];
    const NodeId psi = g.leaf("norm.psi", {n, 1});
    const NodeId beta = g.leaf("norm.beta", {n, 1});
    NormNodes out;
    out.mean = g.row_mean(x);
    out.variance = g.row_variance(x);
    out.stddev = g.sqrt(g.offset(out.variance, cfg.epsilon));
    const NodeId standardized = g.div(g.sub(x, out.mean), out.stddev);
    out.normalized = g.add(g.mul(standardized, psi), beta);
    g.set_label(out.normalized, "normalized");
    return out;
}

template <std::floating_point T>
NodeId build_denormalize(Graph<T>& g, const GraphMLPConfig& cfg, NodeId fused, NodeId mean, NodeId stddev) {
    (void)cfg;
    const std::size_t n = g.shape(fused)[0];
    const NodeId psi = g.has_leaf("norm.psi") ? g.leaf_id("norm.psi") : g.leaf("norm.psi", {n, 1});
    const NodeId beta = g.has_leaf("norm.beta") ? g.leaf_id("norm.beta") : g.leaf("norm.beta", {n, 1});
    const NodeId unshifted = g.div(g.sub(fused, beta), psi);
    const NodeId out = g.add(g.mul(stddev, unshifted), mean);
    g.set_label(out, "prediction");
    return out;
}

template <std::floating_point T>
NodeId build_attention(Graph<T>& g, const GraphMLPConfig& cfg, NodeId normalized) {
    const std::size_t n = g.shape(normalized)[0];
    const std::size_t t = g.shape(normalized)[1];
    const NodeId wq = g.leaf("attn.wq", {t, cfg.key_dim});
    const NodeId wk = g.leaf("attn.wk", {t, cfg.key_dim});
    const NodeId q = g.matmul(normalized, wq);
    const NodeId k = g.matmul(normalized, wk);
    NodeId logits = g.scale(g.matmul(q, g.transpose(k)), 1.0 / std::sqrt(static_cast<double>(cfg.key_dim)));
    logits = g.leaky_relu(logits);
    if (!cfg.attention_mask.empty()) {
        if (cfg.attention_mask.size() != n * n) throw ShapeError("attention mask must be N x N");
        std::vector<T> add(n * n);
        for (std::size_t u = 0; u < n; ++u)
            for (std::size_t v = 0; v < n; ++v)
                add[u * n + v] = (u == v || cfg.attention_mask[u * n + v]) ? T(0) : static_cast<T>(kMaskedLogit);
        logits = g.add(logits, g.constant(BasicTensor<T>({n, n}, std::move(add))));
    }
    const NodeId alpha = g.softmax(logits);
    g.set_label(alpha, "attention");
    return alpha;
}

template <std::floating_point T>
NodeId build_graph_convolution(Graph<T>& g, NodeId normalized, NodeId attention) {
    const NodeId out = g.leaky_relu(g.matmul(attention, normalized));
    g.set_label(out, "convolved");
    return out;
}

template <std::floating_point T>
NodeId build_spatial_head(Graph<T>& g, const GraphMLPConfig& cfg, NodeId convolved) {
    const std::size_t t = g.shape(convolved)[1];
    const NodeId w = g.leaf("spatial.head.w", {t, cfg.horizon});
    const NodeId b = g.leaf("spatial.head.b", {1, cfg.horizon});
    const NodeId out = g.add(g.matmul(convolved, w), b);
    g.set_label(out, "spatial");
    return out;
}

template <std::floating_point T>
NodeId build_temporal(Graph<T>& g, const GraphMLPConfig& cfg, NodeId normalized) {
    const std::size_t n = g.shape(normalized)[0];
    const std::size_t t = g.shape(normalized)[1];
    const std::size_t m = cfg.patches;
    const std::size_t k = cfg.patch_length();
    const std::size_t p = cfg.padded_window();
    if (t != cfg.window) throw ShapeError("temporal branch expects window " + std::to_string(cfg.window));

    NodeId x = normalized;
    if (p > t) {
        const NodeId first = g.slice_cols(normalized, 0, 1);
        std::vector<NodeId> parts(p - t, first);
        parts.push_back(normalized);
        x = g.concat_cols(parts);
    }
    std::optional<NodeId> total;
    NodeId block_in = x;
    for (std::size_t b = 0; b < cfg.depth; ++b) {
        const NodeId patches = g.reshape(block_in, {n * m, k});
        const NodeId intra = g.reshape(mlp(g, patches, block_name(b, "intra"), k, cfg.hidden), {n, p});
        const NodeId inter = mlp(g, intra, block_name(b, "inter"), p, cfg.hidden);
        total = total ? g.add(*total, inter) : inter;
        block_in = inter;
    }
    const NodeId w = g.leaf("temporal.head.w", {p, cfg.horizon});
    const NodeId bias = g.leaf("temporal.head.b", {1, cfg.horizon});
    const NodeId out = g.add(g.matmul(*total, w), bias);
    g.set_label(out, "temporal");
    return out;
}

template <std::floating_point T>
NodeId build_gate(Graph<T>& g, NodeId spatial, NodeId temporal, NodeId* lambda_out) {
    const NodeId raw = g.leaf("gate.g", {1, 1});
    const NodeId lambda = g.logistic(raw);
    if (lambda_out) *lambda_out = lambda;
    const NodeId out = g.add(temporal, g.mul(lambda, g.sub(spatial, temporal)));
    g.set_label(out, "fused");
    return out;
}

template <std::floating_point T>
GraphMLPNodes build_forward(Graph<T>& g, const GraphMLPConfig& cfg, NodeId x) {
    cfg.validate();
    if (g.shape(x) != Shape{cfg.nodes, cfg.window}) {
        throw ShapeError("graphmlp input must be " + shape_string({cfg.nodes, cfg.window}) + ", got " +
                         shape_string(g.shape(x)));
    }
    GraphMLPNodes out;
    std::optional<NormNodes> norm;
    if (cfg.instance_norm) {
        norm = build_instance_norm(g, cfg, x);
        out.normalized = norm->normalized;
        out.mean = norm->mean;
        out.stddev = norm->stddev;
    } else {
        out.normalized = x;
    }
    if (cfg.dynamic_graph) {
        out.attention = build_attention(g, cfg, out.normalized);
        out.convolved = build_graph_convolution(g, out.normalized, *out.attention);
        out.spatial = build_spatial_head(g, cfg, *out.convolved);
    }
    if (cfg.temporal_mlp) out.temporal = build_temporal(g, cfg, out.normalized);
    if (out.spatial && out.temporal) {
        NodeId lambda;
        out.fused = build_gate(g, *out.spatial, *out.temporal, &lambda);
        out.gate = lambda;
    } else {
        out.fused = out.spatial ? *out.spatial : *out.temporal;
    }
    out.prediction = norm ? build_denormalize(g, cfg, out.fused, norm->mean, norm->stddev) : out.fused;
    return out;
}

#define LANECAST_INSTANTIATE(T)                                                                              \
    template NormNodes build_instance_norm<T>(Graph<T>&, const GraphMLPConfig&, NodeId);                     \
    template NodeId build_denormalize<T>(Graph<T>&, const GraphMLPConfig&, NodeId, NodeId, NodeId);           \
    template NodeId build_attention<T>(Graph<T>&, const GraphMLPConfig&, NodeId);                            \
    template NodeId build_graph_convolution<T>(Graph<T>&, NodeId, NodeId);                                   \
    template NodeId build_spatial_head<T>(Graph<T>&, const GraphMLPConfig&, NodeId);                         \
    template NodeId build_temporal<T>(Graph<T>&, const GraphMLPConfig&, NodeId);                             \
    template NodeId build_gate<T>(Graph<T>&, NodeId, NodeId, NodeId*);                                       \
    template GraphMLPNodes build_forward<T>(Graph<T>&, const GraphMLPConfig&, NodeId);
LANECAST_INSTANTIATE(float)
LANECAST_INSTANTIATE(double)
#undef LANECAST_INSTANTIATE

} // namespace graphmlp

GraphMLP::GraphMLP(GraphMLPConfig config) : config_(std::move(config)) { config_.validate(); }

std::vector<std::pair<std::string, Shape>> GraphMLP::parameter_shapes() const {
    const std::size_t n = config_.nodes, t = config_.window, z = config_.horizon, d = config_.key_dim;
    const std::size_t k = config_.patch_length(), p = config_.padded_window(), h = config_.hidden;
    std::vector<std::pair<std::string, Shape>> out{
        {"norm.psi", {n, 1}},       {"norm.beta", {n, 1}},      {"attn.wq", {t, d}},
        {"attn.wk", {t, d}},        {"spatial.head.w", {t, z}}, {"spatial.head.b", {1, z}},
    };
    for (std::size_t b = 0; b < config_.depth; ++b) {
        for (auto [part, width] : {std::pair{"intra", k}, std::pair{"inter", p}}) {
            const std::string prefix = block_name(b, part);
            out.push_back({prefix + ".w1", {width, h}});
            out.push_back({prefix + ".b1", {1, h}});
            out.push_back({prefix + ".w2", {h, width}});
            out.push_back({prefix + ".b2", {1, width}});
        }
    }
    out.push_back({"temporal.head.w", {p, z}});
    out.push_back({"temporal.head.b", {1, z}});
    out.push_back({"gate.g", {1, 1}});
    return out;
}

ParamMap<float> GraphMLP::initial_parameters(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    ParamMap<float> out;
    for (const auto& [name, shape] : parameter_shapes()) {
        const std::size_t size = shape_size(shape);
        std::vector<float> values(size, 0.0f);
        const bool is_weight = name.starts_with("attn.w") || name.ends_with(".w") || name.ends_with(".w1") ||
                               name.ends_with(".w2");
        if (name == "norm.psi") {
            std::fill(values.begin(), values.end(), 1.0f);
        } else if (is_weight) {
            const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
            std::uniform_real_distribution<double> u(-limit, limit);
            for (float& v : values) v = static_cast<float>(u(rng));
        }
        out.emplace(name, TensorF(shape, std::move(values)));
    }
    return out;
}

NodeId GraphMLP::build(Graph<float>& graph, NodeId input) const {
    return graphmlp::build_forward(graph, config_, input).prediction;
}

NodeId GraphMLP::build(Graph<double>& graph, NodeId input) const {
    return graphmlp::build_forward(graph, config_, input).prediction;
}

void GraphMLP::validate(const ParamMap<float>& params) const {
    for (const auto& [name, shape] : parameter_shapes()) {
        auto it = params.find(name);
        if (it == params.end()) throw ShapeError("missing parameter '" + name + "'");
        if (it->second.shape() != shape) {
            throw ShapeError("parameter '" + name + "' has shape " + shape_string(it->second.shape()) + ", expected " +
                             shape_string(shape));
        }
    }
    if (config_.instance_norm) {
        for (float v : params.at("norm.psi").values()) {
            if (std::abs(v) < kPsiFloor) throw NumericError("instance-norm scale psi is below 1e-8 in magnitude");
        }
    }
}

template <std::floating_point T>
Normalized<T> instance_normalize(const BasicTensor<T>& x, const BasicTensor<T>& psi, const BasicTensor<T>& beta,
                                 double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    GraphMLPConfig cfg;
    cfg.epsilon = epsilon;
    Graph<T> g;
    const NodeId in = g.leaf("x", x.shape());
    const graphmlp::NormNodes nodes = graphmlp::build_instance_norm(g, cfg, in);
    const Evaluation<T> ev = g.evaluate({{"x", x}, {"norm.psi", psi}, {"norm.beta", beta}});
    return {ev.value(nodes.normalized), {ev.value(nodes.mean), ev.value(nodes.variance)}};
}

template <std::floating_point T>
BasicTensor<T> instance_denormalize(const BasicTensor<T>& fused, const NormState<T>& state, const BasicTensor<T>& psi,
                                    const BasicTensor<T>& beta, double epsilon) {
    for (T v : psi.values()) {
        if (std::abs(static_cast<double>(v)) < kPsiFloor) {
            throw NumericError("instance-norm scale psi is below 1e-8 in magnitude");
        }
    }
    GraphMLPConfig cfg;
    cfg.epsilon = epsilon;
    Graph<T> g;
    const NodeId f = g.leaf("fused", fused.shape());
    const NodeId mean = g.leaf("mean", state.mean.shape());
    const NodeId var = g.leaf("variance", state.variance.shape());
    const NodeId stddev = g.sqrt(g.offset(var, epsilon));
    const NodeId out = graphmlp::build_denormalize(g, cfg, f, mean, stddev);
    return g.evaluate({{"fused", fused},
                       {"mean", state.mean},
                       {"variance", state.variance},
                       {"norm.psi", psi},
                       {"norm.beta", beta}})
        .value(out);
}

template <std::floating_point T>
BasicTensor<T> attention_weights(const GraphMLPConfig& cfg, const BasicTensor<T>& normalized,
                                 const ParamMap<T>& params) {
    Graph<T> g;
    const NodeId in = g.leaf("normalized", normalized.shape());
    const NodeId out = graphmlp::build_attention(g, cfg, in);
    Bindings<T> b = bind_params(params);
    b.insert_or_assign("normalized", normalized);
    return g.evaluate(b).value(out);
}

AdjacencyMatrix dynamic_attention(const GraphMLPConfig& cfg, const Tensor& normalized, const ParamMap<double>& params) {
    const Tensor a = attention_weights(cfg, normalized, params);
    return AdjacencyMatrix(a.shape()[0], std::vector<double>(a.values().begin(), a.values().end()),
                           AdjacencyKind::Dynamic);
}

template <std::floating_point T>
BasicTensor<T> graph_convolve(const BasicTensor<T>& normalized, const BasicTensor<T>& attention) {
    Graph<T> g;
    const NodeId x = g.leaf("normalized", normalized.shape());
    const NodeId a = g.leaf("attention", attention.shape());
    const NodeId out = graphmlp::build_graph_convolution(g, x, a);
    return g.evaluate({{"normalized", normalized}, {"attention", attention}}).value(out);
}

template <std::floating_point T>
BasicTensor<T> spatial_head(const GraphMLPConfig& cfg, const BasicTensor<T>& convolved, const ParamMap<T>& params) {
    Graph<T> g;
    const NodeId in = g.leaf("convolved", convolved.shape());
    const NodeId out = graphmlp::build_spatial_head(g, cfg, in);
    Bindings<T> b = bind_params(params);
    b.insert_or_assign("convolved", convolved);
    return g.evaluate(b).value(out);
}

template <std::floating_point T>
BasicTensor<T> temporal_mlp(const GraphMLPConfig& cfg, const BasicTensor<T>& normalized, const ParamMap<T>& params) {
    Graph<T> g;
    const NodeId in = g.leaf("normalized", normalized.shape());
    const NodeId out = graphmlp::build_temporal(g, cfg, in);
    Bindings<T> b = bind_params(params);
    b.insert_or_assign("normalized", normalized);
    return g.evaluate(b).value(out);
}

template <std::floating_point T>
BasicTensor<T> gate_fuse(const BasicTensor<T>& spatial, const BasicTensor<T>& temporal, const BasicTensor<T>& gate) {
    if (spatial.shape() != temporal.shape()) {
        throw ShapeError("gate inputs differ: " + shape_string(spatial.shape()) + " vs " +
                         shape_string(temporal.shape()));
    }
    Graph<T> g;
    const NodeId s = g.leaf("spatial", spatial.shape());
    const NodeId t = g.leaf("temporal", temporal.shape());
    const NodeId out = graphmlp::build_gate(g, s, t);
    return g.evaluate({{"spatial", spatial}, {"temporal", temporal}, {"gate.g", gate}}).value(out);
}

template <std::floating_point T>
BasicTensor<T> forward(const GraphMLPConfig& cfg, const BasicTensor<T>& input, const ParamMap<T>& params) {
    cfg.validate();
    if (input.shape() != Shape{cfg.nodes, cfg.window}) {
        throw ShapeError("graphmlp input must be " + shape_string({cfg.nodes, cfg.window}) + ", got " +
                         shape_string(input.shape()));
    }
    std::optional<Normalized<T>> norm;
    BasicTensor<T> normalized = input;
    if (cfg.instance_norm) {
        norm = instance_normalize(input, params.at("norm.psi"), params.at("norm.beta"), cfg.epsilon);
        normalized = norm->values;
    }
    std::optional<BasicTensor<T>> spatial;
    std::optional<BasicTensor<T>> temporal;
    if (cfg.dynamic_graph) {
        const BasicTensor<T> alpha = attention_weights(cfg, normalized, params);
        spatial = spatial_head(cfg, graph_convolve(normalized, alpha), params);
    }
    if (cfg.temporal_mlp) temporal = temporal_mlp(cfg, normalized, params);
    const BasicTensor<T> fused =
        spatial && temporal ? gate_fuse(*spatial, *temporal, params.at("gate.g")) : (spatial ? *spatial : *temporal);
    if (!norm) return fused;
    return instance_denormalize(fused, norm->state, params.at("norm.psi"), params.at("norm.beta"), cfg.epsilon);
}

#define LANECAST_INSTANTIATE(T)                                                                                     \
    template Normalized<T> instance_normalize<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                                 double);                                                          \
    template BasicTensor<T> instance_denormalize<T>(const BasicTensor<T>&, const NormState<T>&, const BasicTensor<T>&, \
                                                    const BasicTensor<T>&, double);                                 \
    template BasicTensor<T> attention_weights<T>(const GraphMLPConfig&, const BasicTensor<T>&, const ParamMap<T>&);  \
    template BasicTensor<T> graph_convolve<T>(const BasicTensor<T>&, const BasicTensor<T>&);                        \
    template BasicTensor<T> spatial_head<T>(const GraphMLPConfig&, const BasicTensor<T>&, const ParamMap<T>&);       \
    template BasicTensor<T> temporal_mlp<T>(const GraphMLPConfig&, const BasicTensor<T>&, const ParamMap<T>&);       \
    template BasicTensor<T> gate_fuse<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);        \
    template BasicTensor<T> forward<T>(const GraphMLPConfig&, const BasicTensor<T>&, const ParamMap<T>&);
LANECAST_INSTANTIATE(float)
LANECAST_INSTANTIATE(double)
#undef LANECAST_INSTANTIATE

// ---- configuration JSON -----------------------------------------------------

void to_json(nlohmann::json& j, const GraphMLPConfig& c) {
    j = nlohmann::json{{"nodes", c.nodes},
                       {"window", c.window},
                       {"horizon", c.horizon},
                       {"key_dim", c.key_dim},
                       {"patches", c.patches},
                       {"depth", c.depth},
                       {"hidden", c.hidden},
                       {"epsilon", c.epsilon},
                       {"instance_norm", c.instance_norm},
                       {"dynamic_graph", c.dynamic_graph},
                       {"temporal_mlp", c.temporal_mlp},
                       {"attention_mask", c.attention_mask}};
}

void from_json(const nlohmann::json& j, GraphMLPConfig& c) {
    if (!j.is_object()) throw ParseError("graphmlp config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "nodes") c.nodes = value.get<std::size_t>();
        else if (key == "window") c.window = value.get<std::size_t>();
        else if (key == "horizon") c.horizon = value.get<std::size_t>();
        else if (key == "key_dim") c.key_dim = value.get<std::size_t>();
        else if (key == "patches") c.patches = value.get<std::size_t>();
        else if (key == "depth") c.depth = value.get<std::size_t>();
        else if (key == "hidden") c.hidden = value.get<std::size_t>();
        else if (key == "epsilon") c.epsilon = value.get<double>();
        else if (key == "instance_norm") c.instance_norm = value.get<bool>();
        else if (key == "dynamic_graph") c.dynamic_graph = value.get<bool>();
        else if (key == "temporal_mlp") c.temporal_mlp = value.get<bool>();
        else if (key == "attention_mask") c.attention_mask = value.get<std::vector<std::uint8_t>>();
        else throw ParseError("unknown graphmlp config key '" + key + "'");
    }
}

// ---- checkpoints ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'L', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class U>
U get_le(std::string_view bytes, std::size_t& pos) {
    if (pos + sizeof(U) > bytes.size()) throw ParseError("checkpoint truncated");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += sizeof(U);
    return v;
}

} // namespace

std::string encode_checkpoint(const ModelParams& params) {
    nlohmann::json header;
    header["format"] = "lanecast-checkpoint";
    header["version"] = kVersion;
    header["model"] = params.model;
    header["seed"] = params.seed;
    header["config"] = params.config;
    nlohmann::json arrays = nlohmann::json::array();
    for (const auto& [name, value] : params.values) arrays.push_back({{"name", name}, {"shape", value.shape()}});
    header["arrays"] = arrays;
    const std::string text = header.dump();

    std::string out(kMagic, 4);
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint64_t>(out, text.size());
    out += text;
    for (const auto& [name, value] : params.values)
        for (float v : value.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

ModelParams decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError("not a lanecast checkpoint");
    std::size_t pos = 4;
    const auto version = get_le<std::uint32_t>(bytes, pos);
    if (version != kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
    const auto length = get_le<std::uint64_t>(bytes, pos);
    if (pos + length > bytes.size()) throw ParseError("checkpoint header truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(pos, length));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint header: ") + e.what());
    }
    pos += length;
    ModelParams out;
    try {
        out.model = header.at("model").get<std::string>();
        out.seed = header.at("seed").get<std::uint64_t>();
        out.config = header.at("config").get<GraphMLPConfig>();
        for (const auto& entry : header.at("arrays")) {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<Shape>();
            std::vector<float> values(shape_size(shape));
            for (float& v : values) v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
            out.values.emplace(name, TensorF(shape, std::move(values)));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint header: ") + e.what());
    }
    if (pos != bytes.size()) throw ParseError("checkpoint has trailing bytes");
    return out;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    const std::string bytes = encode_checkpoint(params);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_checkpoint(buf.str());
}

} // namespace lanecast
