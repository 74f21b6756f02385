#pragma once

#include "lanecast/lane_network.hpp"
#include "lanecast/trainable.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lanecast {

struct GraphMLPConfig {
    std::size_t nodes = 8;
    std::size_t window = 12;
    std::size_t horizon = 3;
    /// Query/key width of the attention projections.
    std::size_t key_dim = 16;
    /// Number of temporal patches m; the window is left-padded to a multiple of m.
    std::size_t patches = 3;
    /// Stacked temporal blocks D, 1..4.
    std::size_t depth = 3;
    /// Hidden width of the intra- and inter-patch MLPs.
    std::size_t hidden = 64;
    double epsilon = 1e-5;
    bool instance_norm = true;
    /// false pins the gate to the temporal branch.
    bool dynamic_graph = true;
    /// false pins the gate to the spatial branch.
    bool temporal_mlp = true;
    /// Row-major N x N 0/1 neighbourhood for the attention softmax (self added
    /// automatically). Empty means attention over all nodes.
    std::vector<std::uint8_t> attention_mask;

    std::size_t patch_length() const { return (window + patches - 1) / patches; }
    std::size_t padded_window() const { return patch_length() * patches; }
    /// Throws std::invalid_argument on inconsistent settings.
    void validate() const;
};

/// Binary-graph neighbourhood (plus self) for GraphMLPConfig::attention_mask.
std::vector<std::uint8_t> neighbourhood_mask(const LaneNetwork& net);

/// Graph handles of the intermediate values of one GraphMLP forward pass.
struct GraphMLPNodes {
    NodeId normalized;
    std::optional<NodeId> mean;
    std::optional<NodeId> stddev;
    std::optional<NodeId> attention;
    std::optional<NodeId> convolved;
    std::optional<NodeId> spatial;
    std::optional<NodeId> temporal;
    std::optional<NodeId> gate;
    NodeId fused;
    NodeId prediction;
};

/// Component builders. Each declares the parameter leaves it uses under the
/// names listed by GraphMLP::parameter_shapes().
namespace graphmlp {

struct NormNodes {
    NodeId normalized;
    NodeId mean;     // N x 1
    NodeId variance; // N x 1
    NodeId stddev;   // N x 1, sqrt(variance + epsilon)
};

template <std::floating_point T>
NormNodes build_instance_norm(Graph<T>& g, const GraphMLPConfig& cfg, NodeId x);
template <std::floating_point T>
NodeId build_denormalize(Graph<T>& g, const GraphMLPConfig& cfg, NodeId fused, NodeId mean, NodeId stddev);
template <std::floating_point T>
NodeId build_attention(Graph<T>& g, const GraphMLPConfig& cfg, NodeId normalized);
/// LeakyReLU(attention * x), N x T.
template <std::floating_point T>
NodeId build_graph_convolution(Graph<T>& g, NodeId normalized, NodeId attention);
template <std::floating_point T>
NodeId build_spatial_head(Graph<T>& g, const GraphMLPConfig& cfg, NodeId convolved);
template <std::floating_point T>
NodeId build_temporal(Graph<T>& g, const GraphMLPConfig& cfg, NodeId normalized);
/// temporal + lambda * (spatial - temporal), lambda = logistic(gate.g).
template <std::floating_point T>
NodeId build_gate(Graph<T>& g, NodeId spatial, NodeId temporal, NodeId* lambda_out = nullptr);
/// The whole forward pass in one graph.
template <std::floating_point T>
GraphMLPNodes build_forward(Graph<T>& g, const GraphMLPConfig& cfg, NodeId x);

} // namespace graphmlp

class GraphMLP final : public TrainableModel {
public:
    explicit GraphMLP(GraphMLPConfig config);

    const GraphMLPConfig& config() const noexcept { return config_; }

    std::string name() const override { return "graphmlp"; }
    std::size_t nodes() const override { return config_.nodes; }
    std::size_t window() const override { return config_.window; }
    std::size_t horizon() const override { return config_.horizon; }

    /// Every parameter of the architecture, in a fixed order, whether or not
    /// an ablation leaves it unused.
    std::vector<std::pair<std::string, Shape>> parameter_shapes() const;
    /// Glorot-uniform weights, zero biases, psi = 1, beta = 0, gate = 0.
    ParamMap<float> initial_parameters(std::uint64_t seed) const override;
    NodeId build(Graph<float>& graph, NodeId input) const override;
    NodeId build(Graph<double>& graph, NodeId input) const override;
    void validate(const ParamMap<float>& params) const override;

private:
    GraphMLPConfig config_;
};

/// Per-node statistics recorded by instance_normalize.
template <std::floating_point T>
struct NormState {
    BasicTensor<T> mean;     // N x 1
    BasicTensor<T> variance; // N x 1
};

template <std::floating_point T>
struct Normalized {
    BasicTensor<T> values;
    NormState<T> state;
};

/// Stand-alone components, each evaluated as its own small graph. Chaining
/// them reproduces the monolithic forward graph bit for bit.
template <std::floating_point T>
Normalized<T> instance_normalize(const BasicTensor<T>& x, const BasicTensor<T>& psi, const BasicTensor<T>& beta,
                                 double epsilon);
/// Throws NumericError when any |psi| < 1e-8.
template <std::floating_point T>
BasicTensor<T> instance_denormalize(const BasicTensor<T>& fused, const NormState<T>& state, const BasicTensor<T>& psi,
                                    const BasicTensor<T>& beta, double epsilon);
template <std::floating_point T>
BasicTensor<T> attention_weights(const GraphMLPConfig& cfg, const BasicTensor<T>& normalized,
                                 const ParamMap<T>& params);
AdjacencyMatrix dynamic_attention(const GraphMLPConfig& cfg, const Tensor& normalized, const ParamMap<double>& params);
template <std::floating_point T>
BasicTensor<T> graph_convolve(const BasicTensor<T>& normalized, const BasicTensor<T>& attention);
template <std::floating_point T>
BasicTensor<T> spatial_head(const GraphMLPConfig& cfg, const BasicTensor<T>& convolved, const ParamMap<T>& params);
template <std::floating_point T>
BasicTensor<T> temporal_mlp(const GraphMLPConfig& cfg, const BasicTensor<T>& normalized, const ParamMap<T>& params);
template <std::floating_point T>
BasicTensor<T> gate_fuse(const BasicTensor<T>& spatial, const BasicTensor<T>& temporal, const BasicTensor<T>& gate);

/// normalize -> {attention -> convolution -> head, temporal MLP} -> gate -> denormalize,
/// composed from the stand-alone components above.
template <std::floating_point T>
BasicTensor<T> forward(const GraphMLPConfig& cfg, const BasicTensor<T>& input, const ParamMap<T>& params);

/// Trained model artifact.
struct ModelParams {
    std::string model = "graphmlp";
    /// Architecture settings; for other models only nodes/window/horizon apply.
    GraphMLPConfig config;
    ParamMap<float> values;
    std::uint64_t seed = 0;
};

/// Binary container: "LCKP", u32 version, u64 header length, JSON header,
/// then float32 little-endian arrays in header order.
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);
std::string encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::string_view bytes);

} // namespace lanecast
