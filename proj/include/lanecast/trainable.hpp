#pragma once

#include "lanecast/graph.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace lanecast {

/// Named parameter arrays. Ordered by name so iteration is deterministic.
template <std::floating_point T>
using ParamMap = std::map<std::string, BasicTensor<T>>;

template <std::floating_point U, std::floating_point T>
ParamMap<U> cast_params(const ParamMap<T>& params) {
    ParamMap<U> out;
    for (const auto& [name, value] : params) out.emplace(name, value.template cast<U>());
    return out;
}

/// Leaf names every model graph uses for its per-sample input and target.
inline constexpr const char* kInputLeaf = "input";
inline constexpr const char* kTargetLeaf = "target";

/// A forecaster expressible as a computation graph mapping an N x T input to
/// an N x z prediction. Every other leaf it declares is a parameter.
class TrainableModel {
public:
    virtual ~TrainableModel() = default;

    virtual std::string name() const = 0;
    virtual std::size_t nodes() const = 0;
    virtual std::size_t window() const = 0;
    virtual std::size_t horizon() const = 0;

    virtual ParamMap<float> initial_parameters(std::uint64_t seed) const = 0;
    virtual NodeId build(Graph<float>& graph, NodeId input) const = 0;
    virtual NodeId build(Graph<double>& graph, NodeId input) const = 0;
    /// Throws if `params` cannot be used for a forward pass.
    virtual void validate(const ParamMap<float>& params) const { (void)params; }
};

/// (1/N) * sum over nodes and steps of (target - prediction)^2.
template <std::floating_point T>
NodeId build_mse(Graph<T>& graph, NodeId prediction, NodeId target);

/// A ready-to-run loss graph around a model.
template <std::floating_point T>
struct LossGraph {
    Graph<T> graph;
    NodeId input;
    NodeId target;
    NodeId prediction;
    NodeId loss;
};

template <std::floating_point T>
LossGraph<T> build_loss_graph(const TrainableModel& model);

/// Prediction-only graph of a model, reusable across inputs.
template <std::floating_point T>
class Predictor {
public:
    explicit Predictor(const TrainableModel& model);
    /// N x z prediction for one N x T input.
    BasicTensor<T> operator()(const ParamMap<T>& params, const BasicTensor<T>& input) const;

private:
    Graph<T> graph_;
    NodeId prediction_;
};

extern template class Predictor<float>;
extern template class Predictor<double>;

} // namespace lanecast
