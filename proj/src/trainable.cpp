#include "lanecast/trainable.hpp"

#include "lanecast/errors.hpp"

namespace lanecast {

template <std::floating_point T>
NodeId build_mse(Graph<T>& graph, NodeId prediction, NodeId target) {
    if (graph.shape(prediction) != graph.shape(target)) {
        throw ShapeError("mse: prediction " + shape_string(graph.shape(prediction)) + " vs target " +
                         shape_string(graph.shape(target)));
    }
    const double nodes = static_cast<double>(graph.shape(prediction)[0]);
    const NodeId loss = graph.scale(graph.sum(graph.square(graph.sub(target, prediction))), 1.0 / nodes);
    graph.set_label(loss, "loss");
    return loss;
}

template <std::floating_point T>
LossGraph<T> build_loss_graph(const TrainableModel& model) {
    LossGraph<T> out;
    out.input = out.graph.leaf(kInputLeaf, {model.nodes(), model.window()});
    out.prediction = model.build(out.graph, out.input);
    out.target = out.graph.leaf(kTargetLeaf, {model.nodes(), model.horizon()});
    out.loss = build_mse(out.graph, out.prediction, out.target);
    return out;
}

template <std::floating_point T>
Predictor<T>::Predictor(const TrainableModel& model) {
    const NodeId input = graph_.leaf(kInputLeaf, {model.nodes(), model.window()});
    prediction_ = model.build(graph_, input);
}

template <std::floating_point T>
BasicTensor<T> Predictor<T>::operator()(const ParamMap<T>& params, const BasicTensor<T>& input) const {
    Bindings<T> bindings;
    for (const auto& [name, value] : params) bindings.emplace(name, value);
    bindings.insert_or_assign(kInputLeaf, input);
    return graph_.evaluate(bindings, prediction_).value(prediction_);
}

template NodeId build_mse<float>(Graph<float>&, NodeId, NodeId);
template NodeId build_mse<double>(Graph<double>&, NodeId, NodeId);
template LossGraph<float> build_loss_graph<float>(const TrainableModel&);
template LossGraph<double> build_loss_graph<double>(const TrainableModel&);
template class Predictor<float>;
template class Predictor<double>;

} // namespace lanecast
