#include "lanecast/baselines.hpp"

#include "lanecast/errors.hpp"

namespace lanecast {

std::string_view baseline_name(BaselineKind kind) {
    switch (kind) {
    case BaselineKind::Persistence: return "persistence";
    case BaselineKind::HistoricalAverage: return "havg";
    case BaselineKind::PerNodeLinear: return "linear";
    }
    return "unknown";
}

std::optional<BaselineKind> parse_baseline(std::string_view name) {
    if (name == "persistence") return BaselineKind::Persistence;
    if (name == "havg" || name == "historical_average") return BaselineKind::HistoricalAverage;
    if (name == "linear" || name == "per_node_linear") return BaselineKind::PerNodeLinear;
    return std::nullopt;
}

Tensor persistence_forecast(const Tensor& input, std::size_t horizon) {
    if (input.rank() != 2) throw ShapeError("persistence expects an N x T input");
    if (horizon == 0) throw std::invalid_argument("horizon must be positive");
    const std::size_t n = input.shape()[0], t = input.shape()[1];
    std::vector<double> out(n * horizon);
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t h = 0; h < horizon; ++h) out[u * horizon + h] = input.at(u, t - 1);
    return Tensor({n, horizon}, std::move(out));
}

HistoricalAverage::HistoricalAverage(const TimeSeriesPanel& train)
    : nodes_(train.nodes()), slots_(0), interval_(train.interval_seconds) {
    if (interval_ <= 0 || 86400 % interval_ != 0) throw DataError("interval must divide one day");
    slots_ = static_cast<std::size_t>(86400 / interval_);
    if (train.length() < 2 * slots_) throw DataError("historical average needs at least two days of training data");
    if (!train.fully_observed()) throw DataError("historical average needs a fully observed panel");
    mean_.assign(slots_ * nodes_, 0.0);
    std::vector<std::size_t> count(slots_, 0);
    for (std::size_t r = 0; r < train.length(); ++r) {
        const std::size_t s = slot_of(train.time_at(r));
        ++count[s];
        for (std::size_t u = 0; u < nodes_; ++u) mean_[s * nodes_ + u] += train.value(r, u);
    }
    for (std::size_t s = 0; s < slots_; ++s)
        for (std::size_t u = 0; u < nodes_; ++u) mean_[s * nodes_ + u] /= static_cast<double>(count[s]);
}

std::size_t HistoricalAverage::slot_of(Timestamp t) const {
    Timestamp sec = t % 86400;
    if (sec < 0) sec += 86400;
    return static_cast<std::size_t>(sec / interval_);
}

Tensor HistoricalAverage::forecast(Timestamp first_target, std::size_t horizon) const {
    std::vector<double> out(nodes_ * horizon);
    for (std::size_t h = 0; h < horizon; ++h) {
        const std::size_t s = slot_of(first_target + static_cast<Timestamp>(h) * interval_);
        for (std::size_t u = 0; u < nodes_; ++u) out[u * horizon + h] = mean_[s * nodes_ + u];
    }
    return Tensor({nodes_, horizon}, std::move(out));
}

Tensor HistoricalAverage::forecast(const SampleSet& samples) const {
    const std::size_t z = samples.horizon();
    std::vector<double> out;
    out.reserve(samples.size() * nodes_ * z);
    for (Timestamp t : samples.target_times) {
        const Tensor f = forecast(t, z);
        out.insert(out.end(), f.values().begin(), f.values().end());
    }
    return Tensor({samples.size(), nodes_, z}, std::move(out));
}

PerNodeLinear::PerNodeLinear(std::size_t nodes, std::size_t window, std::size_t horizon,
                             std::vector<bool> persistence_nodes)
    : nodes_(nodes), window_(window), horizon_(horizon), persistence_(std::move(persistence_nodes)) {
    if (nodes_ == 0 || window_ == 0 || horizon_ == 0) throw std::invalid_argument("linear model needs N, T, z >= 1");
    if (persistence_.empty()) persistence_.assign(nodes_, false);
    if (persistence_.size() != nodes_) throw std::invalid_argument("persistence flags must have one entry per node");
}

ParamMap<float> PerNodeLinear::initial_parameters(std::uint64_t) const {
    ParamMap<float> out;
    out.emplace("linear.w", TensorF::zeros({nodes_ * window_, horizon_}));
    out.emplace("linear.b", TensorF::zeros({nodes_, horizon_}));
    return out;
}

template <std::floating_point T>
NodeId PerNodeLinear::build_impl(Graph<T>& g, NodeId input) const {
    if (g.shape(input) != Shape{nodes_, window_}) throw ShapeError("linear model input has the wrong shape");
    const NodeId w = g.leaf("linear.w", {nodes_ * window_, horizon_});
    const NodeId b = g.leaf("linear.b", {nodes_, horizon_});
    const NodeId ones = g.constant(BasicTensor<T>::full({1, horizon_}, T(1)));
    std::vector<NodeId> rows;
    rows.reserve(nodes_);
    for (std::size_t u = 0; u < nodes_; ++u) {
        const NodeId x = g.slice_rows(input, u, u + 1);
        if (persistence_[u]) {
            rows.push_back(g.mul(g.slice_cols(x, window_ - 1, window_), ones));
        } else {
            const NodeId wu = g.slice_rows(w, u * window_, (u + 1) * window_);
            rows.push_back(g.add(g.matmul(x, wu), g.slice_rows(b, u, u + 1)));
        }
    }
    return nodes_ == 1 ? rows.front() : g.concat_rows(rows);
}

NodeId PerNodeLinear::build(Graph<float>& graph, NodeId input) const { return build_impl(graph, input); }
NodeId PerNodeLinear::build(Graph<double>& graph, NodeId input) const { return build_impl(graph, input); }

std::vector<bool> constant_columns(const TimeSeriesPanel& train) {
    std::vector<bool> out(train.nodes(), true);
    for (std::size_t u = 0; u < train.nodes(); ++u)
        for (std::size_t r = 1; r < train.length() && out[u]; ++r)
            if (train.value(r, u) != train.value(0, u)) out[u] = false;
    return out;
}

} // namespace lanecast
