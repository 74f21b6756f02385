#pragma once

#include "lanecast/data.hpp"
#include "lanecast/trainable.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace lanecast {

enum class BaselineKind { Persistence, HistoricalAverage, PerNodeLinear };

std::string_view baseline_name(BaselineKind kind);
std::optional<BaselineKind> parse_baseline(std::string_view name);

/// Repeats the last observed value of every node z times.
Tensor persistence_forecast(const Tensor& input, std::size_t horizon);

/// Mean value per node and time-of-day slot over a training panel.
class HistoricalAverage {
public:
    /// Throws DataError when the panel spans less than two days or the
    /// interval does not divide a day.
    explicit HistoricalAverage(const TimeSeriesPanel& train);

    std::size_t slots() const noexcept { return slots_; }
    std::size_t slot_of(Timestamp t) const;
    /// N x z forecast for the z instants starting at `first_target`.
    Tensor forecast(Timestamp first_target, std::size_t horizon) const;
    /// S x N x z forecasts for every sample of a set.
    Tensor forecast(const SampleSet& samples) const;

private:
    std::size_t nodes_;
    std::size_t slots_;
    std::int64_t interval_;
    std::vector<double> mean_; // slot-major, slots x N
};

/// Independent least-squares map R^T -> R^z per node, trained by the shared
/// optimizer. Parameters: "linear.w" [N*T, z] (rows u*T..u*T+T-1 belong to
/// node u) and "linear.b" [N, z]. Nodes flagged constant forecast by
/// persistence instead.
class PerNodeLinear final : public TrainableModel {
public:
    PerNodeLinear(std::size_t nodes, std::size_t window, std::size_t horizon,
                  std::vector<bool> persistence_nodes = {});

    std::string name() const override { return "linear"; }
    std::size_t nodes() const override { return nodes_; }
    std::size_t window() const override { return window_; }
    std::size_t horizon() const override { return horizon_; }
    const std::vector<bool>& persistence_nodes() const noexcept { return persistence_; }

    /// Zero weights and biases.
    ParamMap<float> initial_parameters(std::uint64_t seed) const override;
    NodeId build(Graph<float>& graph, NodeId input) const override;
    NodeId build(Graph<double>& graph, NodeId input) const override;

private:
    template <std::floating_point T>
    NodeId build_impl(Graph<T>& graph, NodeId input) const;

    std::size_t nodes_;
    std::size_t window_;
    std::size_t horizon_;
    std::vector<bool> persistence_;
};

/// Nodes whose training column never changes.
std::vector<bool> constant_columns(const TimeSeriesPanel& train);

} // namespace lanecast
