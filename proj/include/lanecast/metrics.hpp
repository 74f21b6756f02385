#pragma once

#include "lanecast/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace lanecast {

inline constexpr double kDefaultMapeFloor = 1e-3;

struct ErrorMetrics {
    double mae = 0.0;
    /// Root of the mean square over every entry.
    double rmse = 0.0;
    /// Fraction, not percent. Absent when every |truth| is below the floor.
    std::optional<double> mape;
};

/// Errors of `pred` against `truth` (equal shapes, usually S x N x z). MAPE
/// skips entries with |truth| < mape_floor.
ErrorMetrics compute_metrics(const Tensor& pred, const Tensor& truth, double mape_floor = kDefaultMapeFloor);

/// Mean seconds per iteration times 100. Needs at least 10 timings.
double cost_metric(std::span<const double> seconds_per_iteration);

/// (mae_irregular - mae_regular) / mae_irregular. Negative when the irregular
/// network is forecast better.
double difference_metric(double mae_irregular, double mae_regular);

/// One evaluated (dataset, model, horizon, seed) cell. A missing seed marks
/// the mean row of a cell; a non-empty error marks a failed cell.
struct MetricsReport {
    std::string dataset;
    std::string model;
    std::size_t horizon = 0;
    std::optional<std::uint64_t> seed;
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> mape;
    std::optional<double> cost;
    std::string error;

    bool ok() const noexcept { return error.empty(); }
    bool operator==(const MetricsReport&) const = default;
};

/// Mean over the successful seed rows of every (dataset, model, horizon)
/// group, in first-appearance order. MAPE and Cost are averaged only when
/// every contributing row has them.
std::vector<MetricsReport> mean_rows(const std::vector<MetricsReport>& rows);

/// Header: dataset,model,horizon,seed,mae,rmse,mape,cost,status. Absent
/// values are empty cells; the mean row has seed "mean". Numbers round-trip.
void write_reports_csv(std::ostream& out, const std::vector<MetricsReport>& rows);
std::vector<MetricsReport> read_reports_csv(std::istream& in);

nlohmann::json reports_to_json(const std::vector<MetricsReport>& rows);
std::vector<MetricsReport> reports_from_json(const nlohmann::json& j);

/// Wide table with one row per (dataset, model) and MAE, RMSE, MAPE (%) and
/// Cost columns per horizon, built from mean rows (or the single seed row).
void write_table_csv(std::ostream& out, const std::vector<MetricsReport>& rows);

} // namespace lanecast
