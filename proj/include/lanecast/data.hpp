#pragma once

#include "lanecast/lane_network.hpp"
#include "lanecast/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lanecast {

enum class Unit { Speed, Volume };

/// Seconds since 1970-01-01T00:00:00 (UTC, no leap seconds).
using Timestamp = std::int64_t;

/// Accepts "YYYY-MM-DDTHH:MM[:SS]" with 'T' or ' ' as separator and an
/// optional trailing 'Z'.
std::optional<Timestamp> parse_iso8601(std::string_view text);
std::string format_iso8601(Timestamp t);

/// L x N observations of one lane network at equally spaced instants.
/// values and mask are row-major by time; column n is segment id n.
struct TimeSeriesPanel {
    std::shared_ptr<const LaneNetwork> network;
    Timestamp start = 0;
    std::int64_t interval_seconds = 300;
    std::vector<double> values;
    std::vector<std::uint8_t> mask; // 1 = observed
    Unit unit = Unit::Speed;

    std::size_t length() const noexcept { return network ? values.size() / network->size() : 0; }
    std::size_t nodes() const noexcept { return network ? network->size() : 0; }
    double value(std::size_t row, std::size_t node) const { return values[row * nodes() + node]; }
    bool observed(std::size_t row, std::size_t node) const { return mask[row * nodes() + node] != 0; }
    Timestamp time_at(std::size_t row) const {
        return start + static_cast<Timestamp>(row) * interval_seconds;
    }
    bool fully_observed() const;
    /// Rows [begin, end) as a new panel on the same network.
    TimeSeriesPanel rows(std::size_t begin, std::size_t end) const;
};

bool operator==(const TimeSeriesPanel& a, const TimeSeriesPanel& b);

/// Reads the `timestamp,<road>_<lane>,...` schema. Columns may appear in any
/// order but must be exactly the network's segments; empty cells are missing.
TimeSeriesPanel read_csv(std::istream& in, std::shared_ptr<const LaneNetwork> network);
TimeSeriesPanel load_csv(const std::string& path, std::shared_ptr<const LaneNetwork> network);
/// Writes columns in segment-id order with shortest round-trip formatting.
void write_csv(std::ostream& out, const TimeSeriesPanel& panel);
void save_csv(const std::string& path, const TimeSeriesPanel& panel);

/// Fills each missing cell with the mean of the nearest observed values
/// before and after it in the same column, or the single available one at
/// the boundaries.
TimeSeriesPanel impute_adjacent_mean(const TimeSeriesPanel& panel);

struct SplitRatios {
    double train = 0.7;
    double validation = 0.1;
    double test = 0.2;
};

struct PanelSplit {
    TimeSeriesPanel train;
    TimeSeriesPanel validation;
    TimeSeriesPanel test;
};

/// Chronological partition; train and validation lengths are rounded to the
/// nearest row and test takes the remainder. Every part must have at least
/// `min_length` rows (pass T + z to guarantee one sample per split).
PanelSplit split(const TimeSeriesPanel& panel, SplitRatios ratios = {}, std::size_t min_length = 1);

struct ForecastTask {
    std::size_t window = 12;
    std::size_t horizon = 3;
    std::size_t stride = 1;
};

std::size_t window_count(std::size_t length, const ForecastTask& task);

/// inputs: S x N x T, targets: S x N x z, origins[s] = first input row.
struct SampleSet {
    Tensor inputs;
    Tensor targets;
    std::vector<std::size_t> origins;
    std::vector<Timestamp> target_times; // time of the first target row per sample
    std::size_t size() const noexcept { return origins.size(); }
    std::size_t nodes() const noexcept { return inputs.shape()[1]; }
    std::size_t window() const noexcept { return inputs.shape()[2]; }
    std::size_t horizon() const noexcept { return targets.shape()[2]; }
    /// Sample s as an N x T (or N x z) matrix.
    Tensor input(std::size_t s) const;
    Tensor target(std::size_t s) const;
};

/// Requires a fully observed panel (impute first).
SampleSet make_windows(const TimeSeriesPanel& panel, const ForecastTask& task);

struct SynthTrend {
    /// Fraction of the final rows carrying the trend.
    double fraction = 0.2;
    /// Value added by the last row; ramps linearly from 0 at the start of the region.
    double rise = 30.0;
};

struct SynthSpec {
    std::size_t days = 7;
    std::int64_t interval_minutes = 5;
    std::uint64_t seed = 1;
    double base = 60.0;
    double amplitude = 10.0;
    /// Phase offsets in radians per road index and per lane index.
    double road_phase = 0.3;
    double lane_phase = 0.15;
    double noise_std = 1.0;
    /// Spatial correlation of the noise between segments h hops apart is ~ decay^h.
    double noise_decay = 0.5;
    /// AR(1) coefficient of the noise in time, in [0, 1).
    double noise_ar = 0.0;
    std::optional<SynthTrend> trend;
    Unit unit = Unit::Speed;
    Timestamp start = 1486252800; // 2017-02-05T00:00:00
};

/// Daily sinusoid per lane with spatially correlated noise. Deterministic in
/// spec.seed.
TimeSeriesPanel synth_generate(std::shared_ptr<const LaneNetwork> network, const SynthSpec& spec);

} // namespace lanecast
