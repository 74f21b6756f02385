#pragma once

// Benchmark harness behind the command-line tool: dataset loading, one
// trained and evaluated cell per (model, horizon, seed), and the report files
// of each subcommand.

#include "lanecast/data.hpp"
#include "lanecast/lane_network.hpp"
#include "lanecast/metrics.hpp"
#include "lanecast/model.hpp"
#include "lanecast/training.hpp"

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace lanecast {

enum class Ablation { None, InstanceNorm, DynamicGraph, TemporalMlp };

/// "full", "no_instance_norm", "no_dynamic_graph", "no_temporal_mlp".
std::string_view ablation_name(Ablation a);
std::optional<Ablation> parse_ablation(std::string_view name);

/// GraphMLP settings with at most one branch removed.
GraphMLPConfig apply_ablation(GraphMLPConfig config, Ablation a);

struct SynthDataset {
    std::size_t roads = 2;
    std::vector<std::size_t> lanes{4, 4};
    /// 1-based roads that gain an entrance lane.
    std::vector<std::size_t> entrances;
    SynthSpec spec;
};

inline constexpr std::array<std::size_t, 7> kLongHorizons{3, 6, 12, 18, 24, 30, 36};
inline constexpr std::size_t kLongWindow = 50;

struct RunConfig {
    /// Exactly one of a CSV dataset (with its graph file) or a synthetic spec.
    std::optional<std::string> dataset;
    std::optional<std::string> graph;
    std::optional<SynthDataset> synth = SynthDataset{};
    /// Label used in reports; derived from the dataset when empty.
    std::string dataset_id;
    std::vector<std::string> models{"graphmlp"};
    /// Architecture of GraphMLP cells; nodes, window and horizon are set per cell.
    GraphMLPConfig graphmlp;
    std::size_t window = 12;
    std::vector<std::size_t> horizons{3, 6, 12};
    SplitRatios split;
    TrainConfig train;
    std::vector<std::uint64_t> seeds{1};
    Ablation ablation = Ablation::None;
    bool deterministic = false;
    double mape_floor = kDefaultMapeFloor;
    std::string out = "runs/latest";

    /// Throws std::invalid_argument.
    void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep defaults; unknown keys are rejected with ParseError.
void from_json(const nlohmann::json& j, RunConfig& c);

/// Reads a config document or a run manifest (whose "config" member is used).
RunConfig load_run_config(const std::string& path);

struct LoadedDataset {
    std::string id;
    std::shared_ptr<const LaneNetwork> network;
    /// Fully observed (imputed when the source had gaps).
    TimeSeriesPanel panel;
    std::size_t imputed = 0;
};

LoadedDataset load_dataset(const RunConfig& config);

struct CellSpec {
    std::string model;
    std::size_t window = 12;
    std::size_t horizon = 3;
    std::uint64_t seed = 1;
    Ablation ablation = Ablation::None;

    /// Report label: the model name, with the ablation appended for GraphMLP.
    std::string label() const;
    /// File stem for logs and checkpoints.
    std::string stem(const std::string& dataset) const;
};

struct CellResult {
    MetricsReport report;
    /// Trained models only.
    std::optional<TrainRecord> record;
    std::optional<ModelParams> checkpoint;
    /// Wall-clock seconds of the whole training call, validation included.
    double train_wall_seconds = 0.0;
    /// Test-split predictions, S x N x z.
    Tensor predictions;
};

/// Trains (when the model is trainable) and evaluates one cell on the test
/// split. Throws on any failure.
CellResult run_cell(const RunConfig& config, const LoadedDataset& data, const CellSpec& cell);

struct CommandResult {
    /// Seed rows followed by mean rows.
    std::vector<MetricsReport> rows;
    bool all_ok = true;
};

/// Writes the panel CSV and graph file of the synthetic spec to config.out.
void run_generate(const RunConfig& config, std::ostream& log);
/// Every (model, horizon, seed) cell; writes metrics.csv, metrics.json,
/// table.csv, logs/ and checkpoints/.
CommandResult run_benchmark(const RunConfig& config, std::ostream& log);
/// Horizons 3..36 with T = 50; writes longhorizon.csv plus the benchmark files.
CommandResult run_longhorizon(const RunConfig& config, std::ostream& log);
/// GraphMLP with each branch removed in turn; writes ablation.csv plus the
/// benchmark files.
CommandResult run_ablation(const RunConfig& config, std::ostream& log);
/// Re-renders table.csv and metrics.json from the stored metrics.csv.
void run_report(const std::string& dir, std::ostream& out);

/// manifest.json: command, resolved config and seeds.
void write_manifest(const RunConfig& config, const std::string& command);

} // namespace lanecast
