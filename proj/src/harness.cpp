#include "lanecast/harness.hpp"

#include "lanecast/baselines.hpp"
#include "lanecast/errors.hpp"
#include "lanecast/serialization.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;

namespace lanecast {

std::string_view ablation_name(Ablation a) {
    switch (a) {
    case Ablation::None: return "full";
    case Ablation::InstanceNorm: return "no_instance_norm";
    case Ablation::DynamicGraph: return "no_dynamic_graph";
    case Ablation::TemporalMlp: return "no_temporal_mlp";
    }
    return "unknown";
}

std::optional<Ablation> parse_ablation(std::string_view name) {
    for (Ablation a : {Ablation::None, Ablation::InstanceNorm, Ablation::DynamicGraph, Ablation::TemporalMlp})
        if (ablation_name(a) == name) return a;
    if (name == "none") return Ablation::None;
    return std::nullopt;
}

GraphMLPConfig apply_ablation(GraphMLPConfig c, Ablation a) {
    c.instance_norm = a != Ablation::InstanceNorm;
    c.dynamic_graph = a != Ablation::DynamicGraph;
    c.temporal_mlp = a != Ablation::TemporalMlp;
    return c;
}

namespace {

const std::set<std::string> kModels{"graphmlp", "persistence", "havg", "linear"};

template <class F>
void each_key(const json& j, const char* what, F&& f) {
    if (!j.is_object()) throw ParseError(std::string(what) + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!f(key, value)) throw ParseError(std::string("unknown ") + what + " key '" + key + "'");
}

json synth_to_json(const SynthDataset& s) {
    json spec{{"days", s.spec.days},
              {"interval_minutes", s.spec.interval_minutes},
              {"seed", s.spec.seed},
              {"base", s.spec.base},
              {"amplitude", s.spec.amplitude},
              {"road_phase", s.spec.road_phase},
              {"lane_phase", s.spec.lane_phase},
              {"noise_std", s.spec.noise_std},
              {"noise_decay", s.spec.noise_decay},
              {"noise_ar", s.spec.noise_ar},
              {"unit", s.spec.unit == Unit::Speed ? "speed" : "volume"},
              {"start", format_iso8601(s.spec.start)}};
    spec["trend"] = s.spec.trend ? json{{"fraction", s.spec.trend->fraction}, {"rise", s.spec.trend->rise}} : json();
    return json{{"roads", s.roads}, {"lanes", s.lanes}, {"entrances", s.entrances}, {"spec", spec}};
}

SynthDataset synth_from_json(const json& j) {
    SynthDataset s;
    each_key(j, "synth", [&](const std::string& k, const json& v) {
        if (k == "roads") s.roads = v.get<std::size_t>();
        else if (k == "lanes") s.lanes = v.get<std::vector<std::size_t>>();
        else if (k == "entrances") s.entrances = v.get<std::vector<std::size_t>>();
        else if (k == "spec") {
            each_key(v, "synth spec", [&](const std::string& key, const json& x) {
                SynthSpec& p = s.spec;
                if (key == "days") p.days = x.get<std::size_t>();
                else if (key == "interval_minutes") p.interval_minutes = x.get<std::int64_t>();
                else if (key == "seed") p.seed = x.get<std::uint64_t>();
                else if (key == "base") p.base = x.get<double>();
                else if (key == "amplitude") p.amplitude = x.get<double>();
                else if (key == "road_phase") p.road_phase = x.get<double>();
                else if (key == "lane_phase") p.lane_phase = x.get<double>();
                else if (key == "noise_std") p.noise_std = x.get<double>();
                else if (key == "noise_decay") p.noise_decay = x.get<double>();
                else if (key == "noise_ar") p.noise_ar = x.get<double>();
                else if (key == "unit") {
                    const auto u = x.get<std::string>();
                    if (u != "speed" && u != "volume") throw ParseError("unit must be speed or volume");
                    p.unit = u == "speed" ? Unit::Speed : Unit::Volume;
                } else if (key == "start") {
                    const auto t = parse_iso8601(x.get<std::string>());
                    if (!t) throw ParseError("bad synth start time");
                    p.start = *t;
                } else if (key == "trend") {
                    if (x.is_null()) {
                        p.trend.reset();
                    } else {
                        SynthTrend t;
                        each_key(x, "trend", [&](const std::string& tk, const json& tv) {
                            if (tk == "fraction") t.fraction = tv.get<double>();
                            else if (tk == "rise") t.rise = tv.get<double>();
                            else return false;
                            return true;
                        });
                        p.trend = t;
                    }
                } else return false;
                return true;
            });
        } else return false;
        return true;
    });
    return s;
}

json train_to_json(const TrainConfig& c) {
    return json{{"initial_lr", c.initial_lr},
                {"max_epochs", c.max_epochs},
                {"max_steps", c.max_steps ? json(*c.max_steps) : json()},
                {"decay_start", c.decay_start},
                {"decay_every", c.decay_every},
                {"decay_factor", c.decay_factor},
                {"patience", c.patience},
                {"batch_size", c.batch_size},
                {"shuffle", c.shuffle},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"adam_epsilon", c.adam_epsilon},
                {"threads", c.threads}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    each_key(j, "train", [&](const std::string& k, const json& v) {
        if (k == "initial_lr") c.initial_lr = v.get<double>();
        else if (k == "max_epochs") c.max_epochs = v.get<std::size_t>();
        else if (k == "max_steps") c.max_steps = v.is_null() ? std::nullopt : std::optional(v.get<std::size_t>());
        else if (k == "decay_start") c.decay_start = v.get<std::size_t>();
        else if (k == "decay_every") c.decay_every = v.get<std::size_t>();
        else if (k == "decay_factor") c.decay_factor = v.get<double>();
        else if (k == "patience") c.patience = v.get<std::size_t>();
        else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
        else if (k == "shuffle") c.shuffle = v.get<bool>();
        else if (k == "beta1") c.beta1 = v.get<double>();
        else if (k == "beta2") c.beta2 = v.get<double>();
        else if (k == "adam_epsilon") c.adam_epsilon = v.get<double>();
        else if (k == "threads") c.threads = v.get<std::size_t>();
        else return false;
        return true;
    });
    return c;
}

} // namespace

void RunConfig::validate() const {
    if (dataset.has_value() == synth.has_value())
        throw std::invalid_argument("exactly one of a dataset file or a synthetic spec is required");
    if (dataset && !graph) throw std::invalid_argument("a dataset file needs a graph file");
    if (models.empty()) throw std::invalid_argument("no models selected");
    for (const auto& m : models)
        if (!kModels.contains(m)) throw std::invalid_argument("unknown model '" + m + "'");
    if (window == 0) throw std::invalid_argument("window must be positive");
    if (horizons.empty()) throw std::invalid_argument("no horizons selected");
    for (std::size_t h : horizons)
        if (h == 0) throw std::invalid_argument("horizons must be positive");
    if (seeds.empty()) throw std::invalid_argument("no seeds selected");
    if (!(mape_floor > 0.0)) throw std::invalid_argument("mape floor must be positive");
    if (out.empty()) throw std::invalid_argument("output directory is empty");
    train.validate();
}

void to_json(json& j, const RunConfig& c) {
    json arch;
    to_json(arch, c.graphmlp);
    // Set per cell from the data and the task.
    arch.erase("nodes");
    arch.erase("window");
    arch.erase("horizon");
    j = json{{"dataset", c.dataset ? json(*c.dataset) : json()},
             {"graph", c.graph ? json(*c.graph) : json()},
             {"synth", c.synth ? synth_to_json(*c.synth) : json()},
             {"dataset_id", c.dataset_id},
             {"models", c.models},
             {"graphmlp", arch},
             {"window", c.window},
             {"horizons", c.horizons},
             {"split", {c.split.train, c.split.validation, c.split.test}},
             {"train", train_to_json(c.train)},
             {"seeds", c.seeds},
             {"ablation", std::string(ablation_name(c.ablation))},
             {"deterministic", c.deterministic},
             {"mape_floor", c.mape_floor},
             {"out", c.out}};
}

void from_json(const json& j, RunConfig& c) {
    try {
        each_key(j, "config", [&](const std::string& k, const json& v) {
            if (k == "dataset") {
                c.dataset = v.is_null() ? std::nullopt : std::optional(v.get<std::string>());
                if (c.dataset && !j.contains("synth")) c.synth.reset();
            } else if (k == "graph") c.graph = v.is_null() ? std::nullopt : std::optional(v.get<std::string>());
            else if (k == "synth") c.synth = v.is_null() ? std::nullopt : std::optional(synth_from_json(v));
            else if (k == "dataset_id") c.dataset_id = v.get<std::string>();
            else if (k == "models") c.models = v.get<std::vector<std::string>>();
            else if (k == "graphmlp") from_json(v, c.graphmlp);
            else if (k == "window") c.window = v.get<std::size_t>();
            else if (k == "horizons") c.horizons = v.get<std::vector<std::size_t>>();
            else if (k == "split") {
                const auto r = v.get<std::vector<double>>();
                if (r.size() != 3) throw ParseError("split needs three ratios");
                c.split = {r[0], r[1], r[2]};
            } else if (k == "train") c.train = train_from_json(v);
            else if (k == "seeds") c.seeds = v.get<std::vector<std::uint64_t>>();
            else if (k == "ablation") {
                const auto a = parse_ablation(v.get<std::string>());
                if (!a) throw ParseError("unknown ablation '" + v.get<std::string>() + "'");
                c.ablation = *a;
            } else if (k == "deterministic") c.deterministic = v.get<bool>();
            else if (k == "mape_floor") c.mape_floor = v.get<double>();
            else if (k == "out") c.out = v.get<std::string>();
            else return false;
            return true;
        });
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad config: ") + e.what());
    }
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("config '" + path + "' is not valid JSON: " + e.what());
    }
    RunConfig c;
    from_json(j.is_object() && j.contains("config") ? j.at("config") : j, c);
    return c;
}

LoadedDataset load_dataset(const RunConfig& config) {
    LoadedDataset d;
    if (config.dataset) {
        if (!config.graph) throw std::invalid_argument("a dataset file needs a graph file");
        d.network = std::make_shared<const LaneNetwork>(read_graph_file(*config.graph));
        TimeSeriesPanel raw = load_csv(*config.dataset, d.network);
        for (std::uint8_t m : raw.mask) d.imputed += m ? 0 : 1;
        d.panel = d.imputed ? impute_adjacent_mean(raw) : std::move(raw);
        d.id = config.dataset_id.empty() ? fs::path(*config.dataset).stem().string() : config.dataset_id;
    } else if (config.synth) {
        const SynthDataset& s = *config.synth;
        d.network = std::make_shared<const LaneNetwork>(build_grid_network(s.roads, s.lanes, s.entrances));
        d.panel = synth_generate(d.network, s.spec);
        d.id = !config.dataset_id.empty() ? config.dataset_id : s.entrances.empty() ? "synth" : "synth_irregular";
    } else {
        throw std::invalid_argument("no dataset configured");
    }
    return d;
}

std::string CellSpec::label() const {
    if (model != "graphmlp" || ablation == Ablation::None) return model;
    return model + "_" + std::string(ablation_name(ablation));
}

std::string CellSpec::stem(const std::string& dataset) const {
    return dataset + "_" + label() + "_T" + std::to_string(window) + "_h" + std::to_string(horizon) + "_s" +
           std::to_string(seed);
}

CellResult run_cell(const RunConfig& config, const LoadedDataset& data, const CellSpec& cell) {
    if (!kModels.contains(cell.model)) throw std::invalid_argument("unknown model '" + cell.model + "'");
    const ForecastTask task{cell.window, cell.horizon, 1};
    const PanelSplit parts = split(data.panel, config.split, task.window + task.horizon);
    const SampleSet test = make_windows(parts.test, task);
    const std::size_t n = data.panel.nodes();

    CellResult res;
    res.report.dataset = data.id;
    res.report.model = cell.label();
    res.report.horizon = cell.horizon;
    res.report.seed = cell.seed;

    if (cell.model == "persistence") {
        std::vector<double> out;
        out.reserve(test.size() * n * task.horizon);
        for (std::size_t k = 0; k < test.size(); ++k) {
            const Tensor f = persistence_forecast(test.input(k), task.horizon);
            out.insert(out.end(), f.values().begin(), f.values().end());
        }
        res.predictions = Tensor({test.size(), n, task.horizon}, std::move(out));
    } else if (cell.model == "havg") {
        res.predictions = HistoricalAverage(parts.train).forecast(test);
    } else {
        GraphMLPConfig arch = config.graphmlp;
        arch.nodes = n;
        arch.window = task.window;
        arch.horizon = task.horizon;
        std::unique_ptr<TrainableModel> model;
        if (cell.model == "graphmlp") {
            arch = apply_ablation(arch, cell.ablation);
            model = std::make_unique<GraphMLP>(arch);
        } else {
            model = std::make_unique<PerNodeLinear>(n, task.window, task.horizon, constant_columns(parts.train));
        }
        TrainConfig tc = config.train;
        tc.seed = cell.seed;
        tc.deterministic = tc.deterministic || config.deterministic;
        const SampleSet train_set = make_windows(parts.train, task);
        const SampleSet val_set = make_windows(parts.validation, task);

        const auto t0 = std::chrono::steady_clock::now();
        TrainResult tr = train(*model, train_set, val_set, tc, model->initial_parameters(cell.seed));
        res.train_wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        res.predictions = predict_all(*model, tr.params, test);
        const auto timed = tr.record.timed_iterations();
        if (timed.size() >= 10) res.report.cost = cost_metric(timed);
        res.checkpoint = ModelParams{cell.model, arch, std::move(tr.params), cell.seed};
        res.record = std::move(tr.record);
    }

    const ErrorMetrics m = compute_metrics(res.predictions, test.targets, config.mape_floor);
    res.report.mae = m.mae;
    res.report.rmse = m.rmse;
    res.report.mape = m.mape;
    return res;
}

namespace {

void ensure_dirs(const RunConfig& config) {
    fs::create_directories(fs::path(config.out) / "logs");
    fs::create_directories(fs::path(config.out) / "checkpoints");
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    return out;
}

CommandResult run_cells(const RunConfig& config, const LoadedDataset& data, const std::vector<CellSpec>& cells,
                        std::ostream& log) {
    CommandResult result;
    const fs::path root(config.out);
    for (const CellSpec& cell : cells) {
        log << "[cell] " << cell.stem(data.id) << " ... " << std::flush;
        try {
            CellResult r = run_cell(config, data, cell);
            if (r.record) {
                auto out = open_out(root / "logs" / (cell.stem(data.id) + ".jsonl"));
                write_train_log(out, *r.record);
            }
            if (r.checkpoint) save_checkpoint((root / "checkpoints" / (cell.stem(data.id) + ".lckp")).string(), *r.checkpoint);
            log << "mae " << r.report.mae << " rmse " << r.report.rmse;
            if (r.report.cost) log << " cost " << *r.report.cost;
            if (r.record) log << " (" << r.record->steps << " steps, " << r.record->stop_reason << ")";
            log << '\n';
            result.rows.push_back(std::move(r.report));
        } catch (const std::exception& e) {
            log << "FAILED: " << e.what() << '\n';
            MetricsReport failed;
            failed.dataset = data.id;
            failed.model = cell.label();
            failed.horizon = cell.horizon;
            failed.seed = cell.seed;
            failed.error = e.what();
            if (failed.error.empty()) failed.error = "failed";
            result.rows.push_back(std::move(failed));
            result.all_ok = false;
        }
    }
    for (auto& m : mean_rows(result.rows)) result.rows.push_back(std::move(m));
    return result;
}

void write_report_files(const RunConfig& config, const std::vector<MetricsReport>& rows) {
    const fs::path root(config.out);
    {
        auto out = open_out(root / "metrics.csv");
        write_reports_csv(out, rows);
    }
    {
        auto out = open_out(root / "metrics.json");
        out << reports_to_json(rows).dump(2) << '\n';
    }
    auto out = open_out(root / "table.csv");
    write_table_csv(out, rows);
}

std::vector<CellSpec> cells_for(const RunConfig& config, const std::vector<std::string>& models,
                                const std::vector<Ablation>& variants) {
    std::vector<CellSpec> cells;
    for (const auto& model : models)
        for (Ablation a : variants)
            for (std::size_t h : config.horizons)
                for (std::uint64_t seed : config.seeds) cells.push_back({model, config.window, h, seed, a});
    return cells;
}

} // namespace

void write_manifest(const RunConfig& config, const std::string& command) {
    fs::create_directories(config.out);
    json j{{"tool", "lanecast"}, {"command", command}, {"config", config}, {"seeds", config.seeds}};
    auto out = open_out(fs::path(config.out) / "manifest.json");
    out << j.dump(2) << '\n';
}

void run_generate(const RunConfig& config, std::ostream& log) {
    if (!config.synth) throw std::invalid_argument("generate needs a synthetic spec");
    config.validate();
    const LoadedDataset data = load_dataset(config);
    write_manifest(config, "generate");
    const fs::path root(config.out);
    save_csv((root / "panel.csv").string(), data.panel);
    write_graph_file((root / "graph.txt").string(), *data.network);
    log << "wrote " << data.panel.length() << " rows x " << data.panel.nodes() << " lanes to "
        << (root / "panel.csv").string() << '\n';
}

CommandResult run_benchmark(const RunConfig& config, std::ostream& log) {
    config.validate();
    ensure_dirs(config);
    write_manifest(config, "benchmark");
    const LoadedDataset data = load_dataset(config);
    if (data.imputed) log << "imputed " << data.imputed << " missing readings\n";
    CommandResult r = run_cells(config, data, cells_for(config, config.models, {config.ablation}), log);
    write_report_files(config, r.rows);
    return r;
}

CommandResult run_longhorizon(const RunConfig& base, std::ostream& log) {
    RunConfig config = base;
    config.window = kLongWindow;
    config.horizons.assign(kLongHorizons.begin(), kLongHorizons.end());
    config.validate();
    ensure_dirs(config);
    write_manifest(config, "longhorizon");
    const LoadedDataset data = load_dataset(config);
    const std::size_t need = kLongWindow + kLongHorizons.back();
    const PanelSplit parts = split(data.panel, config.split, 1);
    if (parts.test.length() < need || parts.validation.length() < need || parts.train.length() < need)
        throw DataError("panel too short for T = 50 and z = 36 in every split");
    CommandResult r = run_cells(config, data, cells_for(config, config.models, {config.ablation}), log);
    write_report_files(config, r.rows);
    auto out = open_out(fs::path(config.out) / "longhorizon.csv");
    out << "dataset,model,horizon,seed,mae,rmse\n";
    for (const auto& row : r.rows) {
        if (!row.ok()) continue;
        out << row.dataset << ',' << row.model << ',' << row.horizon << ','
            << (row.seed ? std::to_string(*row.seed) : std::string("mean")) << ',' << json(row.mae).dump() << ','
            << json(row.rmse).dump() << '\n';
    }
    return r;
}

CommandResult run_ablation(const RunConfig& base, std::ostream& log) {
    RunConfig config = base;
    if (config.models != std::vector<std::string>{"graphmlp"})
        throw std::invalid_argument("ablate runs GraphMLP only");
    config.ablation = Ablation::None;
    config.validate();
    ensure_dirs(config);
    write_manifest(config, "ablate");
    const LoadedDataset data = load_dataset(config);
    const std::vector<Ablation> variants{Ablation::None, Ablation::InstanceNorm, Ablation::DynamicGraph,
                                         Ablation::TemporalMlp};
    CommandResult r = run_cells(config, data, cells_for(config, config.models, variants), log);
    write_report_files(config, r.rows);
    auto out = open_out(fs::path(config.out) / "ablation.csv");
    write_reports_csv(out, r.rows);
    return r;
}

void run_report(const std::string& dir, std::ostream& out) {
    const fs::path root(dir);
    std::ifstream in(root / "metrics.csv");
    if (!in) throw std::runtime_error("cannot open '" + (root / "metrics.csv").string() + "'");
    std::vector<MetricsReport> rows = read_reports_csv(in);
    // Stored files may predate mean rows; recompute them when absent.
    if (std::none_of(rows.begin(), rows.end(), [](const MetricsReport& r) { return !r.seed; }))
        for (auto& m : mean_rows(rows)) rows.push_back(std::move(m));
    {
        auto table = open_out(root / "table.csv");
        write_table_csv(table, rows);
    }
    {
        auto j = open_out(root / "metrics.json");
        j << reports_to_json(rows).dump(2) << '\n';
    }
    write_table_csv(out, rows);
}

} // namespace lanecast
