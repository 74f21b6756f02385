#include "lanecast/harness.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace lanecast;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lanecast_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

/// Small and fast: 4 days at 15 minutes over 2 x 2 lanes, tiny GraphMLP.
RunConfig small_config(const std::string& out) {
    RunConfig c;
    c.synth->roads = 2;
    c.synth->lanes = {2, 2};
    c.synth->spec.days = 4;
    c.synth->spec.interval_minutes = 15;
    c.graphmlp.hidden = 8;
    c.graphmlp.key_dim = 4;
    c.graphmlp.depth = 1;
    c.train.max_epochs = 2;
    c.deterministic = true;
    c.horizons = {3};
    c.out = out;
    return c;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LANECAST_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const MetricsReport& find_row(const std::vector<MetricsReport>& rows, const std::string& model, std::size_t h,
                              std::optional<std::uint64_t> seed) {
    for (const auto& r : rows)
        if (r.model == model && r.horizon == h && r.seed == seed) return r;
    throw std::runtime_error("row not found: " + model);
}

} // namespace

TEST(Config, JsonRoundTripAndUnknownKeys) {
    RunConfig c = small_config("x");
    c.seeds = {4, 9};
    c.train.max_steps = 17;
    c.synth->entrances = {2};
    c.synth->spec.trend = SynthTrend{0.3, 12.5};
    c.ablation = Ablation::DynamicGraph;
    const nlohmann::json j = c;
    RunConfig back;
    from_json(j, back);
    EXPECT_EQ(nlohmann::json(back), j);
    EXPECT_THROW(from_json(nlohmann::json{{"windw", 3}}, back), ParseError);
    EXPECT_THROW(from_json(nlohmann::json{{"train", {{"lr", 1}}}}, back), ParseError);
}

TEST(Config, Validation) {
    RunConfig c;
    EXPECT_NO_THROW(c.validate());
    c.dataset = "panel.csv";
    EXPECT_THROW(c.validate(), std::invalid_argument); // both dataset and synth
    c.synth.reset();
    EXPECT_THROW(c.validate(), std::invalid_argument); // graph missing
    c.graph = "graph.txt";
    EXPECT_NO_THROW(c.validate());
    c.models = {"lstm"};
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Ablation, SingleComponentRemoved) {
    const GraphMLPConfig base;
    EXPECT_FALSE(apply_ablation(base, Ablation::InstanceNorm).instance_norm);
    const GraphMLPConfig d = apply_ablation(base, Ablation::DynamicGraph);
    EXPECT_FALSE(d.dynamic_graph);
    EXPECT_TRUE(d.temporal_mlp && d.instance_norm);
    EXPECT_FALSE(apply_ablation(base, Ablation::TemporalMlp).temporal_mlp);
    const GraphMLPConfig full = apply_ablation(d, Ablation::None);
    EXPECT_TRUE(full.instance_norm && full.dynamic_graph && full.temporal_mlp);
    for (Ablation a : {Ablation::None, Ablation::InstanceNorm, Ablation::DynamicGraph, Ablation::TemporalMlp})
        EXPECT_EQ(parse_ablation(ablation_name(a)), a);
}

TEST(Generate, DeterministicAndSized) {
    const fs::path a = scratch("gen_a"), b = scratch("gen_b");
    RunConfig c;
    c.out = a.string();
    std::ostringstream log;
    run_generate(c, log);
    c.out = b.string();
    run_generate(c, log);
    EXPECT_EQ(slurp(a / "panel.csv"), slurp(b / "panel.csv"));
    EXPECT_EQ(slurp(a / "graph.txt"), slurp(b / "graph.txt"));
    const LoadedDataset d = load_dataset(c);
    EXPECT_EQ(d.panel.length(), 2016u);
    EXPECT_EQ(d.panel.nodes(), 8u);
}

TEST(Generate, IrregularAddsEntranceColumn) {
    const fs::path dir = scratch("gen_irregular");
    RunConfig c;
    c.synth->entrances = {2};
    c.synth->spec.days = 1;
    c.out = dir.string();
    std::ostringstream log;
    run_generate(c, log);
    EXPECT_EQ(first_line(dir / "panel.csv"), "timestamp,1_1,1_2,1_3,1_4,2_1,2_2,2_3,2_4,2_5");
    // The written files load back as a dataset.
    RunConfig back;
    back.synth.reset();
    back.dataset = (dir / "panel.csv").string();
    back.graph = (dir / "graph.txt").string();
    const LoadedDataset d = load_dataset(back);
    EXPECT_EQ(d.panel.nodes(), 9u);
    EXPECT_EQ(d.id, "panel");
}

TEST(Benchmark, BaselinesHaveNoCostAndSeedsAggregate) {
    const fs::path dir = scratch("bench");
    RunConfig c = small_config(dir.string());
    c.models = {"persistence", "havg", "graphmlp"};
    c.seeds = {1, 2};
    std::ostringstream log;
    const CommandResult r = run_benchmark(c, log);
    EXPECT_TRUE(r.all_ok) << log.str();
    // 3 models x 2 seeds, plus one mean row per model.
    ASSERT_EQ(r.rows.size(), 9u);
    for (std::uint64_t s : {1, 2}) {
        EXPECT_FALSE(find_row(r.rows, "persistence", 3, s).cost.has_value());
        EXPECT_FALSE(find_row(r.rows, "havg", 3, s).cost.has_value());
        EXPECT_TRUE(find_row(r.rows, "graphmlp", 3, s).cost.has_value());
    }
    const auto& m = find_row(r.rows, "graphmlp", 3, std::nullopt);
    EXPECT_EQ(m.mae, (find_row(r.rows, "graphmlp", 3, 1).mae + find_row(r.rows, "graphmlp", 3, 2).mae) / 2);
    // Persistence does not depend on the seed.
    EXPECT_EQ(find_row(r.rows, "persistence", 3, 1).mae, find_row(r.rows, "persistence", 3, 2).mae);
    for (const char* f : {"manifest.json", "metrics.csv", "metrics.json", "table.csv"}) EXPECT_TRUE(fs::exists(dir / f));
    EXPECT_TRUE(fs::exists(dir / "logs" / "synth_graphmlp_T12_h3_s2.jsonl"));
    const ModelParams ck = load_checkpoint((dir / "checkpoints" / "synth_graphmlp_T12_h3_s1.lckp").string());
    EXPECT_EQ(ck.config.nodes, 4u);
    EXPECT_EQ(ck.seed, 1u);
}

TEST(Benchmark, ReportSchemaMatchesGolden) {
    const fs::path dir = scratch("golden");
    RunConfig c = small_config(dir.string());
    c.models = {"persistence", "linear"};
    c.horizons = {3, 6, 12};
    std::ostringstream log;
    ASSERT_TRUE(run_benchmark(c, log).all_ok);
    const fs::path golden(LANECAST_GOLDEN_DIR);
    EXPECT_EQ(first_line(dir / "metrics.csv"), first_line(golden / "metrics_header.csv"));
    EXPECT_EQ(first_line(dir / "table.csv"), first_line(golden / "table_header.csv"));
}

TEST(Benchmark, FailedCellIsRecordedAndOthersRun) {
    const fs::path dir = scratch("failing");
    RunConfig c = small_config(dir.string());
    c.synth->spec.days = 1; // too short for the historical average
    c.synth->spec.interval_minutes = 5;
    c.models = {"havg", "persistence"};
    std::ostringstream log;
    const CommandResult r = run_benchmark(c, log);
    EXPECT_FALSE(r.all_ok);
    EXPECT_FALSE(find_row(r.rows, "havg", 3, 1).ok());
    EXPECT_TRUE(find_row(r.rows, "persistence", 3, 1).ok());
    std::ifstream in(dir / "metrics.csv");
    const auto stored = read_reports_csv(in);
    EXPECT_FALSE(find_row(stored, "havg", 3, 1).ok());
}

TEST(Benchmark, ManifestReplayIsBitExact) {
    const fs::path dir = scratch("replay_a"), again = scratch("replay_b");
    RunConfig c = small_config(dir.string());
    c.models = {"graphmlp", "linear", "havg"};
    std::ostringstream log;
    const CommandResult first = run_benchmark(c, log);
    RunConfig replay = load_run_config((dir / "manifest.json").string());
    replay.out = again.string();
    const CommandResult second = run_benchmark(replay, log);
    ASSERT_EQ(first.rows.size(), second.rows.size());
    for (std::size_t i = 0; i < first.rows.size(); ++i) {
        EXPECT_EQ(first.rows[i].mae, second.rows[i].mae);
        EXPECT_EQ(first.rows[i].rmse, second.rows[i].rmse);
        EXPECT_EQ(first.rows[i].mape, second.rows[i].mape);
    }
}

TEST(LongHorizon, SevenHorizonsAndPersistenceGrowsOnSinusoid) {
    const fs::path dir = scratch("long");
    RunConfig c = small_config(dir.string());
    c.synth->spec.days = 4;
    c.synth->spec.interval_minutes = 5;
    c.synth->spec.noise_std = 0.0;
    c.models = {"persistence"};
    std::ostringstream log;
    const CommandResult r = run_longhorizon(c, log);
    ASSERT_TRUE(r.all_ok) << log.str();
    std::ifstream in(dir / "longhorizon.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, first_line(fs::path(LANECAST_GOLDEN_DIR) / "longhorizon_header.csv"));
    std::size_t seed_rows = 0;
    while (std::getline(in, line)) seed_rows += line.find(",mean,") == std::string::npos;
    EXPECT_EQ(seed_rows, 7u);
    double prev = -1.0;
    for (std::size_t z : kLongHorizons) {
        const double mae = find_row(r.rows, "persistence", z, 1).mae;
        EXPECT_GT(mae, prev) << "z = " << z;
        prev = mae;
    }
    // Same cell through the benchmark path with T = 50.
    RunConfig b = c;
    b.window = 50;
    b.horizons = {3};
    b.out = scratch("long_bench").string();
    const CommandResult single = run_benchmark(b, log);
    EXPECT_EQ(find_row(single.rows, "persistence", 3, 1).mae, find_row(r.rows, "persistence", 3, 1).mae);
}

TEST(LongHorizon, ShortPanelIsRejected) {
    RunConfig c = small_config(scratch("long_short").string());
    c.models = {"persistence"};
    std::ostringstream log;
    EXPECT_THROW(run_longhorizon(c, log), DataError);
}

TEST(Ablate, FourVariantsThatAllDiffer) {
    const fs::path dir = scratch("ablate");
    RunConfig c = small_config(dir.string());
    std::ostringstream log;
    const CommandResult r = run_ablation(c, log);
    ASSERT_TRUE(r.all_ok) << log.str();
    const auto& full = find_row(r.rows, "graphmlp", 3, 1);
    for (const char* v : {"graphmlp_no_instance_norm", "graphmlp_no_dynamic_graph", "graphmlp_no_temporal_mlp"}) {
        const auto& row = find_row(r.rows, v, 3, 1);
        EXPECT_TRUE(row.mae != full.mae || row.rmse != full.rmse || row.mape != full.mape) << v;
    }
    std::ifstream in(dir / "ablation.csv");
    EXPECT_EQ(read_reports_csv(in).size(), 8u);
    c.models = {"persistence"};
    EXPECT_THROW(run_ablation(c, log), std::invalid_argument);
}

TEST(Cli, FlagsOverrideConfigFile) {
    const fs::path dir = scratch("cli_prec");
    fs::create_directories(dir);
    nlohmann::json cfg = small_config((dir / "run").string());
    cfg["window"] = 8;
    cfg["horizons"] = {2};
    cfg["models"] = {"persistence"};
    std::ofstream(dir / "config.json") << cfg.dump();
    ASSERT_EQ(run_cli("benchmark --config " + (dir / "config.json").string() + " --window 6 --seeds 3,4"), 0);
    const RunConfig resolved = load_run_config((dir / "run" / "manifest.json").string());
    EXPECT_EQ(resolved.window, 6u);                                     // flag
    EXPECT_EQ(resolved.horizons, std::vector<std::size_t>{2});          // file
    EXPECT_EQ(resolved.seeds, (std::vector<std::uint64_t>{3, 4}));      // flag
    EXPECT_EQ(resolved.split.train, SplitRatios{}.train);               // default
    EXPECT_EQ(run_cli("report --out " + (dir / "run").string()), 0);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli_exit");
    fs::create_directories(dir);
    nlohmann::json cfg = small_config((dir / "run").string());
    cfg["synth"]["spec"]["days"] = 1;
    cfg["synth"]["spec"]["interval_minutes"] = 5;
    cfg["models"] = {"havg", "persistence"};
    std::ofstream(dir / "config.json") << cfg.dump();
    EXPECT_EQ(run_cli("benchmark --config " + (dir / "config.json").string()), 1);
    EXPECT_EQ(run_cli("benchmark --config " + (dir / "config.json").string() + " --model persistence"), 0);
    std::ofstream(dir / "bad.json") << R"({"horizon": [3]})";
    EXPECT_EQ(run_cli("benchmark --config " + (dir / "bad.json").string()), 2);
    EXPECT_NE(run_cli("frobnicate"), 0);
}
