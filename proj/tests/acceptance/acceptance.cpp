// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails. `acceptance 5 6` runs a subset.

#include "lanecast/baselines.hpp"
#include "lanecast/harness.hpp"
#include "lanecast/metrics.hpp"
#include "lanecast/model.hpp"
#include "lanecast/training.hpp"

#include "../support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace lanecast;
using lanecast::testing::random_tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string title;
    std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lanecast_acceptance_" + name);
    fs::remove_all(p);
    return p;
}

/// 2 roads x 4 lanes, 7 days at 5 minutes.
RunConfig desk_config(const std::string& out) {
    RunConfig c;
    c.out = out;
    c.horizons = {3};
    c.deterministic = true;
    return c;
}

const MetricsReport* find_row(const std::vector<MetricsReport>& rows, const std::string& model, std::size_t h,
                              std::optional<std::uint64_t> seed) {
    for (const auto& r : rows)
        if (r.model == model && r.horizon == h && r.seed == seed) return &r;
    return nullptr;
}

// ---- 1 ---------------------------------------------------------------------

Outcome gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    std::string worst_where;
    std::set<std::string> leaves;
    int graph_ok = 0, redrawn = 0;
    for (int attempt = 0; attempt < 400 && graph_ok < 20; ++attempt) {
        const GraphMLPConfig c = lanecast::testing::random_small_config(rng);
        const GraphMLP model(c);
        const LossGraph<double> lg = build_loss_graph<double>(model);
        Bindings<double> b;
        for (auto& [name, value] : lanecast::testing::perturbed_parameters(model, rng)) b.emplace(name, value);
        b.emplace(kInputLeaf, random_tensor(rng, {c.nodes, c.window}, -5, 5));
        b.emplace(kTargetLeaf, random_tensor(rng, {c.nodes, c.horizon}, -5, 5));
        const auto o = lanecast::testing::check_all_parameters(lg.graph, b, lg.loss, 1e-4);
        if (o.kinked) {
            ++redrawn;
            continue;
        }
        ++graph_ok;
        for (const auto& name : lg.graph.leaf_names()) leaves.insert(name);
        if (o.worst > worst) worst = o.worst, worst_where = "graphmlp " + o.worst_leaf;
    }
    int linear_ok = 0;
    for (; linear_ok < 20; ++linear_ok) {
        std::uniform_int_distribution<std::size_t> n(1, 6), t(1, 12), z(1, 3);
        const std::size_t nodes = n(rng), window = t(rng), horizon = z(rng);
        std::vector<bool> flags(nodes);
        for (std::size_t u = 0; u < nodes; ++u) flags[u] = rng() % 4 == 0;
        const PerNodeLinear model(nodes, window, horizon, flags);
        const LossGraph<double> lg = build_loss_graph<double>(model);
        Bindings<double> b;
        for (const auto& [name, value] : model.initial_parameters(0))
            b.emplace(name, random_tensor(rng, value.shape(), -1, 1));
        b.emplace(kInputLeaf, random_tensor(rng, {nodes, window}, -5, 5));
        b.emplace(kTargetLeaf, random_tensor(rng, {nodes, horizon}, -5, 5));
        const auto o = lanecast::testing::check_all_parameters(lg.graph, b, lg.loss, 1e-4);
        if (o.worst > worst) worst = o.worst, worst_where = "linear " + o.worst_leaf;
    }
    // Every parameter group of the model must have been exercised.
    const char* groups[] = {"norm.psi", "norm.beta", "attn.wq", "attn.wk", "spatial.head.w", "spatial.head.b",
                            "temporal.block0.intra.w1", "temporal.block0.inter.w2", "temporal.head.w", "gate.g"};
    bool covered = true;
    for (const char* g : groups) covered = covered && leaves.contains(g);
    const double elapsed = seconds_since(t0);
    const bool pass = graph_ok >= 20 && linear_ok >= 20 && covered && worst < 1e-4 && elapsed < 120.0;
    return {pass, std::to_string(graph_ok) + " graphmlp + " + std::to_string(linear_ok) +
                      " linear instances, max rel err " + fmt(worst) + " (" + worst_where + "), " +
                      std::to_string(redrawn) + " kinked redrawn, groups " + (covered ? "all" : "MISSING") + ", " +
                      fmt(elapsed, 3) + " s (limit 120)"};
}

// ---- 2 ---------------------------------------------------------------------

Outcome attention_stochasticity() {
    std::mt19937_64 rng(7);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        GraphMLPConfig c;
        c.nodes = std::uniform_int_distribution<std::size_t>(1, 16)(rng);
        c.window = std::uniform_int_distribution<std::size_t>(2, 12)(rng);
        c.key_dim = std::uniform_int_distribution<std::size_t>(1, 16)(rng);
        c.patches = 1;
        const GraphMLP model(c);
        ParamMap<double> p = cast_params<double>(model.initial_parameters(rng()));
        p.insert_or_assign("attn.wq", random_tensor(rng, {c.window, c.key_dim}, -3, 3));
        p.insert_or_assign("attn.wk", random_tensor(rng, {c.window, c.key_dim}, -3, 3));
        const Tensor x = random_tensor(rng, {c.nodes, c.window}, -4, 4);
        const AdjacencyMatrix a = dynamic_attention(c, x, p);
        for (std::size_t u = 0; u < c.nodes; ++u) {
            double s = 0.0;
            for (std::size_t v = 0; v < c.nodes; ++v) s += a(u, v);
            worst = std::max(worst, std::abs(s - 1.0));
        }
    }
    return {worst <= 1e-6, "100 inputs, N <= 16, max |row sum - 1| = " + fmt(worst)};
}

// ---- 3 ---------------------------------------------------------------------

Outcome normalization_algebra() {
    std::mt19937_64 rng(11);
    double worst = 0.0;
    const double eps = GraphMLPConfig{}.epsilon;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 16)(rng);
        const std::size_t t = std::uniform_int_distribution<std::size_t>(2, 50)(rng);
        const Tensor x = random_tensor(rng, {n, t}, -100, 100);
        const Tensor psi = random_tensor(rng, {n, 1}, 0.2, 3.0);
        const Tensor beta = random_tensor(rng, {n, 1}, -2, 2);
        const Normalized<double> z = instance_normalize(x, psi, beta, eps);
        const Tensor back = instance_denormalize(z.values, z.state, psi, beta, eps);
        for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
    }
    bool finite = true;
    for (double c : {0.0, 65.0, -3.5}) {
        const Tensor x = Tensor::full({4, 12}, c);
        const Tensor psi = Tensor::full({4, 1}, 1.0), beta = Tensor::zeros({4, 1});
        const Normalized<double> z = instance_normalize(x, psi, beta, eps);
        const Tensor back = instance_denormalize(z.values, z.state, psi, beta, eps);
        for (double v : z.values.values()) finite = finite && std::isfinite(v);
        for (double v : back.values()) finite = finite && std::isfinite(v);
        GraphMLPConfig cfg;
        cfg.nodes = 4;
        const GraphMLP model(cfg);
        const Tensor y = forward(cfg, x, cast_params<double>(model.initial_parameters(1)));
        for (double v : y.values()) finite = finite && std::isfinite(v);
    }
    return {worst < 1e-5 && finite, "100 instances, max round-trip error " + fmt(worst) +
                                        ", constant inputs " + (finite ? "finite" : "NOT finite")};
}

// ---- 4 ---------------------------------------------------------------------

Outcome metric_oracles() {
    std::mt19937_64 rng(5);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<std::size_t> d(1, 8);
        const std::size_t S = d(rng), N = d(rng), Z = d(rng);
        const Tensor y = random_tensor(rng, {S, N, Z}, -20, 80), p = random_tensor(rng, {S, N, Z}, -20, 80);
        double a = 0, q = 0, m = 0;
        std::size_t mc = 0;
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t z = 0; z < Z; ++z) {
                    const std::size_t i = (s * N + n) * Z + z;
                    a += std::fabs(y[i] - p[i]);
                    q += (y[i] - p[i]) * (y[i] - p[i]);
                    if (std::fabs(y[i]) >= kDefaultMapeFloor) m += std::fabs((y[i] - p[i]) / y[i]), ++mc;
                }
        const double c = static_cast<double>(S * N * Z);
        const ErrorMetrics got = compute_metrics(p, y);
        worst = std::max({worst, std::abs(got.mae - a / c), std::abs(got.rmse - std::sqrt(q / c))});
        if (mc) worst = std::max(worst, std::abs(got.mape.value_or(1e300) - m / static_cast<double>(mc)));
    }
    const ErrorMetrics hand = compute_metrics(Tensor({1, 2, 1}, {2, 4}), Tensor({1, 2, 1}, {1, 2}));
    const bool mae_ok = hand.mae == 1.5, rmse_ok = hand.rmse == std::sqrt(2.5);
    const bool mape_ok = hand.mape && *hand.mape == 0.75;
    const bool pass = worst <= 1e-10 && mae_ok && rmse_ok && mape_ok;
    return {pass, "oracle max diff " + fmt(worst) + "; hand example MAE " + fmt(hand.mae) + ", RMSE " +
                      fmt(hand.rmse, 8) + ", MAPE " + (hand.mape ? fmt(100 * *hand.mape) : "absent") +
                      "% (stated 75%)"};
}

// ---- 5 ---------------------------------------------------------------------

Outcome overfit_sanity() {
    const auto t0 = std::chrono::steady_clock::now();
    auto net = std::make_shared<const LaneNetwork>(build_grid_network(2, {4, 4}));
    SynthSpec spec;
    spec.noise_std = 0.0;
    const TimeSeriesPanel panel = synth_generate(net, spec);
    const PanelSplit parts = split(panel);
    const ForecastTask task{12, 3, 1};
    const SampleSet tr = make_windows(parts.train, task), va = make_windows(parts.validation, task);
    GraphMLPConfig c;
    c.nodes = 8;
    const GraphMLP model(c);
    TrainConfig tc;
    tc.max_steps = 2000;
    tc.max_epochs = 100000;
    tc.patience = 100000;
    tc.batch_size = 8;
    tc.initial_lr = 0.001;
    tc.seed = 1;
    tc.deterministic = true;
    const TrainResult r = train(model, tr, va, tc);
    const Tensor pred = predict_all(model, r.params, tr);
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sq += (pred[i] - tr.targets[i]) * (pred[i] - tr.targets[i]);
    const double mse = sq / static_cast<double>(pred.size());
    const double elapsed = seconds_since(t0);
    return {mse < 1e-2 && r.record.steps <= 2000 && elapsed < 60.0,
            "training MSE " + fmt(mse) + " after " + std::to_string(r.record.steps) + " steps, " + fmt(elapsed, 3) +
                " s (limits 1e-2, 2000 steps, 60 s)"};
}

// ---- 6 ---------------------------------------------------------------------

Outcome distribution_shift() {
    RunConfig c = desk_config(scratch("shift").string());
    c.synth->spec.trend = SynthTrend{0.2, 30.0};
    c.train.max_epochs = 12;
    c.train.patience = 4;
    const LoadedDataset data = load_dataset(c);
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const double full = run_cell(c, data, {"graphmlp", 12, 6, seed, Ablation::None}).report.mae;
        const double ablated = run_cell(c, data, {"graphmlp", 12, 6, seed, Ablation::InstanceNorm}).report.mae;
        wins += full < ablated;
        detail += (seed > 1 ? ", " : "") + fmt(full, 3) + " vs " + fmt(ablated, 3);
    }
    return {wins >= 4, std::to_string(wins) + "/5 seeds full < no_instance_norm (test MAE " + detail + ")"};
}

// ---- 7 ---------------------------------------------------------------------

Outcome ablation_completeness() {
    RunConfig c = desk_config(scratch("ablate").string());
    c.train.max_epochs = 3;
    std::ostringstream log;
    const CommandResult r = run_ablation(c, log);
    const MetricsReport* full = find_row(r.rows, "graphmlp", 3, 1);
    int variants = full ? 1 : 0, differing = 0;
    for (const char* v : {"graphmlp_no_instance_norm", "graphmlp_no_dynamic_graph", "graphmlp_no_temporal_mlp"}) {
        const MetricsReport* row = find_row(r.rows, v, 3, 1);
        if (!row || !row->ok()) continue;
        ++variants;
        if (full && (row->mae != full->mae || row->rmse != full->rmse || row->mape != full->mape)) ++differing;
    }
    return {r.all_ok && variants == 4 && differing == 3,
            std::to_string(variants) + " variants reported, " + std::to_string(differing) +
                "/3 removals change a metric"};
}

// ---- 8 ---------------------------------------------------------------------

Outcome cost_fidelity() {
    RunConfig c = desk_config(scratch("cost").string());
    c.train.max_epochs = 5;
    c.train.patience = 100;
    const LoadedDataset data = load_dataset(c);
    const CellResult g = run_cell(c, data, {"graphmlp", 12, 3, 1, Ablation::None});
    const double external = 100.0 * g.train_wall_seconds / static_cast<double>(g.record->steps);
    const double reported = g.report.cost.value_or(-1.0);
    const double rel = std::abs(reported - external) / external;
    const bool baselines_absent = !run_cell(c, data, {"persistence", 12, 3, 1, Ablation::None}).report.cost &&
                                  !run_cell(c, data, {"havg", 12, 3, 1, Ablation::None}).report.cost;
    return {rel <= 0.10 && baselines_absent,
            "reported Cost " + fmt(reported) + " vs external " + fmt(external) + " (" + fmt(100 * rel, 3) +
                "% apart, limit 10%); persistence/havg Cost " + (baselines_absent ? "absent" : "PRESENT")};
}

// ---- 9 ---------------------------------------------------------------------

Outcome windowing_and_schedule() {
    std::size_t mismatches = 0, cases = 0;
    for (std::size_t L = 1; L <= 30; ++L)
        for (std::size_t T = 1; T <= 12; ++T)
            for (std::size_t z = 1; z <= 6; ++z)
                for (std::size_t stride = 1; stride <= 3; ++stride) {
                    std::size_t brute = 0;
                    for (std::size_t o = 0; o + T + z <= L; o += stride) ++brute;
                    ++cases;
                    mismatches += window_count(L, {T, z, stride}) != brute;
                }
    const TrainConfig tc;
    const double a = lr_at(0, tc), b = lr_at(20, tc), d = lr_at(35, tc);
    const bool lr_ok = a == 0.001 && b == 0.0005 && d == 0.00025;
    return {mismatches == 0 && lr_ok, std::to_string(cases) + " window cases, " + std::to_string(mismatches) +
                                          " mismatches; lr_at(0/20/35) = " + fmt(a) + "/" + fmt(b) + "/" + fmt(d)};
}

// ---- 10 --------------------------------------------------------------------

Outcome long_horizon() {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig c = desk_config(scratch("long").string());
    c.models = {"persistence", "havg", "linear", "graphmlp"};
    c.train.max_epochs = 3;
    std::ostringstream log;
    const CommandResult sweep = run_longhorizon(c, log);
    std::size_t rows = 0;
    for (const auto& r : sweep.rows) rows += r.ok() && r.seed.has_value();
    const double elapsed = seconds_since(t0);

    RunConfig s = desk_config(scratch("long_sinusoid").string());
    s.models = {"persistence"};
    s.synth->spec.noise_std = 0.0;
    const CommandResult pure = run_longhorizon(s, log);
    bool monotone = pure.all_ok;
    std::string maes;
    double prev = -1.0;
    for (std::size_t z : kLongHorizons) {
        const MetricsReport* r = find_row(pure.rows, "persistence", z, 1);
        if (!r) {
            monotone = false;
            continue;
        }
        monotone = monotone && r->mae >= prev;
        prev = r->mae;
        maes += (maes.empty() ? "" : " ") + fmt(r->mae, 3);
    }
    return {sweep.all_ok && rows == 4 * kLongHorizons.size() && elapsed < 900.0 && monotone,
            std::to_string(rows) + " sweep rows in " + fmt(elapsed, 3) + " s (limit 900); sinusoid persistence MAE " +
                maes + (monotone ? " non-decreasing" : " NOT monotone")};
}

// ---- 11 --------------------------------------------------------------------

Outcome determinism() {
    const fs::path first = scratch("det_a"), second = scratch("det_b");
    RunConfig c = desk_config(first.string());
    c.models = {"graphmlp", "linear", "persistence", "havg"};
    c.seeds = {1, 2};
    c.train.max_epochs = 3;
    std::ostringstream log;
    const CommandResult a = run_benchmark(c, log);
    RunConfig replay = load_run_config((first / "manifest.json").string());
    replay.out = second.string();
    const CommandResult b = run_benchmark(replay, log);
    std::size_t compared = 0, differ = 0;
    if (a.rows.size() != b.rows.size()) return {false, "row counts differ"};
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        ++compared;
        differ += a.rows[i].mae != b.rows[i].mae || a.rows[i].rmse != b.rows[i].rmse || a.rows[i].mape != b.rows[i].mape;
    }
    return {a.all_ok && b.all_ok && differ == 0,
            std::to_string(compared) + " rows replayed from manifest, " + std::to_string(differ) +
                " differ in MAE/RMSE/MAPE"};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "gradient correctness", gradient_correctness},
        {2, "attention stochasticity", attention_stochasticity},
        {3, "normalization algebra", normalization_algebra},
        {4, "metric oracle equivalence", metric_oracles},
        {5, "overfit sanity", overfit_sanity},
        {6, "distribution-shift ablation direction", distribution_shift},
        {7, "ablation completeness", ablation_completeness},
        {8, "cost metric fidelity", cost_fidelity},
        {9, "windowing and schedule oracles", windowing_and_schedule},
        {10, "long-horizon harness", long_horizon},
        {11, "determinism", determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.contains(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("[%s] %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title.c_str(), o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
