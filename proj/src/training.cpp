#include "lanecast/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

namespace lanecast {

void TrainConfig::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
    };
    need(initial_lr > 0.0 && std::isfinite(initial_lr), "initial_lr must be positive");
    need(max_epochs >= 1, "max_epochs must be >= 1");
    need(!max_steps || *max_steps >= 1, "max_steps must be >= 1");
    need(decay_every >= 1, "decay_every must be >= 1");
    need(decay_factor > 0.0 && decay_factor <= 1.0, "decay_factor must lie in (0, 1]");
    need(patience >= 1, "patience must be >= 1");
    need(batch_size >= 1, "batch_size must be >= 1");
    need(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
    need(adam_epsilon > 0.0, "adam_epsilon must be positive");
    need(threads >= 1, "threads must be >= 1");
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
    if (epoch < config.decay_start) return config.initial_lr;
    const std::size_t halvings = 1 + (epoch - config.decay_start) / config.decay_every;
    return config.initial_lr * std::pow(config.decay_factor, static_cast<double>(halvings));
}

template <std::floating_point T>
AdamResult<T> adam_step(const ParamMap<T>& params, const GradientMap<T>& grads, const AdamState<T>& state, double lr,
                        const TrainConfig& config) {
    AdamResult<T> out{params, state};
    out.state.step = state.step + 1;
    const double t = static_cast<double>(out.state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (const auto& [name, g] : grads) {
        auto pit = out.params.find(name);
        if (pit == out.params.end()) continue;
        const BasicTensor<T>& p = pit->second;
        if (p.shape() != g.shape()) throw ShapeError("gradient of '" + name + "' does not match its parameter");
        const auto mit = state.m.find(name);
        const auto vit = state.v.find(name);
        std::vector<T> np(p.size()), nm(p.size()), nv(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double m0 = mit == state.m.end() ? 0.0 : static_cast<double>(mit->second[i]);
            const double v0 = vit == state.v.end() ? 0.0 : static_cast<double>(vit->second[i]);
            const double m1 = config.beta1 * m0 + (1.0 - config.beta1) * gi;
            const double v1 = config.beta2 * v0 + (1.0 - config.beta2) * gi * gi;
            nm[i] = static_cast<T>(m1);
            nv[i] = static_cast<T>(v1);
            np[i] = static_cast<T>(static_cast<double>(p[i]) - lr * (m1 / c1) / (std::sqrt(v1 / c2) + config.adam_epsilon));
        }
        try {
            pit->second = BasicTensor<T>(p.shape(), std::move(np));
            out.state.m.insert_or_assign(name, BasicTensor<T>(p.shape(), std::move(nm)));
            out.state.v.insert_or_assign(name, BasicTensor<T>(p.shape(), std::move(nv)));
        } catch (const NonFiniteError& e) {
            throw NonFiniteError("Adam update of '" + name + "' is not finite: " + e.what());
        }
    }
    return out;
}

template AdamResult<float> adam_step<float>(const ParamMap<float>&, const GradientMap<float>&, const AdamState<float>&,
                                            double, const TrainConfig&);
template AdamResult<double> adam_step<double>(const ParamMap<double>&, const GradientMap<double>&,
                                              const AdamState<double>&, double, const TrainConfig&);

std::vector<double> TrainRecord::timed_iterations() const {
    if (iteration_seconds.size() <= 1) return {};
    return {iteration_seconds.begin() + 1, iteration_seconds.end()};
}

namespace {

void check_samples(const TrainableModel& model, const SampleSet& s, const char* which) {
    if (s.size() == 0) throw DataError(std::string(which) + " set is empty");
    if (s.nodes() != model.nodes() || s.window() != model.window() || s.horizon() != model.horizon()) {
        throw ShapeError(std::string(which) + " samples do not match the model's N, T, z");
    }
}

struct SampleTensors {
    std::vector<TensorF> inputs;
    std::vector<TensorF> targets;
};

SampleTensors to_float(const SampleSet& s) {
    SampleTensors out;
    for (std::size_t k = 0; k < s.size(); ++k) {
        out.inputs.push_back(s.input(k).cast<float>());
        out.targets.push_back(s.target(k).cast<float>());
    }
    return out;
}

double mean_absolute_error(const Predictor<float>& predictor, const ParamMap<float>& params,
                           const SampleTensors& samples) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < samples.inputs.size(); ++k) {
        const TensorF pred = predictor(params, samples.inputs[k]);
        const auto y = samples.targets[k].values();
        for (std::size_t i = 0; i < y.size(); ++i) total += std::abs(static_cast<double>(pred[i]) - y[i]);
        count += y.size();
    }
    return total / static_cast<double>(count);
}

} // namespace

TrainResult train(const TrainableModel& model, const SampleSet& train_set, const SampleSet& validation_set,
                  const TrainConfig& config, const std::optional<ParamMap<float>>& initial) {
    using Clock = std::chrono::steady_clock;
    config.validate();
    check_samples(model, train_set, "training");
    check_samples(model, validation_set, "validation");

    const LossGraph<float> lg = build_loss_graph<float>(model);
    std::vector<std::string> names;
    for (const std::string& leaf : lg.graph.leaf_names())
        if (leaf != kInputLeaf && leaf != kTargetLeaf) names.push_back(leaf);

    ParamMap<float> params = initial ? *initial : model.initial_parameters(config.seed);
    model.validate(params);
    for (const std::string& n : names)
        if (!params.contains(n)) throw ShapeError("initial parameters lack '" + n + "'");

    const SampleTensors train_data = to_float(train_set);
    const SampleTensors val_data = to_float(validation_set);
    const Predictor<float> predictor(model);
    const std::size_t workers = config.deterministic ? 1 : std::max<std::size_t>(1, config.threads);

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    TrainRecord record;
    AdamState<float> adam;
    ParamMap<float> best = params;
    double best_mae = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    // Per-sample results of one batch, reduced in sample order.
    std::vector<GradientMap<float>> sample_grads;
    std::vector<double> sample_loss;

    auto run_samples = [&](const Bindings<float>& base, const std::vector<std::size_t>& batch, std::size_t begin,
                           std::size_t end) {
        Bindings<float> b = base;
        for (std::size_t k = begin; k < end; ++k) {
            b.insert_or_assign(kInputLeaf, train_data.inputs[batch[k]]);
            b.insert_or_assign(kTargetLeaf, train_data.targets[batch[k]]);
            const Evaluation<float> ev = lg.graph.evaluate(b);
            sample_loss[k] = static_cast<double>(ev.value(lg.loss)[0]);
            sample_grads[k] = lg.graph.backward(ev, lg.loss);
        }
    };

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double lr = lr_at(epoch, config);
        if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        double epoch_seconds = 0.0;
        bool step_cap = false;

        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::vector<std::size_t> batch(
                order.begin() + static_cast<std::ptrdiff_t>(start),
                order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + config.batch_size)));
            sample_grads.assign(batch.size(), {});
            sample_loss.assign(batch.size(), 0.0);

            const auto t0 = Clock::now();
            try {
                Bindings<float> base;
                for (const std::string& n : names) base.emplace(n, params.at(n));
                if (workers == 1 || batch.size() == 1) {
                    run_samples(base, batch, 0, batch.size());
                } else {
                    const std::size_t w = std::min(workers, batch.size());
                    std::vector<std::thread> pool;
                    std::vector<std::exception_ptr> errors(w);
                    for (std::size_t i = 0; i < w; ++i) {
                        const std::size_t lo = batch.size() * i / w, hi = batch.size() * (i + 1) / w;
                        pool.emplace_back([&, i, lo, hi] {
                            try {
                                run_samples(base, batch, lo, hi);
                            } catch (...) {
                                errors[i] = std::current_exception();
                            }
                        });
                    }
                    for (auto& th : pool) th.join();
                    for (auto& e : errors)
                        if (e) std::rethrow_exception(e);
                }
                GradientMap<float> grads;
                const float inv = 1.0f / static_cast<float>(batch.size());
                for (const std::string& n : names) {
                    std::vector<float> acc(params.at(n).size(), 0.0f);
                    for (const auto& g : sample_grads) {
                        const auto v = g.at(n).values();
                        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
                    }
                    for (float& a : acc) a *= inv;
                    grads.emplace(n, TensorF(params.at(n).shape(), std::move(acc)));
                }
                AdamResult<float> next = adam_step(params, grads, adam, lr, config);
                params = std::move(next.params);
                adam = std::move(next.state);
            } catch (const NonFiniteError& e) {
                throw DivergenceError(std::string("training diverged at step ") + std::to_string(record.steps) +
                                          ": " + e.what(),
                                      record);
            }
            const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
            record.iteration_seconds.push_back(seconds);
            epoch_seconds += seconds;

            double batch_loss = 0.0;
            for (double l : sample_loss) batch_loss += l;
            loss_sum += batch_loss / static_cast<double>(batch.size());
            ++batches;
            ++record.steps;
            if (config.max_steps && record.steps >= *config.max_steps) {
                step_cap = true;
                break;
            }
        }

        const double mae = mean_absolute_error(predictor, params, val_data);
        record.epochs.push_back({epoch, loss_sum / static_cast<double>(batches), mae, lr, record.steps, epoch_seconds});
        if (!std::isfinite(mae)) throw DivergenceError("validation MAE is not finite", record);
        if (mae < best_mae) {
            best_mae = mae;
            best = params;
            record.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            record.stop_reason = "early_stop";
            break;
        }
        if (step_cap) {
            record.stop_reason = "max_steps";
            break;
        }
    }
    if (record.stop_reason.empty()) record.stop_reason = "max_epochs";
    record.best_validation_mae = best_mae;
    return {std::move(best), std::move(record)};
}

Tensor predict_all(const TrainableModel& model, const ParamMap<float>& params, const SampleSet& samples) {
    model.validate(params);
    const Predictor<float> predictor(model);
    std::vector<double> out;
    out.reserve(samples.size() * model.nodes() * model.horizon());
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const TensorF p = predictor(params, samples.input(k).cast<float>());
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    return Tensor({samples.size(), model.nodes(), model.horizon()}, std::move(out));
}

void write_train_log(std::ostream& out, const TrainRecord& record) {
    for (const EpochRecord& e : record.epochs) {
        nlohmann::json j{{"epoch", e.epoch},         {"train_loss", e.train_loss}, {"validation_mae", e.validation_mae},
                         {"lr", e.lr},               {"steps", e.steps},           {"seconds", e.seconds},
                         {"best", e.epoch == record.best_epoch}};
        out << j.dump() << '\n';
    }
}

} // namespace lanecast
