#pragma once

#include "lanecast/data.hpp"
#include "lanecast/errors.hpp"
#include "lanecast/trainable.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace lanecast {

struct TrainConfig {
    double initial_lr = 0.001;
    /// Epoch cap.
    std::size_t max_epochs = 1000;
    /// Optional cap on optimizer steps across all epochs.
    std::optional<std::size_t> max_steps;
    /// The learning rate is multiplied by decay_factor at epoch decay_start
    /// and again every decay_every epochs after it (epochs count from 0).
    std::size_t decay_start = 20;
    std::size_t decay_every = 10;
    double decay_factor = 0.5;
    /// Stop after this many epochs without a new best validation MAE.
    std::size_t patience = 15;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    bool shuffle = true;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    /// Worker threads for per-sample passes inside a step. Gradients are
    /// reduced in sample order, so the result does not depend on this.
    std::size_t threads = 1;
    /// Forces threads = 1.
    bool deterministic = false;

    void validate() const;
};

double lr_at(std::size_t epoch, const TrainConfig& config);

template <std::floating_point T>
struct AdamState {
    ParamMap<T> m;
    ParamMap<T> v;
    std::size_t step = 0;
};

template <std::floating_point T>
struct AdamResult {
    ParamMap<T> params;
    AdamState<T> state;
};

/// One bias-corrected Adam update of every parameter that has a gradient.
/// Missing moment entries start at zero. Throws NonFiniteError naming the
/// parameter if the update leaves the finite range.
template <std::floating_point T>
AdamResult<T> adam_step(const ParamMap<T>& params, const GradientMap<T>& grads, const AdamState<T>& state, double lr,
                        const TrainConfig& config = {});

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double validation_mae = 0.0;
    double lr = 0.0;
    std::size_t steps = 0; // cumulative
    double seconds = 0.0;  // training-step time within this epoch
};

struct TrainRecord {
    std::vector<EpochRecord> epochs;
    /// Wall-clock seconds of every optimizer step (forward, backward, update).
    std::vector<double> iteration_seconds;
    std::size_t best_epoch = 0;
    double best_validation_mae = 0.0;
    std::size_t steps = 0;
    std::string stop_reason;

    /// Timings with the warm-up step 0 removed.
    std::vector<double> timed_iterations() const;
};

struct TrainResult {
    ParamMap<float> params;
    TrainRecord record;
};

/// Raised when the loss or an update becomes non-finite; carries the record
/// accumulated so far.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, TrainRecord record)
        : NumericError(what), record_(std::move(record)) {}
    const TrainRecord& record() const noexcept { return record_; }

private:
    TrainRecord record_;
};

/// Mini-batch Adam on the per-sample MSE with learning-rate halving and early
/// stopping on validation MAE. Returns the parameters of the best epoch.
TrainResult train(const TrainableModel& model, const SampleSet& train_set, const SampleSet& validation_set,
                  const TrainConfig& config, const std::optional<ParamMap<float>>& initial = std::nullopt);

/// S x N x z predictions for every sample.
Tensor predict_all(const TrainableModel& model, const ParamMap<float>& params, const SampleSet& samples);

/// One JSON object per epoch.
void write_train_log(std::ostream& out, const TrainRecord& record);

} // namespace lanecast
