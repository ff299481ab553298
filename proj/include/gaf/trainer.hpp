#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gaf/adam.hpp"
#include "gaf/data.hpp"
#include "gaf/model.hpp"
#include "gaf/objective.hpp"
#include "gaf/rng.hpp"

namespace gaf {

inline constexpr double default_t_eps = 1e-3;

enum class LrSchedule { constant, cosine };

std::string to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& name);

struct TrainConfig {
    std::size_t batch_size = 256;
    std::size_t iterations = 12000;
    double learning_rate = 1e-3;
    double lambda_res = default_lambda_res;
    double lambda_swap = default_lambda_swap;
    double t_eps = default_t_eps;
    std::uint64_t seed = 0;
    /// 0 disables periodic checkpoints.
    std::size_t checkpoint_interval = 0;
    std::size_t log_interval = 100;
    std::string dataset_id;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double adam_epsilon = 1e-8;
    double weight_decay = 0.0;
    /// cosine: decays from learning_rate to lr_final_ratio * learning_rate over `iterations`.
    LrSchedule lr_schedule = LrSchedule::cosine;
    double lr_final_ratio = 0.0;

    void validate() const;
    /// Learning rate applied by the update that takes `iteration` to `iteration + 1`.
    double learning_rate_at(std::uint64_t iteration) const;
    AdamHyper adam() const { return {learning_rate, beta1, beta2, adam_epsilon, weight_decay}; }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Everything needed to continue training bit-for-bit.
struct Checkpoint {
    GafConfig model_config;
    TrainConfig train_config;
    std::uint64_t iteration = 0;
    ParameterSet<float> parameters;
    AdamState<float> adam;

    GafModel<float> model() const { return GafModel<float>(model_config, parameters); }

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct LogRow {
    std::uint64_t iteration = 0;
    LossBreakdown loss;
};

/// Draws the minibatch of data points used at `iteration`.
void draw_minibatch(const LabeledDataset& dataset, std::size_t batch_size, const CounterRng& rng,
                    std::uint64_t iteration, Array<float>& z_x, std::vector<std::size_t>& classes);

/// Builds bridges for a minibatch: fresh z_y ~ N(0, I) and t ~ U[t_eps, 1 - t_eps] per sample.
TrainingBatch<float> make_training_batch(const Array<float>& z_x, std::span<const std::size_t> classes,
                                         const CounterRng& rng, std::uint64_t iteration, double t_eps);

/// One optimization step on a prepared batch; returns the batch-mean losses.
/// Throws NonFiniteError (model untouched) if the loss or a gradient is not finite.
LossBreakdown train_step(GafModel<float>& model, AdamState<float>& adam, const TrainingBatch<float>& batch,
                         double lambda_res, double lambda_swap);

/// Sequential trainer with counter-based randomness keyed by (seed, iteration, sample).
class Trainer {
public:
    Trainer(const GafConfig& model_config, const TrainConfig& train_config, const LabeledDataset& dataset);
    Trainer(Checkpoint checkpoint, const LabeledDataset& dataset);

    /// Runs one iteration and advances the counter.
    LossBreakdown step();

    using LogFn = std::function<void(const LogRow&)>;
    using CheckpointFn = std::function<void(const Checkpoint&)>;

    /// Trains until `iteration() == until`, calling `on_log` every log_interval
    /// iterations and `on_checkpoint` every checkpoint_interval iterations.
    void run_until(std::uint64_t until, const LogFn& on_log = {}, const CheckpointFn& on_checkpoint = {});

    std::uint64_t iteration() const noexcept { return iteration_; }
    const GafModel<float>& model() const noexcept { return model_; }
    const TrainConfig& config() const noexcept { return train_config_; }
    const AdamState<float>& adam() const noexcept { return adam_; }
    Checkpoint checkpoint() const;

private:
    TrainConfig train_config_;
    GafModel<float> model_;
    AdamState<float> adam_;
    const LabeledDataset& dataset_;
    CounterRng rng_;
    std::uint64_t iteration_ = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LogRow> log;
};

TrainResult train(const GafConfig& model_config, const TrainConfig& train_config, const LabeledDataset& dataset,
                  const Trainer::CheckpointFn& on_checkpoint = {});

/// CSV with header `iter,loss_pair,loss_res,loss_swap,loss_total`.
std::string format_loss_csv(const std::vector<LogRow>& rows);

}  // namespace gaf
