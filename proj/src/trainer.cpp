#include "gaf/trainer.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace gaf {

std::string to_string(LrSchedule s) {
    return s == LrSchedule::constant ? "constant" : "cosine";
}

LrSchedule parse_lr_schedule(const std::string& name) {
    if (name == "constant") return LrSchedule::constant;
    if (name == "cosine") return LrSchedule::cosine;
    throw ValueError("unknown learning-rate schedule '" + name + "' (expected constant or cosine)");
}

double TrainConfig::learning_rate_at(std::uint64_t iteration) const {
    if (lr_schedule == LrSchedule::constant || iterations == 0) return learning_rate;
    const double frac = std::min(1.0, static_cast<double>(iteration) / static_cast<double>(iterations));
    const double floor = lr_final_ratio * learning_rate;
    return floor + (learning_rate - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void TrainConfig::validate() const {
    if (!(t_eps > 0.0 && t_eps < 0.5)) throw ValueError("t_eps must lie in (0, 0.5)");
    if (!(lambda_res >= 0.0) || !(lambda_swap >= 0.0)) throw ValueError("loss weights must be non-negative");
    if (batch_size == 0) throw ValueError("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ValueError("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ValueError("Adam betas must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) throw ValueError("adam_epsilon must be positive");
    if (!(weight_decay >= 0.0)) throw ValueError("weight_decay must be non-negative");
    if (!(lr_final_ratio >= 0.0 && lr_final_ratio <= 1.0)) throw ValueError("lr_final_ratio must lie in [0, 1]");
}

void draw_minibatch(const LabeledDataset& dataset, std::size_t batch_size, const CounterRng& rng,
                    std::uint64_t iteration, Array<float>& z_x, std::vector<std::size_t>& classes) {
    if (dataset.size() == 0) {
        throw ValueError("dataset is empty");
    }
    const std::size_t d = dataset.dim();
    z_x = Array<float>(Shape{batch_size, d});
    classes.resize(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const auto r = rng.below(dataset.size(), Stream::batch_index, iteration, static_cast<std::uint32_t>(i));
        std::copy_n(dataset.points.row(r).begin(), d, z_x.row(i).begin());
        classes[i] = dataset.labels[r];
    }
}

TrainingBatch<float> make_training_batch(const Array<float>& z_x, std::span<const std::size_t> classes,
                                         const CounterRng& rng, std::uint64_t iteration, double t_eps) {
    const std::size_t n = z_x.rows();
    const std::size_t d = z_x.cols();
    if (classes.size() != n) {
        throw ShapeError("one class label per data point required");
    }
    TrainingBatch<float> b{z_x, Array<float>(z_x.shape()), Array<float>(z_x.shape()), std::vector<float>(n),
                           std::vector<std::size_t>(classes.begin(), classes.end())};
    for (std::size_t i = 0; i < n; ++i) {
        const auto sample = static_cast<std::uint32_t>(i);
        const double u = rng.uniform(Stream::bridge_time, iteration, sample);
        const double t = t_eps + (1.0 - 2.0 * t_eps) * u;
        b.times[i] = static_cast<float>(t);
        const float a = 1.0f - b.times[i];
        for (std::size_t k = 0; k < d; ++k) {
            const float zy = static_cast<float>(rng.normal(Stream::bridge_noise, iteration, sample, static_cast<std::uint32_t>(k)));
            b.z_y.at(i, k) = zy;
            b.x_t.at(i, k) = a * zy + b.times[i] * z_x.at(i, k);
        }
    }
    return b;
}

LossBreakdown train_step(GafModel<float>& model, AdamState<float>& adam, const TrainingBatch<float>& batch,
                         double lambda_res, double lambda_swap) {
    Tape<float> tape;
    ParamBinder<float> bind(tape, model.parameters());
    LossVars loss;
    try {
        loss = build_gaf_loss(model, bind, batch, lambda_res, lambda_swap);
    } catch (const NonFiniteError& e) {
        throw NonFiniteError(std::string("training aborted at Adam step ") + std::to_string(adam.step) + ": " + e.what());
    }
    const auto grads = tape.backward(loss.total, model.parameters());
    for (std::size_t p = 0; p < grads.size(); ++p) {
        if (!grads[p].all_finite()) {
            throw NonFiniteError("training aborted at Adam step " + std::to_string(adam.step) +
                                 ": non-finite gradient for '" + model.parameters().name(p) + "'");
        }
    }
    adam_step(adam, model.parameters(), grads);
    return LossBreakdown{tape.value(loss.pair).item(), tape.value(loss.res).item(), tape.value(loss.swap).item(),
                         tape.value(loss.total).item(), lambda_res, lambda_swap};
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const GafConfig& model_config, const TrainConfig& train_config, const LabeledDataset& dataset)
    : train_config_(train_config),
      model_(model_config),
      adam_(AdamState<float>::for_parameters(model_.parameters(), train_config.adam())),
      dataset_(dataset),
      rng_(train_config.seed) {
    train_config_.validate();
    if (dataset.num_classes() != model_config.num_classes || dataset.dim() != model_config.data_dim) {
        throw ValueError("dataset (" + std::to_string(dataset.num_classes()) + " classes, dim " +
                         std::to_string(dataset.dim()) + ") does not match the model configuration");
    }
}

Trainer::Trainer(Checkpoint checkpoint, const LabeledDataset& dataset)
    : train_config_(checkpoint.train_config),
      model_(checkpoint.model_config, std::move(checkpoint.parameters)),
      adam_(std::move(checkpoint.adam)),
      dataset_(dataset),
      rng_(checkpoint.train_config.seed),
      iteration_(checkpoint.iteration) {
    train_config_.validate();
    if (dataset.num_classes() != model_.num_classes() || dataset.dim() != model_.data_dim()) {
        throw ValueError("dataset does not match the checkpoint's model configuration");
    }
}

LossBreakdown Trainer::step() {
    Array<float> z_x;
    std::vector<std::size_t> classes;
    draw_minibatch(dataset_, train_config_.batch_size, rng_, iteration_, z_x, classes);
    const auto batch = make_training_batch(z_x, classes, rng_, iteration_, train_config_.t_eps);
    adam_.hyper.learning_rate = train_config_.learning_rate_at(iteration_);
    const auto loss = train_step(model_, adam_, batch, train_config_.lambda_res, train_config_.lambda_swap);
    ++iteration_;
    return loss;
}

void Trainer::run_until(std::uint64_t until, const LogFn& on_log, const CheckpointFn& on_checkpoint) {
    while (iteration_ < until) {
        const auto loss = step();
        const auto& c = train_config_;
        if (on_log && c.log_interval && (iteration_ % c.log_interval == 0 || iteration_ == 1)) {
            on_log(LogRow{iteration_, loss});
        }
        if (on_checkpoint && c.checkpoint_interval && iteration_ % c.checkpoint_interval == 0) {
            on_checkpoint(checkpoint());
        }
    }
}

Checkpoint Trainer::checkpoint() const {
    return Checkpoint{model_.config(), train_config_, iteration_, model_.parameters(), adam_};
}

TrainResult train(const GafConfig& model_config, const TrainConfig& train_config, const LabeledDataset& dataset,
                  const Trainer::CheckpointFn& on_checkpoint) {
    Trainer trainer(model_config, train_config, dataset);
    TrainResult result;
    trainer.run_until(train_config.iterations, [&](const LogRow& row) { result.log.push_back(row); }, on_checkpoint);
    result.checkpoint = trainer.checkpoint();
    return result;
}

std::string format_loss_csv(const std::vector<LogRow>& rows) {
    std::ostringstream os;
    os.precision(9);
    os << "iter,loss_pair,loss_res,loss_swap,loss_total\n";
    for (const auto& r : rows) {
        os << r.iteration << ',' << r.loss.pair << ',' << r.loss.res << ',' << r.loss.swap << ',' << r.loss.total << '\n';
    }
    return os.str();
}

}  // namespace gaf
