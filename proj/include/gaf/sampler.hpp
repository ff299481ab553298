#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "gaf/model.hpp"

namespace gaf {

enum class Schedule { linear, cosine };
enum class Direction { forward, reverse };
enum class Solver { euler, heun };

std::string to_string(Schedule s);
Schedule parse_schedule(const std::string& name);
std::string to_string(Solver s);
Solver parse_solver(const std::string& name);

/// Ordered integration nodes spanning [t_eps, 1 - t_eps]; descending for reverse direction.
struct TimeGrid {
    std::size_t steps = 0;
    Schedule schedule = Schedule::linear;
    double t_eps = 1e-3;
    Direction direction = Direction::forward;
    std::vector<double> nodes;

    /// Cosine nodes: t_k = t_eps + (1 - 2 t_eps) (1 - cos(pi k / N)) / 2.
    static TimeGrid make(std::size_t steps, Schedule schedule = Schedule::linear, double t_eps = 1e-3,
                         Direction direction = Direction::forward);

    TimeGrid reversed() const;
};

/// Time-dependent vector field evaluated on a batch (rows x d).
template <class T>
class VelocityField {
public:
    virtual ~VelocityField() = default;
    virtual std::size_t dim() const = 0;
    virtual Array<T> operator()(const Array<T>& x, double t) const = 0;
};

/// Emergent GAF velocity for a fixed query.
template <class T>
class ModelField final : public VelocityField<T> {
public:
    ModelField(const GafModel<T>& model, VelocityQuery query, EvalStats* stats = nullptr)
        : model_(model), query_(std::move(query)), stats_(stats) {
        query_.validate(model.num_classes());
    }
    std::size_t dim() const override { return model_.data_dim(); }
    Array<T> operator()(const Array<T>& x, double t) const override { return velocity(model_, x, t, query_, stats_); }

private:
    const GafModel<T>& model_;
    VelocityQuery query_;
    EvalStats* stats_;
};

/// States at every grid node; states.front() is the initial state.
template <class T>
struct Trajectory {
    std::vector<double> times;
    std::vector<Array<T>> states;

    const Array<T>& final_state() const { return states.back(); }
    std::size_t size() const noexcept { return states.size(); }
};

/// z_{k+1} = z_k + (t_{k+1} - t_k) v(z_k, t_k); one field evaluation per step.
template <class T>
Trajectory<T> euler_integrate(const VelocityField<T>& field, const Array<T>& z0, const TimeGrid& grid);

/// Explicit trapezoidal predictor-corrector; two field evaluations per step.
template <class T>
Trajectory<T> heun_integrate(const VelocityField<T>& field, const Array<T>& z0, const TimeGrid& grid);

template <class T>
Trajectory<T> integrate(const VelocityField<T>& field, const Array<T>& z0, const TimeGrid& grid, Solver solver);

template <class T>
Trajectory<T> euler_integrate(const GafModel<T>& model, const Array<T>& z0, const TimeGrid& grid,
                              const VelocityQuery& query, EvalStats* stats = nullptr) {
    return euler_integrate(ModelField<T>(model, query, stats), z0, grid);
}

template <class T>
Trajectory<T> heun_integrate(const GafModel<T>& model, const Array<T>& z0, const TimeGrid& grid,
                             const VelocityQuery& query, EvalStats* stats = nullptr) {
    return heun_integrate(ModelField<T>(model, query, stats), z0, grid);
}

/// Standard-normal latents (n x d) drawn from the latent stream; `tag` separates independent sets.
Array<float> sample_latents(std::size_t n, std::size_t d, std::uint64_t seed, std::uint64_t tag = 0);

/// CSV `step,t,x_0..x_{d-1}` for one row of a (possibly batched) trajectory.
template <class T>
std::string trajectory_csv(const Trajectory<T>& trajectory, std::size_t row = 0);

}  // namespace gaf
