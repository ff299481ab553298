#include "gaf/sampler.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "gaf/rng.hpp"

namespace gaf {

std::string to_string(Schedule s) {
    return s == Schedule::linear ? "linear" : "cosine";
}

Schedule parse_schedule(const std::string& name) {
    if (name == "linear") return Schedule::linear;
    if (name == "cosine") return Schedule::cosine;
    throw ValueError("unknown schedule '" + name + "' (expected linear or cosine)");
}

std::string to_string(Solver s) {
    return s == Solver::euler ? "euler" : "heun";
}

Solver parse_solver(const std::string& name) {
    if (name == "euler") return Solver::euler;
    if (name == "heun") return Solver::heun;
    throw ValueError("unknown solver '" + name + "' (expected euler or heun)");
}

TimeGrid TimeGrid::make(std::size_t steps, Schedule schedule, double t_eps, Direction direction) {
    if (steps == 0) {
        throw ValueError("time grid needs at least one step");
    }
    if (!(t_eps >= 0.0 && t_eps < 0.5)) {
        throw ValueError("t_eps must lie in [0, 0.5)");
    }
    TimeGrid g{steps, schedule, t_eps, direction, std::vector<double>(steps + 1)};
    const double span = 1.0 - 2.0 * t_eps;
    for (std::size_t k = 0; k <= steps; ++k) {
        const double frac = static_cast<double>(k) / static_cast<double>(steps);
        const double shaped = schedule == Schedule::linear ? frac : 0.5 * (1.0 - std::cos(std::numbers::pi * frac));
        g.nodes[k] = t_eps + span * shaped;
    }
    g.nodes.back() = 1.0 - t_eps;
    if (direction == Direction::reverse) {
        std::reverse(g.nodes.begin(), g.nodes.end());
    }
    return g;
}

TimeGrid TimeGrid::reversed() const {
    TimeGrid g = *this;
    g.direction = direction == Direction::forward ? Direction::reverse : Direction::forward;
    std::reverse(g.nodes.begin(), g.nodes.end());
    return g;
}

namespace {

template <class T>
void check_inputs(const VelocityField<T>& field, const Array<T>& z0, const TimeGrid& grid) {
    if (grid.nodes.size() != grid.steps + 1 || grid.steps == 0) {
        throw ValueError("malformed time grid");
    }
    if (z0.cols() != field.dim()) {
        throw ShapeError("initial state " + shape_string(z0.shape()) + " does not match field dimension " +
                         std::to_string(field.dim()));
    }
    if (!z0.all_finite()) {
        throw NonFiniteError("initial state is not finite");
    }
}

template <class T>
void check_state(const Array<T>& z, std::size_t step) {
    if (!z.all_finite()) {
        throw NonFiniteError("state became non-finite at step " + std::to_string(step));
    }
}

template <class T>
Array<T> checked_eval(const VelocityField<T>& field, const Array<T>& z, double t) {
    Array<T> v = field(z, t);
    if (v.shape() != z.shape()) {
        throw ShapeError("velocity field returned shape " + shape_string(v.shape()) + " for state " +
                         shape_string(z.shape()));
    }
    return v;
}

}  // namespace

template <class T>
Trajectory<T> euler_integrate(const VelocityField<T>& field, const Array<T>& z0, const TimeGrid& grid) {
    check_inputs(field, z0, grid);
    Trajectory<T> traj;
    traj.times = grid.nodes;
    traj.states.reserve(grid.steps + 1);
    traj.states.push_back(z0);
    for (std::size_t k = 0; k < grid.steps; ++k) {
        const auto& z = traj.states.back();
        const Array<T> v = checked_eval(field, z, grid.nodes[k]);
        const T h = static_cast<T>(grid.nodes[k + 1] - grid.nodes[k]);
        Array<T> next = z;
        for (std::size_t i = 0; i < next.size(); ++i) {
            next[i] += h * v[i];
        }
        check_state(next, k + 1);
        traj.states.push_back(std::move(next));
    }
    return traj;
}

template <class T>
Trajectory<T> heun_integrate(const VelocityField<T>& field, const Array<T>& z0, const TimeGrid& grid) {
    check_inputs(field, z0, grid);
    Trajectory<T> traj;
    traj.times = grid.nodes;
    traj.states.reserve(grid.steps + 1);
    traj.states.push_back(z0);
    for (std::size_t k = 0; k < grid.steps; ++k) {
        const auto& z = traj.states.back();
        const double dt = grid.nodes[k + 1] - grid.nodes[k];
        const T h = static_cast<T>(dt);
        const T half = static_cast<T>(dt / 2);
        const Array<T> v0 = checked_eval(field, z, grid.nodes[k]);
        Array<T> predictor = z;
        for (std::size_t i = 0; i < predictor.size(); ++i) {
            predictor[i] += h * v0[i];
        }
        check_state(predictor, k + 1);
        const Array<T> v1 = checked_eval(field, predictor, grid.nodes[k + 1]);
        Array<T> next = z;
        for (std::size_t i = 0; i < next.size(); ++i) {
            next[i] += half * (v0[i] + v1[i]);
        }
        check_state(next, k + 1);
        traj.states.push_back(std::move(next));
    }
    return traj;
}

template <class T>
Trajectory<T> integrate(const VelocityField<T>& field, const Array<T>& z0, const TimeGrid& grid, Solver solver) {
    return solver == Solver::euler ? euler_integrate(field, z0, grid) : heun_integrate(field, z0, grid);
}

Array<float> sample_latents(std::size_t n, std::size_t d, std::uint64_t seed, std::uint64_t tag) {
    if (n == 0 || d == 0) {
        throw ValueError("latent batch must be non-empty");
    }
    const CounterRng rng(seed);
    Array<float> z(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            z.at(i, k) = static_cast<float>(rng.normal(Stream::latent, tag, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(k)));
        }
    }
    return z;
}

template <class T>
std::string trajectory_csv(const Trajectory<T>& trajectory, std::size_t row) {
    std::ostringstream os;
    os.precision(9);
    const std::size_t d = trajectory.states.front().cols();
    os << "step,t";
    for (std::size_t k = 0; k < d; ++k) os << ",x_" << k;
    os << '\n';
    for (std::size_t s = 0; s < trajectory.states.size(); ++s) {
        const auto& z = trajectory.states[s];
        if (row >= z.rows()) throw ValueError("trajectory row out of range");
        os << s << ',' << trajectory.times[s];
        for (std::size_t k = 0; k < d; ++k) os << ',' << z.at(row, k);
        os << '\n';
    }
    return os.str();
}

#define GAF_INSTANTIATE_SAMPLER(T)                                                                     \
    template Trajectory<T> euler_integrate(const VelocityField<T>&, const Array<T>&, const TimeGrid&); \
    template Trajectory<T> heun_integrate(const VelocityField<T>&, const Array<T>&, const TimeGrid&);  \
    template Trajectory<T> integrate(const VelocityField<T>&, const Array<T>&, const TimeGrid&, Solver); \
    template std::string trajectory_csv(const Trajectory<T>&, std::size_t);

GAF_INSTANTIATE_SAMPLER(float)
GAF_INSTANTIATE_SAMPLER(double)

#undef GAF_INSTANTIATE_SAMPLER

}  // namespace gaf
