#include "gaf/transport.hpp"

#include <cmath>
#include <sstream>

namespace gaf {

namespace {

void check_class(std::size_t cls, std::size_t n) {
    if (cls >= n) {
        throw ValueError("class index " + std::to_string(cls) + " out of range for " + std::to_string(n) + " classes");
    }
}

TimeGrid grid_for(const SampleOptions& opts, Direction dir) {
    return TimeGrid::make(opts.steps, opts.schedule, opts.t_eps, dir);
}

template <class T>
Array<T> run(const FieldSource<T>& source, const VelocityQuery& query, const Array<T>& z0, const TimeGrid& grid) {
    query.validate(source.num_classes());
    const auto field = source.field(query);
    return euler_integrate(*field, z0, grid).final_state();
}

template <class T>
double row_distance(const Array<T>& a, const Array<T>& b, std::size_t r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) {
        const double e = static_cast<double>(a.at(r, k)) - static_cast<double>(b.at(r, k));
        acc += e * e;
    }
    return std::sqrt(acc);
}

void check_cycle(const std::vector<std::size_t>& cycle, std::size_t n) {
    if (cycle.size() < 3) {
        throw ValueError("a cycle needs at least three entries, e.g. [i, j, i]");
    }
    if (cycle.front() != cycle.back()) {
        throw ValueError("a cycle must start and end at the same class");
    }
    for (std::size_t k = 0; k < cycle.size(); ++k) {
        check_class(cycle[k], n);
        if (k > 0 && cycle[k] == cycle[k - 1]) {
            throw ValueError("consecutive cycle entries must differ");
        }
    }
}

}  // namespace

template <class T>
PlanResult<T> execute_plan(const FieldSource<T>& source, const Array<T>& z0, const TransportPlan& plan) {
    if (plan.legs.empty()) {
        throw ValueError("transport plan has no legs");
    }
    PlanResult<T> out;
    const Array<T>* state = &z0;
    for (const auto& leg : plan.legs) {
        if (leg.steps == 0) {
            throw ValueError("transport legs need at least one step");
        }
        leg.query.validate(source.num_classes());
        const auto field = source.field(leg.query);
        out.legs.push_back(euler_integrate(*field, *state, TimeGrid::make(leg.steps, leg.schedule, leg.t_eps, leg.direction)));
        state = &out.legs.back().final_state();
    }
    return out;
}

template <class T>
Array<T> generate(const FieldSource<T>& source, std::size_t cls, const Array<T>& z0, const SampleOptions& opts) {
    check_class(cls, source.num_classes());
    return run(source, VelocityQuery::single(cls, source.num_classes()), z0, grid_for(opts, Direction::forward));
}

template <class T>
Array<T> encode_decode(const FieldSource<T>& source, const Array<T>& x, std::size_t i, std::size_t j,
                       const SampleOptions& opts) {
    check_class(i, source.num_classes());
    check_class(j, source.num_classes());
    const std::size_t n = source.num_classes();
    TransportPlan plan{{TransportLeg{VelocityQuery::single(i, n), Direction::reverse, opts.steps, opts.schedule, opts.t_eps},
                        TransportLeg{VelocityQuery::single(j, n), Direction::forward, opts.steps, opts.schedule, opts.t_eps}}};
    return execute_plan(source, x, plan).final_state();
}

template <class T>
Array<T> cross_class_transport(const FieldSource<T>& source, const Array<T>& x, std::size_t i, std::size_t j,
                               const SampleOptions& opts) {
    if (i == j) {
        throw ValueError("cross-class transport needs two different classes");
    }
    return encode_decode(source, x, i, j, opts);
}

template <class T>
std::vector<Array<T>> interpolate_pair(const FieldSource<T>& source, std::size_t i, std::size_t j,
                                       const std::vector<double>& alphas, const Array<T>& z0,
                                       const SampleOptions& opts) {
    check_class(i, source.num_classes());
    check_class(j, source.num_classes());
    const auto grid = grid_for(opts, Direction::forward);
    std::vector<Array<T>> out;
    out.reserve(alphas.size());
    for (double a : alphas) {
        out.push_back(run(source, VelocityQuery::pair(i, j, a, source.num_classes()), z0, grid));
    }
    return out;
}

std::vector<double> uniform_alphas(std::size_t count) {
    if (count < 2) {
        throw ValueError("need at least two interpolation weights");
    }
    std::vector<double> out(count);
    for (std::size_t k = 0; k < count; ++k) {
        out[k] = static_cast<double>(k) / static_cast<double>(count - 1);
    }
    return out;
}

template <class T>
double CycleResult<T>::max_closure() const {
    double m = 0.0;
    for (double c : closure) m = std::max(m, c);
    return m;
}

template <class T>
CycleResult<T> cyclic_transport(const FieldSource<T>& source, const std::vector<std::size_t>& cycle,
                                const Array<T>& z0, std::size_t alpha_steps, const SampleOptions& opts) {
    check_cycle(cycle, source.num_classes());
    const auto alphas = uniform_alphas(alpha_steps);
    const auto grid = grid_for(opts, Direction::forward);
    CycleResult<T> out;
    for (std::size_t leg = 0; leg + 1 < cycle.size(); ++leg) {
        for (double a : alphas) {
            auto q = VelocityQuery::pair(cycle[leg], cycle[leg + 1], a, source.num_classes());
            auto sample = run(source, q, z0, grid);
            out.frames.push_back(CycleFrame<T>{leg, a, std::move(q), std::move(sample)});
        }
    }
    const auto& first = out.frames.front().sample;
    const auto& last = out.frames.back().sample;
    for (std::size_t r = 0; r < first.rows(); ++r) {
        out.closure.push_back(row_distance(first, last, r));
    }
    return out;
}

template <class T>
CycleResult<T> chained_cycle(const FieldSource<T>& source, const std::vector<std::size_t>& cycle,
                             const Array<T>& z0, const SampleOptions& opts) {
    check_cycle(cycle, source.num_classes());
    const std::size_t n = source.num_classes();
    CycleResult<T> out;
    out.frames.push_back(CycleFrame<T>{0, 0.0, VelocityQuery::single(cycle[0], n), generate(source, cycle[0], z0, opts)});
    for (std::size_t leg = 0; leg + 1 < cycle.size(); ++leg) {
        auto next = encode_decode(source, out.frames.back().sample, cycle[leg], cycle[leg + 1], opts);
        out.frames.push_back(CycleFrame<T>{leg, 1.0, VelocityQuery::single(cycle[leg + 1], n), std::move(next)});
    }
    const auto& first = out.frames.front().sample;
    const auto& last = out.frames.back().sample;
    for (std::size_t r = 0; r < first.rows(); ++r) {
        out.closure.push_back(row_distance(first, last, r));
    }
    return out;
}

BaryWeights square_to_simplex(double u, double v) {
    if (!(u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0)) {
        throw ValueError("barycentric coordinates must lie in [0, 1]^2");
    }
    return BaryWeights{u * (1.0 - v), (1.0 - u) * (1.0 - v), v};
}

VelocityQuery bary_query(std::size_t i, std::size_t j, std::size_t k, const BaryWeights& w, std::size_t num_classes) {
    check_class(i, num_classes);
    check_class(j, num_classes);
    check_class(k, num_classes);
    if (i == j || j == k || i == k) {
        throw ValueError("barycentric blending needs three distinct classes");
    }
    std::vector<double> weights(num_classes, 0.0);
    weights[i] = w.alpha;
    weights[j] = w.beta;
    weights[k] = w.gamma;
    return VelocityQuery::blend(std::move(weights));
}

template <class T>
BaryGrid<T> barycentric_grid(const FieldSource<T>& source, std::size_t i, std::size_t j, std::size_t k,
                             std::size_t resolution, const Array<T>& z0, const SampleOptions& opts) {
    if (resolution < 2) {
        throw ValueError("barycentric grid resolution must be at least 2");
    }
    const auto grid = grid_for(opts, Direction::forward);
    BaryGrid<T> out;
    out.resolution = resolution;
    out.classes[0] = i;
    out.classes[1] = j;
    out.classes[2] = k;
    const double step = 1.0 / static_cast<double>(resolution - 1);
    for (std::size_t r = 0; r < resolution; ++r) {
        for (std::size_t c = 0; c < resolution; ++c) {
            const double u = r + 1 == resolution ? 1.0 : static_cast<double>(r) * step;
            const double v = c + 1 == resolution ? 1.0 : static_cast<double>(c) * step;
            const auto w = square_to_simplex(u, v);
            auto sample = run(source, bary_query(i, j, k, w, source.num_classes()), z0, grid);
            out.cells.push_back(BaryCell<T>{r, c, u, v, w, std::move(sample)});
        }
    }
    return out;
}

template <class T>
std::string grid_csv(const BaryGrid<T>& grid, std::size_t latent) {
    std::ostringstream os;
    os.precision(17);
    const std::size_t d = grid.cells.front().sample.cols();
    os << "row,col,alpha,beta,gamma";
    for (std::size_t k = 0; k < d; ++k) os << ",x_" << k;
    os << '\n';
    for (const auto& cell : grid.cells) {
        if (latent >= cell.sample.rows()) throw ValueError("grid latent index out of range");
        os << cell.row << ',' << cell.col << ',' << cell.weights.alpha << ',' << cell.weights.beta << ','
           << cell.weights.gamma;
        for (std::size_t k = 0; k < d; ++k) os << ',' << cell.sample.at(latent, k);
        os << '\n';
    }
    return os.str();
}

template <class T>
nlohmann::json frames_manifest(const std::vector<CycleFrame<T>>& frames) {
    auto out = nlohmann::json::array();
    for (std::size_t f = 0; f < frames.size(); ++f) {
        out.push_back({{"frame", f}, {"leg", frames[f].leg}, {"alpha", frames[f].alpha}, {"weights", frames[f].query.weights}});
    }
    return out;
}

template <class T>
std::string points_csv(const Array<T>& points) {
    std::ostringstream os;
    os.precision(9);
    const std::size_t d = points.cols();
    for (std::size_t k = 0; k < d; ++k) os << (k ? "," : "") << "x_" << k;
    os << '\n';
    for (std::size_t r = 0; r < points.rows(); ++r) {
        for (std::size_t k = 0; k < d; ++k) os << (k ? "," : "") << points.at(r, k);
        os << '\n';
    }
    return os.str();
}

#define GAF_INSTANTIATE_TRANSPORT(T)                                                                                   \
    template PlanResult<T> execute_plan(const FieldSource<T>&, const Array<T>&, const TransportPlan&);                 \
    template Array<T> generate(const FieldSource<T>&, std::size_t, const Array<T>&, const SampleOptions&);              \
    template Array<T> encode_decode(const FieldSource<T>&, const Array<T>&, std::size_t, std::size_t,                   \
                                    const SampleOptions&);                                                             \
    template Array<T> cross_class_transport(const FieldSource<T>&, const Array<T>&, std::size_t, std::size_t,           \
                                            const SampleOptions&);                                                     \
    template std::vector<Array<T>> interpolate_pair(const FieldSource<T>&, std::size_t, std::size_t,                   \
                                                    const std::vector<double>&, const Array<T>&, const SampleOptions&); \
    template struct CycleResult<T>;                                                                                    \
    template CycleResult<T> cyclic_transport(const FieldSource<T>&, const std::vector<std::size_t>&, const Array<T>&,   \
                                             std::size_t, const SampleOptions&);                                       \
    template CycleResult<T> chained_cycle(const FieldSource<T>&, const std::vector<std::size_t>&, const Array<T>&,      \
                                          const SampleOptions&);                                                       \
    template BaryGrid<T> barycentric_grid(const FieldSource<T>&, std::size_t, std::size_t, std::size_t, std::size_t,    \
                                          const Array<T>&, const SampleOptions&);                                      \
    template std::string grid_csv(const BaryGrid<T>&, std::size_t);                                                    \
    template nlohmann::json frames_manifest(const std::vector<CycleFrame<T>>&);                                        \
    template std::string points_csv(const Array<T>&);

GAF_INSTANTIATE_TRANSPORT(float)
GAF_INSTANTIATE_TRANSPORT(double)

#undef GAF_INSTANTIATE_TRANSPORT

}  // namespace gaf
