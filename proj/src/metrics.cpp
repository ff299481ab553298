#include "gaf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gaf/rng.hpp"
#include "gaf/transport.hpp"

namespace gaf {

namespace {

template <class T>
void check_sets(const Array<T>& a, const Array<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.rows() == 0 || b.rows() == 0) {
        throw ValueError("point sets must be non-empty (rows x d) arrays");
    }
    if (a.cols() != b.cols()) {
        throw ShapeError("point sets differ in dimension: " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
    }
}

template <class T>
double mean_pair_distance(const Array<T>& a, const Array<T>& b) {
    const std::size_t d = a.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ra = a.row(i);
        double row_sum = 0.0;
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto rb = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double e = static_cast<double>(ra[k]) - static_cast<double>(rb[k]);
                acc += e * e;
            }
            row_sum += std::sqrt(acc);
        }
        total += row_sum;
    }
    return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

template <class T>
bool canonical_less(const Array<T>& a, const Array<T>& b) {
    if (a.rows() != b.rows()) return a.rows() < b.rows();
    const auto va = a.values();
    const auto vb = b.values();
    return std::lexicographical_compare(va.begin(), va.end(), vb.begin(), vb.end());
}

template <class T>
double energy_impl(const Array<T>& a, const Array<T>& b) {
    check_sets(a, b);
    if (canonical_less(b, a)) {
        return energy_impl(b, a);
    }
    const double cross = mean_pair_distance(a, b);
    const double within_a = mean_pair_distance(a, a);
    const double within_b = mean_pair_distance(b, b);
    return std::max(0.0, 2.0 * cross - within_a - within_b);
}

template <class T>
std::vector<double> project(const Array<T>& pts, std::span<const double> dir) {
    std::vector<double> out(pts.rows());
    for (std::size_t r = 0; r < pts.rows(); ++r) {
        const auto row = pts.row(r);
        double acc = 0.0;
        for (std::size_t k = 0; k < dir.size(); ++k) acc += static_cast<double>(row[k]) * dir[k];
        out[r] = acc;
    }
    return out;
}

template <class T>
double sliced_impl(const Array<T>& a, const Array<T>& b, std::size_t projections, std::uint64_t seed) {
    check_sets(a, b);
    if (projections == 0) {
        throw ValueError("sliced Wasserstein needs at least one projection");
    }
    const auto dirs = projection_directions(a.cols(), projections, seed);
    double total = 0.0;
    for (std::size_t p = 0; p < projections; ++p) {
        total += wasserstein_1d(project(a, dirs.row(p)), project(b, dirs.row(p)));
    }
    return total / static_cast<double>(projections);
}

struct Bridges {
    Array<float> z_x;
    Array<float> z_y;
    Array<float> x_t;
    std::vector<float> times;
    std::vector<std::size_t> classes;
};

/// Fresh bridges for evaluation; t_of(i) supplies the time of sample i.
template <class F>
Bridges metric_bridges(const LabeledDataset& dataset, std::size_t samples, std::uint64_t seed, F t_of) {
    if (samples == 0) {
        throw ValueError("metric needs at least one sample");
    }
    const CounterRng rng(seed);
    const std::size_t d = dataset.dim();
    Bridges b{Array<float>(Shape{samples, d}), Array<float>(Shape{samples, d}), Array<float>(Shape{samples, d}),
              std::vector<float>(samples), std::vector<std::size_t>(samples)};
    for (std::size_t i = 0; i < samples; ++i) {
        const auto s = static_cast<std::uint32_t>(i);
        const auto r = rng.below(dataset.size(), Stream::metric, 0, s);
        b.classes[i] = dataset.labels[r];
        b.times[i] = static_cast<float>(t_of(rng, s));
        for (std::size_t k = 0; k < d; ++k) {
            const float zx = dataset.points.at(r, k);
            const float zy = static_cast<float>(rng.normal(Stream::metric, 1, s, static_cast<std::uint32_t>(k)));
            b.z_x.at(i, k) = zx;
            b.z_y.at(i, k) = zy;
            b.x_t.at(i, k) = (1.0f - b.times[i]) * zy + b.times[i] * zx;
        }
    }
    return b;
}

}  // namespace

double energy_distance(const Array<float>& a, const Array<float>& b) { return energy_impl(a, b); }
double energy_distance(const Array<double>& a, const Array<double>& b) { return energy_impl(a, b); }

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) {
        throw ValueError("Wasserstein distance of an empty set");
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    // Integrate the squared quantile difference over the merged breakpoints i/n and j/m,
    // compared exactly as i*m vs j*n.
    double acc = 0.0;
    std::size_t i = 0, j = 0;
    std::size_t prev = 0;  // in units of 1/(n*m)
    while (i < n && j < m) {
        const std::size_t next_a = (i + 1) * m;
        const std::size_t next_b = (j + 1) * n;
        const std::size_t next = std::min(next_a, next_b);
        const double e = a[i] - b[j];
        acc += e * e * static_cast<double>(next - prev);
        prev = next;
        if (next_a == next) ++i;
        if (next_b == next) ++j;
    }
    return std::sqrt(acc / (static_cast<double>(n) * static_cast<double>(m)));
}

Array<double> projection_directions(std::size_t dim, std::size_t count, std::uint64_t seed) {
    if (dim == 0 || count == 0) {
        throw ValueError("projection directions need positive dimension and count");
    }
    const CounterRng rng(seed);
    Array<double> dirs(Shape{count, dim});
    for (std::size_t p = 0; p < count; ++p) {
        auto row = dirs.row(p);
        for (std::uint32_t attempt = 0;; ++attempt) {
            double norm = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                row[k] = rng.normal(Stream::projection, p, static_cast<std::uint32_t>(k), attempt);
                norm += row[k] * row[k];
            }
            norm = std::sqrt(norm);
            if (norm > 1e-12) {
                for (auto& x : row) x /= norm;
                break;
            }
        }
    }
    return dirs;
}

double sliced_wasserstein(const Array<float>& a, const Array<float>& b, std::size_t projections, std::uint64_t seed) {
    return sliced_impl(a, b, projections, seed);
}

double sliced_wasserstein(const Array<double>& a, const Array<double>& b, std::size_t projections,
                          std::uint64_t seed) {
    return sliced_impl(a, b, projections, seed);
}

double endpoint_rmse(const GafModel<float>& model, const LabeledDataset& dataset, EndpointSide side,
                     std::size_t samples, std::uint64_t seed, double t_eps) {
    const double t = side == EndpointSide::j_at_noise ? t_eps : 1.0 - t_eps;
    const auto b = metric_bridges(dataset, samples, seed, [&](const CounterRng&, std::uint32_t) { return t; });
    const auto out = twin_forward_batch(model, b.x_t, std::span<const float>(b.times), std::span<const std::size_t>(b.classes));
    const auto& pred = side == EndpointSide::j_at_noise ? out.j : out.k;
    const auto& target = side == EndpointSide::j_at_noise ? b.z_y : b.z_x;
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

double antisymmetry_residual(const GafModel<float>& model, const LabeledDataset& dataset, std::size_t samples,
                             std::uint64_t seed, double t_eps) {
    const auto b = metric_bridges(dataset, samples, seed, [&](const CounterRng& rng, std::uint32_t s) {
        return t_eps + (1.0 - 2.0 * t_eps) * rng.uniform(Stream::metric, 2, s);
    });
    std::vector<float> flipped(samples);
    for (std::size_t i = 0; i < samples; ++i) flipped[i] = 1.0f - b.times[i];
    const std::span<const std::size_t> cls(b.classes);
    const auto fwd = twin_forward_batch(model, b.x_t, std::span<const float>(b.times), cls);
    const auto rev = twin_forward_batch(model, b.x_t, std::span<const float>(flipped), cls);
    const std::size_t d = model.data_dim();
    double total = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double v = static_cast<double>(fwd.k.at(i, k)) - static_cast<double>(fwd.j.at(i, k));
            const double w = static_cast<double>(rev.k.at(i, k)) - static_cast<double>(rev.j.at(i, k));
            num += (v + w) * (v + w);
            den += v * v;
        }
        total += std::sqrt(num) / (std::sqrt(den) + 1e-8);
    }
    return total / static_cast<double>(samples);
}

// ---------------------------------------------------------------------------

NearestCentroid::NearestCentroid(const Array<float>& points, const std::vector<std::uint32_t>& labels,
                                 std::size_t num_classes)
    : centroids_(Shape{std::max<std::size_t>(num_classes, 1), std::max<std::size_t>(points.cols(), 1)}) {
    if (num_classes == 0 || points.rows() != labels.size() || points.rank() != 2) {
        throw ValueError("classifier needs one label per point and at least one class");
    }
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] >= num_classes) throw ValueError("label out of range");
        ++counts[labels[r]];
        for (std::size_t k = 0; k < points.cols(); ++k) centroids_.at(labels[r], k) += points.at(r, k);
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (counts[c] == 0) throw ValueError("class " + std::to_string(c) + " has no points");
        for (auto& x : centroids_.row(c)) x /= static_cast<double>(counts[c]);
    }
}

std::size_t NearestCentroid::predict(std::span<const float> x) const {
    std::size_t best = 0;
    double best_d = 0.0;
    for (std::size_t c = 0; c < centroids_.rows(); ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double e = static_cast<double>(x[k]) - centroids_.at(c, k);
            acc += e * e;
        }
        if (c == 0 || acc < best_d) {
            best = c;
            best_d = acc;
        }
    }
    return best;
}

std::vector<std::size_t> NearestCentroid::predict(const Array<float>& points) const {
    std::vector<std::size_t> out(points.rows());
    for (std::size_t r = 0; r < points.rows(); ++r) out[r] = predict(points.row(r));
    return out;
}

double NearestCentroid::score(std::span<const float> x, std::size_t i, std::size_t j) const {
    double di = 0.0, dj = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double ei = static_cast<double>(x[k]) - centroids_.at(i, k);
        const double ej = static_cast<double>(x[k]) - centroids_.at(j, k);
        di += ei * ei;
        dj += ej * ej;
    }
    return 0.5 * (dj - di);
}

double NearestCentroid::accuracy(const Array<float>& points, const std::vector<std::uint32_t>& labels) const {
    const auto pred = predict(points);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < pred.size(); ++r) hits += pred[r] == labels.at(r);
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------

nlohmann::json EvalReport::to_json() const {
    return nlohmann::json{{"energy_distance", energy},
                          {"sliced_wasserstein", sliced_w2},
                          {"endpoint_rmse_j", endpoint_rmse_j},
                          {"endpoint_rmse_k", endpoint_rmse_k},
                          {"antisymmetry_residual", antisymmetry},
                          {"samples", samples},
                          {"steps", steps},
                          {"projections", projections},
                          {"seed", seed}};
}

std::string EvalReport::csv_header(std::size_t num_classes) {
    std::ostringstream os;
    os << "seed,steps,samples";
    for (std::size_t c = 0; c < num_classes; ++c) os << ",energy_" << c;
    for (std::size_t c = 0; c < num_classes; ++c) os << ",sw_" << c;
    os << ",endpoint_rmse_j,endpoint_rmse_k,antisymmetry";
    return os.str();
}

std::string EvalReport::csv_row() const {
    std::ostringstream os;
    os.precision(17);
    os << seed << ',' << steps << ',' << samples;
    for (double e : energy) os << ',' << e;
    for (double s : sliced_w2) os << ',' << s;
    os << ',' << endpoint_rmse_j << ',' << endpoint_rmse_k << ',' << antisymmetry;
    return os.str();
}

std::vector<double> per_class_energy(const LabeledDataset& a, const LabeledDataset& b, std::size_t n) {
    if (a.num_classes() != b.num_classes()) {
        throw ValueError("datasets have different class counts");
    }
    std::vector<double> out;
    for (std::size_t c = 0; c < a.num_classes(); ++c) {
        const auto pa = a.class_points(c);
        const auto pb = b.class_points(c);
        const std::size_t na = std::min(n, pa.rows());
        const std::size_t nb = std::min(n, pb.rows());
        Array<float> sa(Shape{na, a.dim()}, std::vector<float>(pa.data(), pa.data() + na * a.dim()));
        Array<float> sb(Shape{nb, b.dim()}, std::vector<float>(pb.data(), pb.data() + nb * b.dim()));
        out.push_back(energy_distance(sa, sb));
    }
    return out;
}

EvalReport evaluate(const GafModel<float>& model, const LabeledDataset& train, const LabeledDataset& reference,
                    const EvalOptions& options) {
    if (reference.num_classes() != model.num_classes() || reference.dim() != model.data_dim()) {
        throw ValueError("reference data does not match the model");
    }
    EvalReport report;
    report.samples = options.samples_per_class;
    report.steps = options.steps;
    report.projections = options.projections;
    report.seed = options.seed;
    const ModelSource<float> source(model);
    const SampleOptions sample{options.steps, options.schedule, options.t_eps};
    for (std::size_t c = 0; c < model.num_classes(); ++c) {
        const auto z0 = sample_latents(options.samples_per_class, model.data_dim(), options.seed, c);
        const auto generated = generate(source, c, z0, sample);
        const auto ref = reference.class_points(c);
        report.energy.push_back(energy_distance(generated, ref));
        report.sliced_w2.push_back(sliced_wasserstein(generated, ref, options.projections, options.seed));
    }
    report.endpoint_rmse_j = endpoint_rmse(model, train, EndpointSide::j_at_noise, options.probe_samples, options.seed, options.t_eps);
    report.endpoint_rmse_k = endpoint_rmse(model, train, EndpointSide::k_at_data, options.probe_samples, options.seed, options.t_eps);
    report.antisymmetry = antisymmetry_residual(model, train, options.probe_samples, options.seed, options.t_eps);
    return report;
}

}  // namespace gaf
