#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gaf/data.hpp"
#include "gaf/sampler.hpp"

namespace gaf {

/// 2 E|a - b| - E|a - a'| - E|b - b'| over all ordered pairs (V-statistic).
/// Symmetric bit-for-bit: the operands are put in a canonical order first.
double energy_distance(const Array<float>& a, const Array<float>& b);
double energy_distance(const Array<double>& a, const Array<double>& b);

/// Exact 2-Wasserstein distance between two 1D empirical distributions.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

/// P unit directions (P x d) drawn from the projection stream.
Array<double> projection_directions(std::size_t dim, std::size_t count, std::uint64_t seed);

/// Mean over projections of the 1D W2 between the projected sets.
double sliced_wasserstein(const Array<float>& a, const Array<float>& b, std::size_t projections, std::uint64_t seed);
double sliced_wasserstein(const Array<double>& a, const Array<double>& b, std::size_t projections, std::uint64_t seed);

enum class EndpointSide { j_at_noise, k_at_data };

/// RMSE of J vs z_y on fresh bridges at t = t_eps, or of K vs z_x at t = 1 - t_eps.
double endpoint_rmse(const GafModel<float>& model, const LabeledDataset& dataset, EndpointSide side,
                     std::size_t samples, std::uint64_t seed, double t_eps = 1e-3);

/// Mean of |v(x_t, 1 - t) + v(x_t, t)| / (|v(x_t, t)| + 1e-8) over random bridges,
/// each evaluated under the class of its data endpoint.
double antisymmetry_residual(const GafModel<float>& model, const LabeledDataset& dataset, std::size_t samples,
                             std::uint64_t seed, double t_eps = 1e-3);

/// Nearest-centroid classifier fit on labeled points.
class NearestCentroid {
public:
    NearestCentroid(const Array<float>& points, const std::vector<std::uint32_t>& labels, std::size_t num_classes);
    explicit NearestCentroid(const LabeledDataset& dataset)
        : NearestCentroid(dataset.points, dataset.labels, dataset.num_classes()) {}

    std::size_t predict(std::span<const float> x) const;
    std::vector<std::size_t> predict(const Array<float>& points) const;
    /// (|x - mu_j|^2 - |x - mu_i|^2) / 2: positive when x is closer to class i than to class j.
    double score(std::span<const float> x, std::size_t i, std::size_t j) const;
    double accuracy(const Array<float>& points, const std::vector<std::uint32_t>& labels) const;
    const Array<double>& centroids() const noexcept { return centroids_; }

private:
    Array<double> centroids_;
};

struct EvalOptions {
    std::size_t samples_per_class = 2000;
    std::size_t steps = 250;
    Schedule schedule = Schedule::linear;
    std::size_t projections = 64;
    std::size_t probe_samples = 2000;
    double t_eps = 1e-3;
    std::uint64_t seed = 0;
};

struct EvalReport {
    std::vector<double> energy;
    std::vector<double> sliced_w2;
    double endpoint_rmse_j = 0.0;
    double endpoint_rmse_k = 0.0;
    double antisymmetry = 0.0;
    std::size_t samples = 0;
    std::size_t steps = 0;
    std::size_t projections = 0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static std::string csv_header(std::size_t num_classes);
    std::string csv_row() const;
};

/// Generates samples_per_class points per class and compares each class against `reference`.
EvalReport evaluate(const GafModel<float>& model, const LabeledDataset& train, const LabeledDataset& reference,
                    const EvalOptions& options);

/// Per-class energy distance between the first n points of each class in `a` and `b`.
std::vector<double> per_class_energy(const LabeledDataset& a, const LabeledDataset& b, std::size_t n);

}  // namespace gaf
