#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gaf/sampler.hpp"

namespace gaf {

/// Produces the velocity field for any class query. Transport operations are
/// written against this interface so oracle fields and trained models share code.
template <class T>
class FieldSource {
public:
    virtual ~FieldSource() = default;
    virtual std::size_t num_classes() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::unique_ptr<VelocityField<T>> field(const VelocityQuery& query) const = 0;
};

template <class T>
class ModelSource final : public FieldSource<T> {
public:
    explicit ModelSource(const GafModel<T>& model, EvalStats* stats = nullptr) : model_(model), stats_(stats) {}
    std::size_t num_classes() const override { return model_.num_classes(); }
    std::size_t dim() const override { return model_.data_dim(); }
    std::unique_ptr<VelocityField<T>> field(const VelocityQuery& query) const override {
        return std::make_unique<ModelField<T>>(model_, query, stats_);
    }

private:
    const GafModel<T>& model_;
    EvalStats* stats_;
};

struct SampleOptions {
    std::size_t steps = 100;
    Schedule schedule = Schedule::linear;
    double t_eps = 1e-3;
};

struct TransportLeg {
    VelocityQuery query;
    Direction direction = Direction::forward;
    std::size_t steps = 100;
    Schedule schedule = Schedule::linear;
    double t_eps = 1e-3;
};

/// Legs run back to back; each starts from the previous leg's final state.
struct TransportPlan {
    std::vector<TransportLeg> legs;
};

template <class T>
struct PlanResult {
    std::vector<Trajectory<T>> legs;
    const Array<T>& final_state() const { return legs.back().final_state(); }
};

template <class T>
PlanResult<T> execute_plan(const FieldSource<T>& source, const Array<T>& z0, const TransportPlan& plan);

/// Forward Euler from noise under a single class.
template <class T>
Array<T> generate(const FieldSource<T>& source, std::size_t cls, const Array<T>& z0, const SampleOptions& opts);

/// Encode with class i (reverse to the noise terminal), decode with class j.
template <class T>
Array<T> encode_decode(const FieldSource<T>& source, const Array<T>& x, std::size_t i, std::size_t j,
                       const SampleOptions& opts);

/// encode_decode with the requirement i != j.
template <class T>
Array<T> cross_class_transport(const FieldSource<T>& source, const Array<T>& x, std::size_t i, std::size_t j,
                               const SampleOptions& opts);

/// One forward integration from the same z0 per alpha, with weights (1 - alpha) on i and alpha on j.
template <class T>
std::vector<Array<T>> interpolate_pair(const FieldSource<T>& source, std::size_t i, std::size_t j,
                                       const std::vector<double>& alphas, const Array<T>& z0,
                                       const SampleOptions& opts);

/// `count` uniform weights from 0 to 1 inclusive.
std::vector<double> uniform_alphas(std::size_t count);

template <class T>
struct CycleFrame {
    std::size_t leg = 0;
    double alpha = 0.0;
    VelocityQuery query;
    Array<T> sample;
};

template <class T>
struct CycleResult {
    std::vector<CycleFrame<T>> frames;
    /// Per-row Euclidean distance between the first and last frame.
    std::vector<double> closure;
    double max_closure() const;
};

/// Shared-latent cycle: every frame decodes the same z0 under the blended field of its leg.
template <class T>
CycleResult<T> cyclic_transport(const FieldSource<T>& source, const std::vector<std::size_t>& cycle,
                                const Array<T>& z0, std::size_t alpha_steps, const SampleOptions& opts);

/// Sequential alternative: starting from generate(c_0, z0), re-encode and decode
/// through each consecutive pair; closure compares the final state with the start.
template <class T>
CycleResult<T> chained_cycle(const FieldSource<T>& source, const std::vector<std::size_t>& cycle,
                             const Array<T>& z0, const SampleOptions& opts);

struct BaryWeights {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
};

/// Square-to-simplex map: alpha = u (1 - v), beta = (1 - u)(1 - v), gamma = v.
BaryWeights square_to_simplex(double u, double v);

template <class T>
struct BaryCell {
    std::size_t row = 0;
    std::size_t col = 0;
    double u = 0.0;
    double v = 0.0;
    BaryWeights weights;
    Array<T> sample;
};

/// R x R cells in row-major order; u follows the row index and v the column index.
template <class T>
struct BaryGrid {
    std::size_t resolution = 0;
    std::size_t classes[3] = {0, 0, 0};
    std::vector<BaryCell<T>> cells;
    const BaryCell<T>& at(std::size_t row, std::size_t col) const { return cells.at(row * resolution + col); }
};

template <class T>
BaryGrid<T> barycentric_grid(const FieldSource<T>& source, std::size_t i, std::size_t j, std::size_t k,
                             std::size_t resolution, const Array<T>& z0, const SampleOptions& opts);

VelocityQuery bary_query(std::size_t i, std::size_t j, std::size_t k, const BaryWeights& w, std::size_t num_classes);

/// `row,col,alpha,beta,gamma,x_0..` using latent `latent` of a batched grid.
template <class T>
std::string grid_csv(const BaryGrid<T>& grid, std::size_t latent = 0);

/// Manifest entries (leg, alpha, class weights) for exported frames.
template <class T>
nlohmann::json frames_manifest(const std::vector<CycleFrame<T>>& frames);

template <class T>
std::string points_csv(const Array<T>& points);

}  // namespace gaf
