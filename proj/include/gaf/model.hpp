#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gaf/array.hpp"
#include "gaf/tape.hpp"

namespace gaf {

struct GafConfig {
    std::size_t data_dim = 2;
    std::size_t trunk_width = 128;
    std::size_t trunk_depth = 3;
    /// Width of the sinusoidal time features and of the conditioning vector.
    std::size_t time_embed = 32;
    std::size_t num_classes = 1;
    /// Hidden width of the two-layer heads; 0 means 2 * trunk_width.
    std::size_t head_hidden = 0;
    /// 2 = Linear -> gelu -> Linear, 1 = a single Linear projection.
    std::size_t head_layers = 2;
    /// Add the class embedding to the trunk's conditioning vector.
    bool class_conditioning = true;
    /// Zero the final layer of every head at initialization.
    bool zero_init_heads = true;
    std::uint64_t seed = 0;

    std::size_t effective_head_hidden() const { return head_hidden ? head_hidden : 2 * trunk_width; }
    void validate() const;

    friend bool operator==(const GafConfig&, const GafConfig&) = default;
};

/// Total trainable scalars for a configuration.
std::size_t parameter_count(const GafConfig& config);

/// Class weights for a velocity evaluation: one-hot for a single class,
/// convex weights for pairwise or barycentric blends.
struct VelocityQuery {
    std::vector<double> weights;

    static VelocityQuery single(std::size_t cls, std::size_t num_classes);
    static VelocityQuery pair(std::size_t i, std::size_t j, double alpha, std::size_t num_classes);
    static VelocityQuery blend(std::vector<double> weights);

    /// Throws ValueError when empty, non-finite, sized wrongly, or not summing to 1 within 1e-9.
    void validate(std::size_t num_classes) const;
    std::vector<std::size_t> active_classes() const;

    friend bool operator==(const VelocityQuery&, const VelocityQuery&) = default;
};

/// Evaluation counters; incremented once per batched head or trunk pass.
struct EvalStats {
    std::uint64_t trunk = 0;
    std::uint64_t j_head = 0;
    std::uint64_t k_head = 0;
};

template <class T>
struct TwinOutput {
    Array<T> features;
    Array<T> j;
    Array<T> k;
    Array<T> j_res;
    Array<T> k_res;
};

/// Lazily registers model parameters on a tape, each at most once.
template <class T>
class ParamBinder {
public:
    ParamBinder(Tape<T>& tape, const ParameterSet<T>& params) : tape_(tape), params_(params), vars_(params.size()) {}

    Var operator()(std::size_t index);
    Var operator()(std::string_view name) { return (*this)(params_.index_of(name)); }
    Tape<T>& tape() { return tape_; }

private:
    Tape<T>& tape_;
    const ParameterSet<T>& params_;
    std::vector<std::optional<Var>> vars_;
};

/// Sinusoidal time features interleaved as (sin w0 t, cos w0 t, sin w1 t, ...),
/// frequencies geometrically spaced from 1 to 1000.
template <class T>
Array<T> sinusoidal_features(double t, std::size_t size);

/// Shared trunk, one J head, and one independent K head per class.
template <class T>
class GafModel {
public:
    explicit GafModel(GafConfig config);
    GafModel(GafConfig config, ParameterSet<T> params);

    const GafConfig& config() const noexcept { return config_; }
    std::size_t num_classes() const noexcept { return config_.num_classes; }
    std::size_t data_dim() const noexcept { return config_.data_dim; }
    ParameterSet<T>& parameters() noexcept { return params_; }
    const ParameterSet<T>& parameters() const noexcept { return params_; }

    /// Appends a freshly initialized K head (and class embedding row); returns its class index.
    std::size_t add_class_head();

    template <class U>
    GafModel<U> cast() const {
        return GafModel<U>(config_, params_.template cast<U>());
    }

    // Graph builders. `times` holds one t per row, `class_weights` is rows x num_classes.
    Var time_embedding(ParamBinder<T>& bind, std::span<const T> times) const;
    Var trunk(ParamBinder<T>& bind, Var x, std::span<const T> times, const Array<T>& class_weights) const;
    Var head_j(ParamBinder<T>& bind, Var features) const;
    Var head_k(ParamBinder<T>& bind, std::size_t cls, Var features) const;

private:
    Var head(ParamBinder<T>& bind, const std::string& prefix, Var features) const;
    void init_head(const std::string& prefix);
    void init_linear(const std::string& prefix, std::size_t fan_in, std::size_t fan_out, bool zero);
    void validate_parameters() const;

    GafConfig config_;
    ParameterSet<T> params_;
};

/// Projected time embedding of a single t in [0, 1].
template <class T>
Array<T> embed_time(const GafModel<T>& model, double t);

/// One evaluation of the twins at (x_t, t) for class `cls`; x_t has shape (d).
template <class T>
TwinOutput<T> twin_forward(const GafModel<T>& model, const Array<T>& x_t, double t, std::size_t cls,
                           EvalStats* stats = nullptr);

/// Row-wise twins for a batch (rows x d) with per-row times and classes.
/// Rows are routed to their own K head; the trunk runs once per row.
template <class T>
TwinOutput<T> twin_forward_batch(const GafModel<T>& model, const Array<T>& x, std::span<const T> times,
                                 std::span<const std::size_t> classes, EvalStats* stats = nullptr);

/// Emergent velocity sum_m w_m (K_m - J) for a batch (rows x d) or one point (d)
/// at a shared time t. Without trunk class conditioning this is one trunk and
/// one J-head evaluation regardless of how many classes carry weight; with it,
/// each active class gets its own trunk pass so the blend is exactly the
/// weighted sum of the pure-class fields.
template <class T>
Array<T> velocity(const GafModel<T>& model, const Array<T>& x, double t, const VelocityQuery& query,
                  EvalStats* stats = nullptr);

/// Per-class velocities K_m - J computed from the same trunk passes as `velocity`;
/// entry m is empty when the query gives class m zero weight.
template <class T>
std::vector<Array<T>> velocity_components(const GafModel<T>& model, const Array<T>& x, double t,
                                          const VelocityQuery& query);

extern template class GafModel<float>;
extern template class GafModel<double>;

}  // namespace gaf
