#pragma once

#include <cstddef>
#include <vector>

#include "gaf/model.hpp"

namespace gaf {

/// Default loss weights used for every training run.
inline constexpr double default_lambda_res = 0.003;
inline constexpr double default_lambda_swap = 0.002;

template <class T>
struct BridgeSample {
    Array<T> z_x;
    Array<T> z_y;
    double t = 0.0;
    std::size_t cls = 0;
    Array<T> x_t;
};

/// (noise endpoint, data endpoint, time, class) acted on by the swap operators.
template <class T>
struct BridgeConfig {
    Array<T> z_y;
    Array<T> z_x;
    double t = 0.0;
    std::size_t cls = 0;

    friend bool operator==(const BridgeConfig&, const BridgeConfig&) = default;
};

enum class SwapKind { swap, flip, swap_and_flip };

/// x_t = (1 - t) z_y + t z_x.
template <class T>
BridgeSample<T> make_bridge(const Array<T>& z_y, const Array<T>& z_x, double t, std::size_t cls);

template <class T>
Array<T> bridge_point(const BridgeConfig<T>& config);

/// swap: exchange endpoints; flip: t -> 1 - t; swap_and_flip: both.
template <class T>
BridgeConfig<T> swap_config(const BridgeConfig<T>& config, SwapKind kind);

/// Mean of squared elements.
template <class T>
T msq(const Array<T>& a);

/// (1 - t) msq(J - z_y) + t msq(K - z_x)
template <class T>
T loss_pair(const TwinOutput<T>& out, const BridgeSample<T>& sample);

/// (1 - t) msq(J_res) + t msq(K_res)
template <class T>
T loss_res(const TwinOutput<T>& out, double t);

/// msq(J_res + K~_res) + msq(K_res + J~_res), tildes taken at the complementary time.
template <class T>
T loss_swap(const TwinOutput<T>& out, const TwinOutput<T>& out_flipped);

struct LossBreakdown {
    double pair = 0.0;
    double res = 0.0;
    double swap = 0.0;
    double total = 0.0;
    double lambda_res = default_lambda_res;
    double lambda_swap = default_lambda_swap;
};

/// total = pair + lambda_res * res + lambda_swap * swap.
LossBreakdown loss_total(double pair, double res, double swap, double lambda_res = default_lambda_res,
                         double lambda_swap = default_lambda_swap);

/// Batch of bridges for one optimization step; row r of every array belongs to sample r.
template <class T>
struct TrainingBatch {
    Array<T> z_x;
    Array<T> z_y;
    Array<T> x_t;
    std::vector<T> times;
    std::vector<std::size_t> classes;

    std::size_t size() const noexcept { return times.size(); }
};

/// Handles to the loss components recorded on a tape.
struct LossVars {
    Var pair;
    Var res;
    Var swap;
    Var total;
};

/// Records the batch-mean GAF loss. Each row is evaluated at (x_t, t) and at
/// (x_t, 1 - t) in a single trunk pass; rows are routed to their class's K head.
template <class T>
LossVars build_gaf_loss(const GafModel<T>& model, ParamBinder<T>& bind, const TrainingBatch<T>& batch,
                        double lambda_res, double lambda_swap);

}  // namespace gaf
