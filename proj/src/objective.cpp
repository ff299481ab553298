#include "gaf/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gaf {

namespace {

template <class T>
void require_same_shape(const Array<T>& a, const Array<T>& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
}

template <class T>
T msq_of_difference(const Array<T>& a, const Array<T>& b, T sign) {
    T acc{0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        const T e = a[i] + sign * b[i];
        acc += e * e;
    }
    return acc / static_cast<T>(a.size());
}

}  // namespace

template <class T>
BridgeSample<T> make_bridge(const Array<T>& z_y, const Array<T>& z_x, double t, std::size_t cls) {
    require_same_shape(z_y, z_x, "make_bridge");
    if (!(t >= 0.0 && t <= 1.0)) {
        throw ValueError("bridge time must lie in [0, 1], got " + std::to_string(t));
    }
    if (!z_y.all_finite() || !z_x.all_finite()) {
        throw NonFiniteError("bridge endpoints must be finite");
    }
    BridgeSample<T> s{z_x, z_y, t, cls, Array<T>::zeros_like(z_x)};
    const T a = static_cast<T>(1.0 - t);
    const T b = static_cast<T>(t);
    for (std::size_t i = 0; i < z_x.size(); ++i) {
        s.x_t[i] = a * z_y[i] + b * z_x[i];
    }
    return s;
}

template <class T>
Array<T> bridge_point(const BridgeConfig<T>& config) {
    return make_bridge(config.z_y, config.z_x, config.t, config.cls).x_t;
}

template <class T>
BridgeConfig<T> swap_config(const BridgeConfig<T>& config, SwapKind kind) {
    switch (kind) {
        case SwapKind::swap: return {config.z_x, config.z_y, config.t, config.cls};
        case SwapKind::flip: return {config.z_y, config.z_x, 1.0 - config.t, config.cls};
        case SwapKind::swap_and_flip: return {config.z_x, config.z_y, 1.0 - config.t, config.cls};
    }
    return config;
}

template <class T>
T msq(const Array<T>& a) {
    T acc{0};
    for (T v : a.values()) {
        acc += v * v;
    }
    return acc / static_cast<T>(a.size());
}

template <class T>
T loss_pair(const TwinOutput<T>& out, const BridgeSample<T>& sample) {
    require_same_shape(out.j, sample.z_y, "loss_pair");
    require_same_shape(out.k, sample.z_x, "loss_pair");
    const T t = static_cast<T>(sample.t);
    return (T{1} - t) * msq_of_difference(out.j, sample.z_y, T{-1}) + t * msq_of_difference(out.k, sample.z_x, T{-1});
}

template <class T>
T loss_res(const TwinOutput<T>& out, double t) {
    const T tt = static_cast<T>(t);
    return (T{1} - tt) * msq(out.j_res) + tt * msq(out.k_res);
}

template <class T>
T loss_swap(const TwinOutput<T>& out, const TwinOutput<T>& out_flipped) {
    require_same_shape(out.j_res, out_flipped.k_res, "loss_swap");
    require_same_shape(out.k_res, out_flipped.j_res, "loss_swap");
    return msq_of_difference(out.j_res, out_flipped.k_res, T{1}) + msq_of_difference(out.k_res, out_flipped.j_res, T{1});
}

LossBreakdown loss_total(double pair, double res, double swap, double lambda_res, double lambda_swap) {
    if (!(lambda_res >= 0.0) || !(lambda_swap >= 0.0)) {
        throw ValueError("loss weights must be non-negative");
    }
    return LossBreakdown{pair, res, swap, pair + lambda_res * res + lambda_swap * swap, lambda_res, lambda_swap};
}

template <class T>
LossVars build_gaf_loss(const GafModel<T>& model, ParamBinder<T>& bind, const TrainingBatch<T>& batch,
                        double lambda_res, double lambda_swap) {
    const std::size_t n = batch.size();
    const std::size_t d = model.data_dim();
    if (n == 0) {
        throw ValueError("training batch is empty");
    }
    for (const auto* a : {&batch.z_x, &batch.z_y, &batch.x_t}) {
        if (a->rank() != 2 || a->rows() != n || a->cols() != d) {
            throw ShapeError("training batch arrays must be " + std::to_string(n) + " x " + std::to_string(d));
        }
    }
    if (batch.classes.size() != n) {
        throw ShapeError("training batch needs one class per row");
    }
    for (std::size_t c : batch.classes) {
        if (c >= model.num_classes()) {
            throw ValueError("class index " + std::to_string(c) + " out of range");
        }
    }
    if (lambda_res < 0.0 || lambda_swap < 0.0) {
        throw ValueError("loss weights must be non-negative");
    }

    // Group rows by class so each K head sees one contiguous slice.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return batch.classes[a] < batch.classes[b]; });

    struct Group {
        std::size_t cls;
        std::size_t begin;  // position in grouped order
        std::size_t count;
    };
    std::vector<Group> groups;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = batch.classes[order[i]];
        if (groups.empty() || groups.back().cls != c) {
            groups.push_back({c, i, 0});
        }
        ++groups.back().count;
    }

    // Stacked trunk input: per class, its rows at t followed by the same rows at 1 - t.
    Array<T> stacked(Shape{2 * n, d});
    std::vector<T> stacked_times(2 * n);
    Array<T> weights(Shape{2 * n, model.num_classes()});
    for (const auto& g : groups) {
        for (std::size_t k = 0; k < g.count; ++k) {
            const std::size_t src = order[g.begin + k];
            const std::size_t fwd = 2 * g.begin + k;
            const std::size_t rev = 2 * g.begin + g.count + k;
            std::copy_n(batch.x_t.row(src).begin(), d, stacked.row(fwd).begin());
            std::copy_n(batch.x_t.row(src).begin(), d, stacked.row(rev).begin());
            stacked_times[fwd] = batch.times[src];
            stacked_times[rev] = T{1} - batch.times[src];
            weights.at(fwd, g.cls) = T{1};
            weights.at(rev, g.cls) = T{1};
        }
    }

    auto& tape = bind.tape();
    const Var features = model.trunk(bind, tape.constant(std::move(stacked)), stacked_times, weights);
    const Var j_all = model.head_j(bind, features);

    std::vector<Var> j_res, j_flip, k_res, k_flip;
    for (const auto& g : groups) {
        const std::size_t lo = 2 * g.begin;
        const Var k_all = model.head_k(bind, g.cls, tape.slice_rows(features, lo, lo + 2 * g.count));
        j_res.push_back(tape.slice_rows(j_all, lo, lo + g.count));
        j_flip.push_back(tape.slice_rows(j_all, lo + g.count, lo + 2 * g.count));
        k_res.push_back(tape.slice_rows(k_all, 0, g.count));
        k_flip.push_back(tape.slice_rows(k_all, g.count, 2 * g.count));
    }
    const Var jr = tape.concat(j_res, 0);
    const Var jf = tape.concat(j_flip, 0);
    const Var kr = tape.concat(k_res, 0);
    const Var kf = tape.concat(k_flip, 0);

    // Constants in grouped row order.
    Array<T> w_noise(Shape{n, d}), w_data(Shape{n, d}), j_anchor(Shape{n, d}), k_anchor(Shape{n, d});
    Array<T> z_y(Shape{n, d}), z_x(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = order[i];
        const T t = batch.times[src];
        for (std::size_t k = 0; k < d; ++k) {
            const T x = batch.x_t.at(src, k);
            w_noise.at(i, k) = T{1} - t;
            w_data.at(i, k) = t;
            j_anchor.at(i, k) = (T{1} - t) * x;
            k_anchor.at(i, k) = t * x;
            z_y.at(i, k) = batch.z_y.at(src, k);
            z_x.at(i, k) = batch.z_x.at(src, k);
        }
    }
    const Var wn = tape.constant(std::move(w_noise));
    const Var wd = tape.constant(std::move(w_data));
    const Var j_full = tape.add(tape.constant(std::move(j_anchor)), jr);
    const Var k_full = tape.add(tape.constant(std::move(k_anchor)), kr);

    const Var pair = tape.add(tape.mean(tape.mul(tape.square(tape.sub(j_full, tape.constant(std::move(z_y)))), wn)),
                              tape.mean(tape.mul(tape.square(tape.sub(k_full, tape.constant(std::move(z_x)))), wd)));
    const Var res = tape.add(tape.mean(tape.mul(tape.square(jr), wn)), tape.mean(tape.mul(tape.square(kr), wd)));
    const Var swap = tape.add(tape.mean(tape.square(tape.add(jr, kf))), tape.mean(tape.square(tape.add(kr, jf))));
    const Var total = tape.add(tape.add(pair, tape.scalar_mul(res, static_cast<T>(lambda_res))),
                               tape.scalar_mul(swap, static_cast<T>(lambda_swap)));
    return LossVars{pair, res, swap, total};
}

#define GAF_INSTANTIATE_OBJECTIVE(T)                                                                       \
    template BridgeSample<T> make_bridge(const Array<T>&, const Array<T>&, double, std::size_t);           \
    template Array<T> bridge_point(const BridgeConfig<T>&);                                                \
    template BridgeConfig<T> swap_config(const BridgeConfig<T>&, SwapKind);                                \
    template T msq(const Array<T>&);                                                                       \
    template T loss_pair(const TwinOutput<T>&, const BridgeSample<T>&);                                    \
    template T loss_res(const TwinOutput<T>&, double);                                                     \
    template T loss_swap(const TwinOutput<T>&, const TwinOutput<T>&);                                      \
    template LossVars build_gaf_loss(const GafModel<T>&, ParamBinder<T>&, const TrainingBatch<T>&, double, \
                                     double);

GAF_INSTANTIATE_OBJECTIVE(float)
GAF_INSTANTIATE_OBJECTIVE(double)

#undef GAF_INSTANTIATE_OBJECTIVE

}  // namespace gaf
