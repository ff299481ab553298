#include "gaf/adam.hpp"

#include <cmath>

namespace gaf {

template <class T>
AdamState<T> AdamState<T>::for_parameters(const ParameterSet<T>& params, AdamHyper hyper) {
    AdamState state;
    state.hyper = hyper;
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.first_moment.push_back(Array<T>::zeros_like(params[i]));
        state.second_moment.push_back(Array<T>::zeros_like(params[i]));
    }
    return state;
}

template <class T>
void adam_step(AdamState<T>& state, ParameterSet<T>& params, const Gradients<T>& grads) {
    if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size()) {
        throw ShapeError("adam_step: expected " + std::to_string(params.size()) + " gradient and moment arrays");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        const Shape& s = params[p].shape();
        if (grads[p].shape() != s || state.first_moment[p].shape() != s || state.second_moment[p].shape() != s) {
            throw ShapeError("adam_step: shape mismatch for parameter '" + params.name(p) + "'");
        }
    }

    ++state.step;
    const auto& h = state.hyper;
    const double step = static_cast<double>(state.step);
    const T b1 = static_cast<T>(h.beta1);
    const T b2 = static_cast<T>(h.beta2);
    const T lr = static_cast<T>(h.learning_rate);
    const T eps = static_cast<T>(h.epsilon);
    const T decay = static_cast<T>(h.learning_rate * h.weight_decay);
    const T correction1 = static_cast<T>(1.0 - std::pow(h.beta1, step));
    const T correction2 = static_cast<T>(1.0 - std::pow(h.beta2, step));

    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& theta = params[p];
        auto& m = state.first_moment[p];
        auto& v = state.second_moment[p];
        const auto& g = grads[p];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + (T{1} - b1) * g[i];
            v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
            const T m_hat = m[i] / correction1;
            const T v_hat = v[i] / correction2;
            theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps) + decay * theta[i];
        }
    }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(AdamState<float>&, ParameterSet<float>&, const Gradients<float>&);
template void adam_step(AdamState<double>&, ParameterSet<double>&, const Gradients<double>&);

}  // namespace gaf
