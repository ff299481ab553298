#pragma once

#include <cstdint>

#include "gaf/tape.hpp"

namespace gaf {

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;
    /// Decoupled (AdamW-style) decay; 0 makes the update plain Adam.
    double weight_decay = 0.0;

    friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

/// First/second moment estimates, shape-congruent with a ParameterSet.
template <class T>
struct AdamState {
    AdamHyper hyper;
    std::uint64_t step = 0;
    std::vector<Array<T>> first_moment;
    std::vector<Array<T>> second_moment;

    static AdamState for_parameters(const ParameterSet<T>& params, AdamHyper hyper);

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update applied in place.
template <class T>
void adam_step(AdamState<T>& state, ParameterSet<T>& params, const Gradients<T>& grads);

extern template struct AdamState<float>;
extern template struct AdamState<double>;
extern template void adam_step(AdamState<float>&, ParameterSet<float>&, const Gradients<float>&);
extern template void adam_step(AdamState<double>&, ParameterSet<double>&, const Gradients<double>&);

}  // namespace gaf
