#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "gaf/array.hpp"
#include "gaf/tape.hpp"

namespace gaf::test {

/// Hand-rolled generator for property tests; seeded per case so failures replay.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : eng_(seed) {}
    double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
    std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(eng_); }

    template <class T = double>
    Array<T> array(Shape shape, double scale = 1.0) {
        Array<T> a(std::move(shape));
        for (auto& x : a.values()) x = static_cast<T>(scale * normal());
        return a;
    }

private:
    std::mt19937_64 eng_;
};

inline std::filesystem::path temp_dir(const std::string& name) {
    const char* base = std::getenv("GAF_TEST_TMP");
    auto dir = std::filesystem::path(base ? base : std::filesystem::temp_directory_path().string()) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Worst relative error between analytic gradients and central differences of `f`
/// (which rebuilds the graph from the parameter values each call).
inline double gradient_check(ParameterSet<double>& params,
                             const std::function<Var(Tape<double>&, std::vector<Var>&)>& f, double step = 1e-5) {
    auto eval = [&](bool with_grad, Gradients<double>* grads) {
        Tape<double> tape;
        std::vector<Var> vars;
        for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.parameter(i, params[i]));
        const Var loss = f(tape, vars);
        if (with_grad) *grads = tape.backward(loss, params);
        return tape.value(loss).item();
    };
    Gradients<double> analytic;
    eval(true, &analytic);
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params[p].size(); ++i) {
            const double keep = params[p][i];
            params[p][i] = keep + step;
            const double up = eval(false, nullptr);
            params[p][i] = keep - step;
            const double down = eval(false, nullptr);
            params[p][i] = keep;
            const double numeric = (up - down) / (2.0 * step);
            const double err = std::abs(numeric - analytic[p][i]) /
                               std::max({std::abs(numeric), std::abs(analytic[p][i]), 1e-6});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace gaf::test
