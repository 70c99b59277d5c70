#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "patrack/tensor.hpp"

namespace patrack {

/// Central-difference gradient estimate (f(x+h·e_i) − f(x−h·e_i)) / 2h per
/// coordinate. f is evaluated with gradient recording disabled; float64 is
/// recommended, default step 1e-5.
template <typename T>
Tensor<T> finite_diff_gradient(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T h = T(1e-5)) {
    NoGradGuard no_grad;
    Tensor<T> g = Tensor<T>::zeros(x.shape());
    Tensor<T> probe = x.clone_detached();
    for (int64_t i = 0; i < x.numel(); ++i) {
        T orig = probe.data()[static_cast<size_t>(i)];
        probe.data()[static_cast<size_t>(i)] = orig + h;
        T fp = f(probe);
        probe.data()[static_cast<size_t>(i)] = orig - h;
        T fm = f(probe);
        probe.data()[static_cast<size_t>(i)] = orig;
        g.data()[static_cast<size_t>(i)] = (fp - fm) / (T(2) * h);
    }
    return g;
}

/// Central differences over an arbitrary in-place storage vector; `eval`
/// re-runs the computation against the perturbed storage. Used for checking
/// gradients with respect to module weights.
template <typename T>
std::vector<T> finite_diff_over_storage(const std::function<T()>& eval, std::vector<T>& storage, T h = T(1e-5)) {
    NoGradGuard no_grad;
    std::vector<T> g(storage.size());
    for (size_t i = 0; i < storage.size(); ++i) {
        T orig = storage[i];
        storage[i] = orig + h;
        T fp = eval();
        storage[i] = orig - h;
        T fm = eval();
        storage[i] = orig;
        g[i] = (fp - fm) / (T(2) * h);
    }
    return g;
}

struct GradCheckStat {
    double max_rel_err = 0.0;
    int64_t worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

/// Relative error between analytic and numeric gradients. Coordinates where
/// both magnitudes are below `abs_floor` compare absolutely instead, since
/// the relative error of two near-zero estimates is dominated by roundoff.
template <typename T>
GradCheckStat grad_rel_error(const std::vector<T>& analytic, const std::vector<T>& numeric,
                             double abs_floor = 1e-6) {
    GradCheckStat stat;
    for (size_t i = 0; i < analytic.size(); ++i) {
        double a = static_cast<double>(analytic[i]);
        double n = static_cast<double>(numeric[i]);
        double scale = std::max(std::abs(a), std::abs(n));
        double err = (scale < abs_floor) ? std::abs(a - n) : std::abs(a - n) / scale;
        if (err > stat.max_rel_err) {
            stat.max_rel_err = err;
            stat.worst_index = static_cast<int64_t>(i);
            stat.analytic_at_worst = a;
            stat.numeric_at_worst = n;
        }
    }
    return stat;
}

}  // namespace patrack
