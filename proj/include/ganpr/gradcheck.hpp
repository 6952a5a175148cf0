#pragma once

#include <functional>
#include <vector>

#include "ganpr/common.hpp"
#include "ganpr/rng.hpp"

namespace ganpr {

// Central finite differences against an analytic gradient, both over a flat
// view of some variable (inputs or parameters). For large variables a seeded
// subset of indices is checked instead of every element.
struct GradCheckResult {
    double max_rel_err = 0.0;
    size_t checked = 0;
    size_t worst_index = 0;
};

inline double grad_rel_err(double analytic, double numeric) {
    const double denom = std::max(std::abs(analytic), std::abs(numeric));
    if (denom < 1e-6) return 0.0;  // both effectively zero; FD noise dominates
    return std::abs(analytic - numeric) / denom;
}

inline GradCheckResult grad_check(const std::function<double(const std::vector<double>&)>& loss,
                                  std::vector<double> x, const std::vector<double>& analytic_grad,
                                  double eps = 1e-5, size_t max_samples = 0, uint64_t seed = 7) {
    check(x.size() == analytic_grad.size(), "grad_check: gradient size ", analytic_grad.size(),
          " does not match variable size ", x.size());
    std::vector<size_t> indices;
    if (max_samples == 0 || max_samples >= x.size()) {
        indices.resize(x.size());
        for (size_t i = 0; i < x.size(); ++i) indices[i] = i;
    } else {
        Rng rng(seed);
        for (size_t i = 0; i < max_samples; ++i)
            indices.push_back(static_cast<size_t>(rng.below(x.size())));
    }
    GradCheckResult res;
    for (size_t idx : indices) {
        const double orig = x[idx];
        x[idx] = orig + eps;
        const double up = loss(x);
        x[idx] = orig - eps;
        const double down = loss(x);
        x[idx] = orig;
        const double numeric = (up - down) / (2.0 * eps);
        const double err = grad_rel_err(analytic_grad[idx], numeric);
        if (err > res.max_rel_err) {
            res.max_rel_err = err;
            res.worst_index = idx;
        }
        res.checked++;
    }
    return res;
}

}  // namespace ganpr
