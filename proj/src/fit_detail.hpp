#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "photodyn/fits.hpp"

namespace photodyn::detail {

struct ParamSpec {
    std::string name;
    std::string unit;
    /// Fitted internally as log(value).
    bool log_scale = false;
    /// Flag as unidentifiable when the relative error exceeds this (0 disables).
    double max_relative_error = 0.0;
};

inline FitResult make_result(FitFamily family, const SolverResult& sol, const std::vector<ParamSpec>& specs) {
    FitResult r;
    r.family = family;
    r.reduced_chi2 = sol.reduced_chi2;
    r.n_points = sol.n_points;
    r.n_params = sol.n_params;
    r.convergence = sol.convergence;
    for (std::size_t j = 0; j < specs.size(); ++j) {
        FitParameter p;
        p.name = specs[j].name;
        p.unit = specs[j].unit;
        p.identifiable = sol.identifiable[j];
        if (specs[j].log_scale) {
            p.value = std::exp(sol.theta[j]);
            p.standard_error = p.value * sol.standard_errors[j];
        } else {
            p.value = sol.theta[j];
            p.standard_error = sol.standard_errors[j];
        }
        if (specs[j].max_relative_error > 0.0 &&
            !(p.standard_error <= specs[j].max_relative_error * std::abs(p.value))) {
            p.identifiable = false;
        }
        if (!std::isfinite(p.standard_error)) p.identifiable = false;
        r.parameters.push_back(p);
    }
    for (const auto& p : r.parameters) {
        if (!p.identifiable) r.flags.push_back("unidentifiable:" + p.name);
    }
    if (!sol.convergence.converged) r.flags.emplace_back("not_converged");
    return r;
}

/// sqrt(g^T C g) restricted to the listed parameter indices.
inline double propagate(const SolverResult& sol, const std::vector<std::size_t>& idx, const std::vector<double>& grad) {
    double var = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
        if (!sol.identifiable[idx[a]]) return INFINITY;
        for (std::size_t b = 0; b < idx.size(); ++b) {
            var += grad[a] * grad[b] *
                   sol.covariance(static_cast<Eigen::Index>(idx[a]), static_cast<Eigen::Index>(idx[b]));
        }
    }
    return std::sqrt(std::max(var, 0.0));
}

} // namespace photodyn::detail
