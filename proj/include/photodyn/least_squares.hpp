#pragma once

// Bounded Levenberg-Marquardt (damped Gauss-Newton) for weighted nonlinear
// least squares.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace photodyn {

/// Minimises sum_i r_i(theta)^2 where r_i = sqrt(w_i) (y_i - f_i(theta)).
struct LeastSquaresProblem {
    std::size_t n_params = 0;
    std::size_t n_residuals = 0;
    std::function<void(std::span<const double> theta, std::span<double> residuals)> residuals;
    /// d r_i / d theta_j. Central differences are used when empty.
    std::function<void(std::span<const double> theta, Eigen::Ref<Eigen::MatrixXd> jacobian)> jacobian;
    /// Box bounds; empty means unbounded.
    std::vector<double> lower;
    std::vector<double> upper;
};

struct SolverOptions {
    int max_iterations = 500;
    double relative_objective_tolerance = 1e-10;
    /// On max_j |J_j . r| / (|J_j| |r|), the cosine between residual and column j.
    double gradient_tolerance = 1e-8;
};

struct Convergence {
    bool converged = false;
    int iterations = 0;
    double final_gradient_norm = 0.0;
    std::string reason;
};

struct SolverResult {
    std::vector<double> theta;
    std::vector<double> standard_errors; ///< +inf for unidentifiable parameters
    std::vector<bool> identifiable;
    Eigen::MatrixXd covariance; ///< scaled by reduced chi2; rows/cols of unidentifiable params are zero
    double chi2 = 0.0;
    double reduced_chi2 = 0.0;
    std::size_t n_points = 0;
    std::size_t n_params = 0;
    Convergence convergence;
    std::vector<double> objective_history; ///< objective after each accepted step (first entry: initial)
};

/// Throws DomainError if the initial point is non-finite or outside the bounds.
[[nodiscard]] SolverResult solve_least_squares(const LeastSquaresProblem& problem, std::vector<double> initial,
                                               const SolverOptions& options = {});

/// Gradient of the objective, 2 J^T r, using the problem's Jacobian.
[[nodiscard]] Eigen::VectorXd objective_gradient(const LeastSquaresProblem& problem, std::span<const double> theta);

/// y = f(x; theta) with optional analytic partials df/dtheta.
struct CurveModel {
    std::function<double(double x, std::span<const double> theta)> value;
    std::function<void(double x, std::span<const double> theta, std::span<double> grad)> gradient;
};

/// Curve fit of (x, y) with weights w (> 0).
[[nodiscard]] LeastSquaresProblem curve_problem(const CurveModel& model, std::span<const double> x,
                                                std::span<const double> y, std::span<const double> weights);

[[nodiscard]] SolverResult least_squares(const CurveModel& model, std::vector<double> initial,
                                         std::span<const double> x, std::span<const double> y,
                                         std::span<const double> weights, std::vector<double> lower = {},
                                         std::vector<double> upper = {}, const SolverOptions& options = {});

} // namespace photodyn
