#include "photodyn/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "photodyn/errors.hpp"

namespace photodyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

double lower_of(const LeastSquaresProblem& p, std::size_t j) { return p.lower.empty() ? -kInf : p.lower[j]; }
double upper_of(const LeastSquaresProblem& p, std::size_t j) { return p.upper.empty() ? kInf : p.upper[j]; }

Vec evaluate(const LeastSquaresProblem& p, const Vec& theta) {
    Vec r(static_cast<Eigen::Index>(p.n_residuals));
    p.residuals({theta.data(), p.n_params}, {r.data(), p.n_residuals});
    return r;
}

double objective_of(const Vec& r) {
    const double f = r.squaredNorm();
    return std::isfinite(f) ? f : kInf;
}

Mat jacobian_of(const LeastSquaresProblem& p, const Vec& theta) {
    Mat J(static_cast<Eigen::Index>(p.n_residuals), static_cast<Eigen::Index>(p.n_params));
    if (p.jacobian) {
        p.jacobian({theta.data(), p.n_params}, J);
        return J;
    }
    for (std::size_t j = 0; j < p.n_params; ++j) {
        const double h = 1e-6 * std::max(std::abs(theta[j]), 1e-3);
        Vec hi = theta, lo = theta;
        hi[j] += h;
        lo[j] -= h;
        J.col(static_cast<Eigen::Index>(j)) = (evaluate(p, hi) - evaluate(p, lo)) / (2.0 * h);
    }
    return J;
}

// Largest cosine between r and a Jacobian column, skipping components that
// push against an active bound. Scale-free, so tiny residuals still iterate.
double projected_gradient_norm(const LeastSquaresProblem& p, const Vec& theta, const Vec& g, const Mat& J,
                               const Vec& r) {
    const double rn = r.norm();
    double norm = 0.0;
    for (std::size_t j = 0; j < p.n_params; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const bool at_lower = theta[jj] <= lower_of(p, j) && g[jj] > 0.0;
        const bool at_upper = theta[jj] >= upper_of(p, j) && g[jj] < 0.0;
        if (at_lower || at_upper) continue;
        const double scale = J.col(jj).norm() * rn;
        if (scale > 0.0) norm = std::max(norm, std::abs(g[jj]) / scale);
    }
    return norm;
}

// A step that leaves the box stops short of the wall. Clamping straight onto
// it can strand a parameter where the model no longer depends on it.
void truncate(const LeastSquaresProblem& p, const Vec& from, Vec& theta) {
    for (std::size_t j = 0; j < p.n_params; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double lo = lower_of(p, j), hi = upper_of(p, j);
        if (theta[jj] < lo) theta[jj] = from[jj] - 0.9 * (from[jj] - lo);
        if (theta[jj] > hi) theta[jj] = from[jj] + 0.9 * (hi - from[jj]);
        theta[jj] = std::clamp(theta[jj], lo, hi);
    }
}

// Parameters whose columns are (numerically) dependent are marked
// unidentifiable; the rest get the inverse of their normal-matrix block.
void fill_uncertainties(const Mat& J, double scale, SolverResult& out) {
    const auto n = J.cols();
    const Mat normal = J.transpose() * J;
    std::vector<bool> ok(static_cast<std::size_t>(n), true);
    double max_diag = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) max_diag = std::max(max_diag, normal(j, j));
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!(normal(j, j) > 1e-28 * max_diag) || !std::isfinite(normal(j, j))) ok[static_cast<std::size_t>(j)] = false;
    }
    for (;;) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (ok[static_cast<std::size_t>(j)]) idx.push_back(j);
        }
        const auto m = static_cast<Eigen::Index>(idx.size());
        if (m == 0) break;
        Mat corr(m, m);
        for (Eigen::Index a = 0; a < m; ++a) {
            for (Eigen::Index b = 0; b < m; ++b) {
                corr(a, b) = normal(idx[a], idx[b]) / std::sqrt(normal(idx[a], idx[a]) * normal(idx[b], idx[b]));
            }
        }
        Eigen::SelfAdjointEigenSolver<Mat> eig(corr);
        if (eig.eigenvalues()[0] > 1e-12) break;
        // drop the parameter that dominates the null direction
        Eigen::Index worst = 0;
        eig.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
        ok[static_cast<std::size_t>(idx[worst])] = false;
    }

    out.covariance = Mat::Zero(n, n);
    out.standard_errors.assign(static_cast<std::size_t>(n), kInf);
    out.identifiable = ok;
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (ok[static_cast<std::size_t>(j)]) idx.push_back(j);
    }
    const auto m = static_cast<Eigen::Index>(idx.size());
    if (m == 0) return;
    Mat sub(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = normal(idx[a], idx[b]);
    }
    const Mat inv = sub.ldlt().solve(Mat::Identity(m, m)) * scale;
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) out.covariance(idx[a], idx[b]) = inv(a, b);
        out.standard_errors[static_cast<std::size_t>(idx[a])] = std::sqrt(std::max(inv(a, a), 0.0));
    }
}

} // namespace

SolverResult solve_least_squares(const LeastSquaresProblem& problem, std::vector<double> initial,
                                 const SolverOptions& options) {
    LeastSquaresProblem p = problem;
    if (p.n_params == 0) p.n_params = initial.size();
    if (initial.size() != p.n_params) throw DomainError("initial point has the wrong dimension");
    for (std::size_t j = 0; j < p.n_params; ++j) {
        if (!std::isfinite(initial[j])) throw DomainError("initial point must be finite");
        if (initial[j] < lower_of(p, j) || initial[j] > upper_of(p, j)) {
            throw DomainError("initial point lies outside the bounds");
        }
    }

    Vec theta = Eigen::Map<const Vec>(initial.data(), static_cast<Eigen::Index>(initial.size()));
    Vec r = evaluate(p, theta);
    double f = objective_of(r);
    if (!std::isfinite(f)) throw DomainError("objective is not finite at the initial point");

    SolverResult out;
    out.objective_history.push_back(f);
    double lambda = 1e-3;
    Convergence& conv = out.convergence;
    Mat J = jacobian_of(p, theta);
    Vec g = J.transpose() * r;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        conv.iterations = iter;
        conv.final_gradient_norm = projected_gradient_norm(p, theta, g, J, r);
        if (conv.final_gradient_norm < options.gradient_tolerance) {
            conv.converged = true;
            conv.reason = "gradient";
            break;
        }
        if (f <= 1e-30) {
            conv.converged = true;
            conv.reason = "zero residual";
            break;
        }

        const Mat normal = J.transpose() * J;
        Vec diag = normal.diagonal();
        const double dmax = std::max(diag.maxCoeff(), 1e-300);
        for (Eigen::Index j = 0; j < diag.size(); ++j) diag[j] = std::max(diag[j], 1e-12 * dmax);

        bool accepted = false;
        while (lambda < 1e20) {
            Mat damped = normal;
            damped.diagonal() += lambda * diag;
            Vec step = damped.ldlt().solve(-g);
            Vec trial = theta + step;
            truncate(p, theta, trial);
            if ((trial - theta).norm() <= 1e-15 * (theta.norm() + 1e-15)) {
                lambda *= 10.0;
                continue;
            }
            Vec r_trial = evaluate(p, trial);
            const double f_trial = objective_of(r_trial);
            if (f_trial < f) {
                const double rel = (f - f_trial) / std::max(f, 1e-300);
                theta = trial;
                r = std::move(r_trial);
                f = f_trial;
                out.objective_history.push_back(f);
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                J = jacobian_of(p, theta);
                g = J.transpose() * r;
                if (rel < options.relative_objective_tolerance) {
                    conv.converged = true;
                    conv.reason = "objective";
                }
                break;
            }
            lambda *= 10.0;
        }
        if (conv.converged) {
            conv.iterations = iter + 1;
            conv.final_gradient_norm = projected_gradient_norm(p, theta, g, J, r);
            break;
        }
        if (!accepted) {
            // no downhill step exists at any damping: a local minimum within machine precision
            conv.converged = true;
            conv.iterations = iter + 1;
            conv.final_gradient_norm = projected_gradient_norm(p, theta, g, J, r);
            conv.reason = "no further decrease";
            break;
        }
        conv.iterations = iter + 1;
    }
    if (!conv.converged) {
        conv.final_gradient_norm = projected_gradient_norm(p, theta, g, J, r);
        conv.reason = "max iterations";
    }

    out.theta.assign(theta.data(), theta.data() + theta.size());
    out.chi2 = f;
    out.n_points = p.n_residuals;
    out.n_params = p.n_params;
    const bool dof = p.n_residuals > p.n_params;
    out.reduced_chi2 = dof ? f / static_cast<double>(p.n_residuals - p.n_params) : std::nan("");
    fill_uncertainties(J, dof ? out.reduced_chi2 : 1.0, out);
    return out;
}

Eigen::VectorXd objective_gradient(const LeastSquaresProblem& problem, std::span<const double> theta) {
    LeastSquaresProblem p = problem;
    if (p.n_params == 0) p.n_params = theta.size();
    const Vec t = Eigen::Map<const Vec>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    return 2.0 * jacobian_of(p, t).transpose() * evaluate(p, t);
}

LeastSquaresProblem curve_problem(const CurveModel& model, std::span<const double> x, std::span<const double> y,
                                  std::span<const double> weights) {
    if (x.size() != y.size() || x.size() != weights.size()) throw DomainError("data arrays differ in length");
    struct Data {
        std::vector<double> x, y, sw;
    };
    auto data = std::make_shared<Data>();
    data->x.assign(x.begin(), x.end());
    data->y.assign(y.begin(), y.end());
    for (double w : weights) {
        if (!(w > 0.0) || !std::isfinite(w)) throw DomainError("weights must be finite and > 0");
        data->sw.push_back(std::sqrt(w));
    }
    LeastSquaresProblem p;
    p.n_residuals = x.size();
    p.residuals = [model, data](std::span<const double> theta, std::span<double> r) {
        for (std::size_t i = 0; i < data->x.size(); ++i) {
            r[i] = data->sw[i] * (data->y[i] - model.value(data->x[i], theta));
        }
    };
    if (model.gradient) {
        p.jacobian = [model, data](std::span<const double> theta, Eigen::Ref<Eigen::MatrixXd> J) {
            std::vector<double> grad(theta.size());
            for (std::size_t i = 0; i < data->x.size(); ++i) {
                model.gradient(data->x[i], theta, grad);
                for (std::size_t j = 0; j < theta.size(); ++j) {
                    J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = -data->sw[i] * grad[j];
                }
            }
        };
    }
    return p;
}

SolverResult least_squares(const CurveModel& model, std::vector<double> initial, std::span<const double> x,
                           std::span<const double> y, std::span<const double> weights, std::vector<double> lower,
                           std::vector<double> upper, const SolverOptions& options) {
    LeastSquaresProblem p = curve_problem(model, x, y, weights);
    p.n_params = initial.size();
    p.lower = std::move(lower);
    p.upper = std::move(upper);
    return solve_least_squares(p, std::move(initial), options);
}

} // namespace photodyn
