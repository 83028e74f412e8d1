#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>

#include <Eigen/Dense>

namespace photonstat::fit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A weighted least-squares problem: minimize 0.5 * |r(x)|^2 where the
/// residuals already carry their weights.
template <typename P>
concept LeastSquaresProblem = requires(const P& p, const Vector& x, Vector& r, Matrix& jac) {
  { p.residual_count() } -> std::convertible_to<std::size_t>;
  p.residuals(x, r);
  p.jacobian(x, jac);
};

struct LmOptions {
  int max_iterations = 500;
  double relative_cost_tolerance = 1e-8;
  double initial_damping = 1e-3;
  double max_damping = 1e16;
};

struct Bounds {
  Vector lower;
  Vector upper;

  static Bounds unbounded(Eigen::Index n) {
    const double inf = std::numeric_limits<double>::infinity();
    return {Vector::Constant(n, -inf), Vector::Constant(n, inf)};
  }

  Vector project(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
};

struct LmResult {
  Vector params;
  Vector standard_errors;  // from the Gauss-Newton covariance, NaN if singular
  Vector gradient;         // J^T r at params
  double cost = 0.0;       // 0.5 * |r|^2
  double initial_cost = 0.0;
  double initial_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt with Marquardt diagonal scaling and projection onto box
/// bounds. Parameters sitting on a bound with the gradient pushing outward are
/// frozen for that step.
template <LeastSquaresProblem P>
LmResult levenberg_marquardt(const P& problem, const Vector& start, const Bounds& bounds,
                             const LmOptions& options = {}) {
  const Eigen::Index n = start.size();
  const auto m = static_cast<Eigen::Index>(problem.residual_count());

  LmResult out;
  Vector x = bounds.project(start);
  Vector r(m);
  Matrix jac(m, n);
  problem.residuals(x, r);
  problem.jacobian(x, jac);
  double cost = 0.5 * r.squaredNorm();
  out.initial_cost = cost;

  Vector grad = jac.transpose() * r;
  out.initial_gradient_norm = grad.norm();
  double damping = options.initial_damping;

  Vector trial_r(m);
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (cost == 0.0 || !std::isfinite(cost)) {
      out.converged = cost == 0.0;
      break;
    }

    Matrix normal = jac.transpose() * jac;
    Eigen::Array<bool, Eigen::Dynamic, 1> frozen(n);
    for (Eigen::Index i = 0; i < n; ++i)
      frozen[i] = (x[i] <= bounds.lower[i] && grad[i] > 0.0) ||
                  (x[i] >= bounds.upper[i] && grad[i] < 0.0);

    bool accepted = false;
    bool converged = false;
    while (!accepted) {
      Matrix system = normal;
      Vector rhs = -grad;
      for (Eigen::Index i = 0; i < n; ++i) {
        // A parameter with no influence has an all-zero column; damp it by 1.
        system(i, i) += damping * (normal(i, i) > 0.0 ? normal(i, i) : 1.0);
        if (frozen[i]) {
          system.row(i).setZero();
          system.col(i).setZero();
          system(i, i) = 1.0;
          rhs[i] = 0.0;
        }
      }
      const Vector step = system.ldlt().solve(rhs);
      const Vector trial = bounds.project(x + step);
      problem.residuals(trial, trial_r);
      const double trial_cost = 0.5 * trial_r.squaredNorm();

      if (std::isfinite(trial_cost) && trial_cost < cost) {
        const double relative = (cost - trial_cost) / cost;
        const double step_size = (trial - x).norm();
        x = trial;
        r = trial_r;
        cost = trial_cost;
        problem.jacobian(x, jac);
        grad = jac.transpose() * r;
        damping = std::max(damping / 3.0, 1e-15);
        accepted = true;
        converged = relative < options.relative_cost_tolerance ||
                    cost <= 1e-28 * out.initial_cost ||
                    step_size <= 1e-14 * (x.norm() + 1e-14);
      } else {
        damping *= 4.0;
        if (damping > options.max_damping) break;
      }
    }
    if (!accepted) {
      // No downhill step exists at machine precision.
      converged = grad.norm() <= 1e-8 * std::max(out.initial_gradient_norm, 1e-300) ||
                  cost <= 1e-24 * out.initial_cost;
      out.converged = converged;
      ++iter;
      break;
    }
    if (converged) {
      out.converged = true;
      ++iter;
      break;
    }
  }

  out.params = x;
  out.cost = cost;
  out.gradient = grad;
  out.iterations = iter;

  out.standard_errors = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
  const Eigen::Index dof = m - n;
  if (dof > 0) {
    const Matrix normal = jac.transpose() * jac;
    Eigen::FullPivLU<Matrix> lu(normal);
    if (lu.isInvertible()) {
      const Matrix cov = lu.inverse() * (2.0 * cost / static_cast<double>(dof));
      for (Eigen::Index i = 0; i < n; ++i)
        out.standard_errors[i] = cov(i, i) >= 0.0 ? std::sqrt(cov(i, i)) : out.standard_errors[i];
    }
  }
  return out;
}

template <LeastSquaresProblem P>
LmResult levenberg_marquardt(const P& problem, const Vector& start, const LmOptions& options = {}) {
  return levenberg_marquardt(problem, start, Bounds::unbounded(start.size()), options);
}

}  // namespace photonstat::fit
