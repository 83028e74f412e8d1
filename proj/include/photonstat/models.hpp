#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "photonstat/lm.hpp"

namespace photonstat::fit {

// Model families evaluated point-wise with analytic gradients. Each family
// exposes value(x, p) and gradient(x, p, g) over a fixed parameter layout.

/// Sum of three exponential decays sharing an onset, plus a baseline:
/// y = sum_i A_i exp(-(t - t0) / tau_i) + B.
/// Layout: A1 A2 A3 tau1 tau2 tau3 t0 B.
struct TriExponential {
  static constexpr std::size_t kParams = 8;
  enum Index : std::size_t { A1, A2, A3, Tau1, Tau2, Tau3, T0, Baseline };

  static double value(double t, std::span<const double, kParams> p) {
    double y = p[Baseline];
    for (std::size_t i = 0; i < 3; ++i) y += p[A1 + i] * std::exp(-(t - p[T0]) / p[Tau1 + i]);
    return y;
  }

  static void gradient(double t, std::span<const double, kParams> p, std::span<double, kParams> g) {
    const double dt = t - p[T0];
    g[T0] = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      const double tau = p[Tau1 + i];
      const double e = std::exp(-dt / tau);
      g[A1 + i] = e;
      g[Tau1 + i] = p[A1 + i] * e * dt / (tau * tau);
      g[T0] += p[A1 + i] * e / tau;
    }
    g[Baseline] = 1.0;
  }
};

/// Exciton saturation with a linear biexciton term:
/// I = A (1 - exp(-P / Psat)) + B P / Psat. Layout: A B Psat.
struct Saturation {
  static constexpr std::size_t kParams = 3;
  enum Index : std::size_t { A, B, Psat };

  static double value(double power, std::span<const double, kParams> p) {
    const double u = power / p[Psat];
    return p[A] * -std::expm1(-u) + p[B] * u;
  }

  static void gradient(double power, std::span<const double, kParams> p,
                       std::span<double, kParams> g) {
    const double u = power / p[Psat];
    const double e = std::exp(-u);
    g[A] = -std::expm1(-u);
    g[B] = u;
    g[Psat] = -(u / p[Psat]) * (p[A] * e + p[B]);
  }
};

/// Gaussian line on a constant baseline. Layout: amplitude center sigma baseline.
struct Gaussian {
  static constexpr std::size_t kParams = 4;
  enum Index : std::size_t { Amplitude, Center, Sigma, Baseline };

  static double value(double x, std::span<const double, kParams> p) {
    const double z = (x - p[Center]) / p[Sigma];
    return p[Amplitude] * std::exp(-0.5 * z * z) + p[Baseline];
  }

  static void gradient(double x, std::span<const double, kParams> p, std::span<double, kParams> g) {
    const double d = x - p[Center];
    const double s = p[Sigma];
    const double e = std::exp(-0.5 * d * d / (s * s));
    g[Amplitude] = e;
    g[Center] = p[Amplitude] * e * d / (s * s);
    g[Sigma] = p[Amplitude] * e * d * d / (s * s * s);
    g[Baseline] = 1.0;
  }
};

/// Power law with exponential cut-off: P(t) = C t^-m exp(-t / tau_c).
/// Layout: C m tau_c.
struct TruncatedPowerLawCurve {
  static constexpr std::size_t kParams = 3;
  enum Index : std::size_t { C, M, TauC };

  static double value(double t, std::span<const double, kParams> p) {
    return p[C] * std::pow(t, -p[M]) * std::exp(-t / p[TauC]);
  }

  static void gradient(double t, std::span<const double, kParams> p, std::span<double, kParams> g) {
    const double v = value(t, p);
    g[C] = v / p[C];
    g[M] = -v * std::log(t);
    g[TauC] = v * t / (p[TauC] * p[TauC]);
  }
};

/// Logarithm of TruncatedPowerLawCurve in a linear-friendly layout:
/// log P = log C - m log t - kappa t, with kappa = 1 / tau_c.
/// Layout: logC m kappa.
struct LogTruncatedPowerLaw {
  static constexpr std::size_t kParams = 3;
  enum Index : std::size_t { LogC, M, Kappa };

  static double value(double t, std::span<const double, kParams> p) {
    return p[LogC] - p[M] * std::log(t) - p[Kappa] * t;
  }

  static void gradient(double t, std::span<const double, kParams>, std::span<double, kParams> g) {
    g[LogC] = 1.0;
    g[M] = -std::log(t);
    g[Kappa] = -t;
  }
};

template <typename M>
concept ModelFamily = requires(double x, std::span<const double, M::kParams> p,
                               std::span<double, M::kParams> g) {
  { M::value(x, p) } -> std::convertible_to<double>;
  M::gradient(x, p, g);
};

/// Weighted curve fit of a model family with an optional subset of parameters
/// held fixed. The optimizer sees only the free parameters.
template <ModelFamily Model>
class CurveProblem {
 public:
  static constexpr std::size_t N = Model::kParams;

  CurveProblem(std::span<const double> x, std::span<const double> y,
               std::span<const double> weights, std::array<double, N> full,
               std::vector<std::size_t> free_indices)
      : x_(x), y_(y), full_(full), free_(std::move(free_indices)) {
    sqrt_w_.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      sqrt_w_[i] = weights.empty() ? 1.0 : std::sqrt(weights[i]);
  }

  std::size_t residual_count() const { return x_.size(); }

  std::array<double, N> expand(const Vector& free) const {
    auto p = full_;
    for (std::size_t k = 0; k < free_.size(); ++k) p[free_[k]] = free[static_cast<Eigen::Index>(k)];
    return p;
  }

  Vector pack(const std::array<double, N>& p) const {
    Vector v(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t k = 0; k < free_.size(); ++k) v[static_cast<Eigen::Index>(k)] = p[free_[k]];
    return v;
  }

  void residuals(const Vector& free, Vector& r) const {
    const auto p = expand(free);
    r.resize(static_cast<Eigen::Index>(x_.size()));
    for (std::size_t i = 0; i < x_.size(); ++i)
      r[static_cast<Eigen::Index>(i)] = sqrt_w_[i] * (Model::value(x_[i], p) - y_[i]);
  }

  void jacobian(const Vector& free, Matrix& jac) const {
    const auto p = expand(free);
    jac.resize(static_cast<Eigen::Index>(x_.size()), static_cast<Eigen::Index>(free_.size()));
    std::array<double, N> g{};
    for (std::size_t i = 0; i < x_.size(); ++i) {
      Model::gradient(x_[i], p, g);
      for (std::size_t k = 0; k < free_.size(); ++k)
        jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = sqrt_w_[i] * g[free_[k]];
    }
  }

  const std::vector<std::size_t>& free_indices() const { return free_; }

 private:
  std::span<const double> x_;
  std::span<const double> y_;
  std::vector<double> sqrt_w_;
  std::array<double, N> full_;
  std::vector<std::size_t> free_;
};

template <ModelFamily Model>
std::vector<std::size_t> all_parameters() {
  std::vector<std::size_t> idx(Model::kParams);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

}  // namespace photonstat::fit
