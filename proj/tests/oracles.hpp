#pragma once

// Independent reference implementations used only by tests. They favour
// obviousness over speed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "photonstat/core.hpp"
#include "photonstat/sim.hpp"

namespace oracle {

/// All ordered (ch0, ch1) pairs, binned by floor((d + max) / bin) for
/// -max <= d < max.
inline std::vector<double> brute_force_correlation(const photonstat::PhotonStream& s, std::int64_t bin,
                                                   std::int64_t max) {
  std::vector<double> h(static_cast<std::size_t>(2 * max / bin), 0.0);
  for (const auto& a : s.records) {
    if (a.channel != 0) continue;
    for (const auto& b : s.records) {
      if (b.channel != 1) continue;
      const auto d = static_cast<std::int64_t>(b.t_abs) - static_cast<std::int64_t>(a.t_abs);
      if (d < -max || d >= max) continue;
      h[static_cast<std::size_t>((d + max) / bin)] += 1.0;
    }
  }
  return h;
}

/// Central differences of f(x, p) with respect to each p_k.
template <std::size_t N>
std::array<double, N> numeric_gradient(const std::function<double(double, std::span<const double, N>)>& f,
                                       double x, std::array<double, N> p) {
  std::array<double, N> g{};
  for (std::size_t k = 0; k < N; ++k) {
    const double h = 1e-6 * std::max(std::abs(p[k]), 1e-3);
    auto up = p, dn = p;
    up[k] += h;
    dn[k] -= h;
    g[k] = (f(x, std::span<const double, N>(up)) - f(x, std::span<const double, N>(dn))) / (2.0 * h);
  }
  return g;
}

/// Ridders' extrapolated central differences: the step starts at 10% of
/// scale_k (default max(|p_k|, 1e-3)) and shrinks by 1.4 per stage; the Neville tableau entry
/// with the smallest error estimate wins. Accurate well below the round-off
/// floor of a fixed small step when a component is tiny next to f.
template <std::size_t N>
std::array<double, N> ridders_gradient(const std::function<double(double, std::span<const double, N>)>& f,
                                       double x, std::array<double, N> p,
                                       std::array<double, N> scale = {}) {
  constexpr int kStages = 10;
  constexpr double kShrink = 1.4, kShrink2 = kShrink * kShrink, kSafe = 2.0;
  std::array<double, N> g{};
  for (std::size_t k = 0; k < N; ++k) {
    auto diff = [&](double h) {
      auto up = p, dn = p;
      up[k] += h;
      dn[k] -= h;
      return (f(x, std::span<const double, N>(up)) - f(x, std::span<const double, N>(dn))) / (2.0 * h);
    };
    double h = 0.1 * (scale[k] > 0.0 ? scale[k] : std::max(std::abs(p[k]), 1e-3));
    double a[kStages][kStages];
    a[0][0] = diff(h);
    double err = std::numeric_limits<double>::max();
    g[k] = a[0][0];
    for (int i = 1; i < kStages; ++i) {
      h /= kShrink;
      a[0][i] = diff(h);
      double fac = kShrink2;
      for (int j = 1; j <= i; ++j) {
        a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
        fac *= kShrink2;
        const double e = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
        if (e <= err) {
          err = e;
          g[k] = a[j][i];
        }
      }
      if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) break;
    }
  }
  return g;
}

/// CDF of the density t^-m exp(-t / tau_c) on [t_min, inf), tabulated by
/// trapezoidal quadrature in u = log t and interpolated linearly.
class TruncatedPowerLawCdf {
 public:
  explicit TruncatedPowerLawCdf(const photonstat::sim::TruncatedPowerLaw& law, std::size_t nodes = 400000)
      : law_(law) {
    const double t_hi = law.t_min_ps + 80.0 * law.tau_c_ps;
    const double u0 = std::log(law.t_min_ps), u1 = std::log(t_hi);
    du_ = (u1 - u0) / static_cast<double>(nodes - 1);
    u0_ = u0;
    cum_.assign(nodes, 0.0);
    auto f = [&](double u) {
      const double t = std::exp(u);
      return std::pow(t, 1.0 - law.m) * std::exp(-(t - law.t_min_ps) / law.tau_c_ps);
    };
    double prev = f(u0);
    for (std::size_t i = 1; i < nodes; ++i) {
      const double cur = f(u0 + du_ * static_cast<double>(i));
      cum_[i] = cum_[i - 1] + 0.5 * (prev + cur) * du_;
      prev = cur;
    }
    for (double& c : cum_) c /= cum_.back();
  }

  double operator()(double t) const {
    if (t <= law_.t_min_ps) return 0.0;
    const double pos = (std::log(t) - u0_) / du_;
    if (pos >= static_cast<double>(cum_.size() - 1)) return 1.0;
    const auto i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    return cum_[i] + f * (cum_[i + 1] - cum_[i]);
  }

  /// Mean by the same quadrature: integral of t f(t) dt.
  double mean() const {
    double num = 0.0, prev_t = law_.t_min_ps, prev_c = 0.0;
    for (std::size_t i = 1; i < cum_.size(); ++i) {
      const double t = std::exp(u0_ + du_ * static_cast<double>(i));
      num += 0.5 * (t + prev_t) * (cum_[i] - prev_c);
      prev_t = t;
      prev_c = cum_[i];
    }
    return num;
  }

 private:
  photonstat::sim::TruncatedPowerLaw law_;
  double u0_ = 0.0;
  double du_ = 0.0;
  std::vector<double> cum_;
};

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> xs, const Cdf& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

}  // namespace oracle
