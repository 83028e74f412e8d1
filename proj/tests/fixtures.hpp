#pragma once

// Reference tri-exponential decays shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <array>
#include <cmath>

#include "photonstat/lifetime.hpp"
#include "photonstat/random.hpp"

namespace fixture {

using photonstat::Rng;
using photonstat::TimePs;
using photonstat::lifetime::DecayHistogram;

struct Curve {
  std::array<double, 3> a;
  std::array<double, 3> tau;  // ns
  double t0;                  // ns
  double b;
};

// Ensemble decays.
inline const Curve kEnsemble[] = {
    {{0.46, 0.50, 0.024}, {3.0, 1.35, 13.0}, 3.17, 0.003},
    {{0.489, 0.336, 0.089}, {2.18, 13.1, 79.0}, 3.13, 0.01},
    {{0.346, 0.360, 0.195}, {5.8, 28.3, 150.0}, 3.13, 0.002},
    {{0.235, 0.304, 0.366}, {4.1, 30.0, 337.0}, 3.13, 0.001},
};
// Single-dot decays; onset and baseline are not tabulated and are set here.
inline const Curve kSingleDot[] = {
    {{0.430, 0.678, 0.013}, {3.5, 8.4, 31.6}, 2.0, 0.001},
    {{0.259, 0.761, 0.035}, {4.5, 13.9, 37.8}, 2.0, 0.001},
    {{0.320, 0.634, 0.100}, {3.9, 19.6, 54.9}, 2.0, 0.001},
};

inline double curve_at(const Curve& c, double t) {
  if (t + 1e-9 < c.t0) return 0.0;
  double v = c.b;
  for (int k = 0; k < 3; ++k) v += c.a[k] * std::exp(-(t - c.t0) / c.tau[k]);
  return v;
}

inline DecayHistogram noiseless(const Curve& c, TimePs bin_ps) {
  DecayHistogram h;
  h.bin_width_ps = bin_ps;
  h.counts.resize(h.rep_period_ps / bin_ps);
  for (std::size_t i = 0; i < h.size(); ++i) h.counts[i] = curve_at(c, h.time_ns(i));
  return h;
}

// Poisson counts around the curve scaled to `photons` expected in total.
inline DecayHistogram noisy(const Curve& c, double photons, Rng& rng, double* scale = nullptr) {
  DecayHistogram h = noiseless(c, 100);
  double total = 0.0;
  for (double v : h.counts) total += v;
  const double k = photons / total;
  for (double& v : h.counts) v = static_cast<double>(rng.poisson(v * k));
  if (scale) *scale = k;
  return h;
}

inline std::array<double, 3> sorted_pairs(const Curve& c, std::array<double, 3>* amps) {
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int x, int y) { return c.tau[x] < c.tau[y]; });
  std::array<double, 3> tau{};
  for (int k = 0; k < 3; ++k) {
    tau[k] = c.tau[order[k]];
    (*amps)[k] = c.a[order[k]];
  }
  return tau;
}

}  // namespace fixture
