#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "photonstat/core.hpp"
#include "photonstat/error.hpp"
#include "photonstat/lm.hpp"
#include "photonstat/models.hpp"
#include "photonstat/units.hpp"

namespace photonstat::lifetime {

enum class Normalization { raw, peak };

/// Micro-time histogram over one pulse period. Bin i spans
/// [i w, (i + 1) w); the last bin is shorter when w does not divide the period.
struct DecayHistogram {
  TimePs bin_width_ps = 100;
  TimePs rep_period_ps = kDefaultRepPeriodPs;
  std::vector<double> counts;
  Normalization normalization = Normalization::raw;

  std::size_t size() const noexcept { return counts.size(); }
  /// Left edge of bin i in ns; this is the time axis the fits use.
  double time_ns(std::size_t i) const { return ps_to_ns(static_cast<double>(i * bin_width_ps)); }
  std::size_t peak_bin() const {
    return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
};

inline DecayHistogram decay_histogram(const PhotonStream& stream, TimePs bin_width_ps,
                                      Normalization normalization = Normalization::raw) {
  if (!stream.pulsed()) throw UnsupportedModeError("decay histogram needs a pulsed stream");
  if (bin_width_ps == 0) throw ValidationError("bin width must be positive");
  DecayHistogram h;
  h.bin_width_ps = bin_width_ps;
  h.rep_period_ps = stream.rep_period_ps;
  h.counts.assign((stream.rep_period_ps + bin_width_ps - 1) / bin_width_ps, 0.0);
  for (const auto& r : stream.records) h.counts[micro_time(r.t_abs, stream.rep_period_ps).value / bin_width_ps] += 1.0;
  if (normalization == Normalization::peak) {
    const double peak = *std::max_element(h.counts.begin(), h.counts.end());
    if (peak > 0.0)
      for (double& c : h.counts) c /= peak;
    h.normalization = Normalization::peak;
  }
  return h;
}

struct TriExpFit {
  std::array<double, 3> amplitudes{};
  std::array<double, 3> lifetimes_ns{};  // ascending
  double t0_ns = 0.0;
  double baseline = 0.0;
  std::array<double, 3> amplitude_errors{};
  std::array<double, 3> lifetime_errors{};
  double baseline_error = 0.0;
  double residual_rms = 0.0;
  double cost = 0.0;
  int iterations = 0;
  int starts_used = 0;
  bool converged = false;
};

struct TriExpOptions {
  bool poisson_weights = true;  // 1 / max(count, 1); false fits unweighted
  // Refits with weights 1 / model. Count-based weights pull the curve under
  // sparse tails; reweighting by the model converges to the Poisson maximum
  // likelihood estimate. 0 keeps the count-weighted fit.
  int refine_passes = 2;
  fit::LmOptions lm{};
};

/// Evaluates the fitted curve at t (ns).
inline double model_value(const TriExpFit& f, double t_ns) {
  double v = f.baseline;
  for (int k = 0; k < 3; ++k) v += f.amplitudes[k] * std::exp(-(t_ns - f.t0_ns) / f.lifetimes_ns[k]);
  return v;
}

namespace detail {

using Model = fit::TriExponential;
using Params = std::array<double, Model::kParams>;

/// Amplitudes and baseline by weighted linear least squares for fixed
/// lifetimes and onset, clipped to be non-negative.
inline void linear_amplitudes(std::span<const double> x, std::span<const double> y,
                              std::span<const double> w, Params& p) {
  fit::Matrix a(static_cast<Eigen::Index>(x.size()), 4);
  fit::Vector b(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double sw = std::sqrt(w[i]);
    const auto r = static_cast<Eigen::Index>(i);
    for (int k = 0; k < 3; ++k) a(r, k) = sw * std::exp(-(x[i] - p[Model::T0]) / p[Model::Tau1 + k]);
    a(r, 3) = sw;
    b[r] = sw * y[i];
  }
  const fit::Vector c = a.colPivHouseholderQr().solve(b);
  const double ymax = *std::max_element(y.begin(), y.end());
  for (int k = 0; k < 3; ++k) p[Model::A1 + k] = c[k] > 0.0 ? c[k] : 1e-3 * ymax;
  p[Model::Baseline] = std::max(0.0, c[3]);
}

/// Decay constant from a least-squares line through log(y - baseline) over
/// points with x in [lo, hi). Returns NaN when the slope is not negative.
inline double log_slope_lifetime(std::span<const double> x, std::span<const double> y, double t0,
                                 double baseline, double lo, double hi) {
  double n = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dt = x[i] - t0;
    const double s = y[i] - baseline;
    if (dt < lo || dt >= hi || s <= 0.0) continue;
    const double ly = std::log(s);
    n += 1.0;
    sx += dt;
    sy += ly;
    sxx += dt * dt;
    sxy += dt * ly;
  }
  const double den = n * sxx - sx * sx;
  if (n < 3.0 || den <= 0.0) return std::nan("");
  const double slope = (n * sxy - sx * sy) / den;
  return slope < 0.0 ? -1.0 / slope : std::nan("");
}

/// Lifetimes from the log-slopes of three geometrically growing tertiles of
/// the decay: [0, T/9), [T/9, T/3), [T/3, T).
inline std::array<double, 3> tertile_lifetimes(std::span<const double> x, std::span<const double> y,
                                               double t0, double step) {
  const std::size_t tail = std::max<std::size_t>(5, y.size() / 20);
  double baseline = 0.0;
  for (std::size_t i = y.size() - tail; i < y.size(); ++i) baseline += y[i];
  baseline /= static_cast<double>(tail);
  const double peak = *std::max_element(y.begin(), y.end());

  // Extent of the visible decay: last point still 2% of the way above baseline.
  double extent = x.back() - t0;
  for (std::size_t i = x.size(); i-- > 0;)
    if (y[i] - baseline > 0.02 * (peak - baseline)) {
      extent = std::max(x[i] - t0, 10.0 * step);
      break;
    }
  baseline = std::min(baseline, *std::min_element(y.begin(), y.end()));

  const std::array<double, 4> edges{0.0, extent / 9.0, extent / 3.0, extent};
  std::array<double, 3> tau{};
  for (int k = 0; k < 3; ++k) {
    tau[k] = log_slope_lifetime(x, y, t0, baseline, edges[k], edges[k + 1]);
    if (!std::isfinite(tau[k])) tau[k] = 0.5 * (edges[k] + edges[k + 1]);
    tau[k] = std::clamp(tau[k], 2.0 * step, 10.0 * (x.back() - t0));
  }
  std::sort(tau.begin(), tau.end());
  tau[1] = std::max(tau[1], 1.5 * tau[0]);
  tau[2] = std::max(tau[2], 1.5 * tau[1]);
  return tau;
}

inline TriExpFit to_result(const Params& p, const fit::LmResult& r, std::size_t n_points) {
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return p[Model::Tau1 + a] < p[Model::Tau1 + b]; });
  // Free layout: A1 A2 A3 tau1 tau2 tau3 B.
  TriExpFit f;
  for (int k = 0; k < 3; ++k) {
    f.amplitudes[k] = p[Model::A1 + order[k]];
    f.lifetimes_ns[k] = p[Model::Tau1 + order[k]];
    f.amplitude_errors[k] = r.standard_errors[order[k]];
    f.lifetime_errors[k] = r.standard_errors[3 + order[k]];
  }
  f.t0_ns = p[Model::T0];
  f.baseline = p[Model::Baseline];
  f.baseline_error = r.standard_errors[6];
  f.cost = r.cost;
  f.iterations = r.iterations;
  f.converged = r.converged;
  f.residual_rms = std::sqrt(2.0 * r.cost / static_cast<double>(n_points));
  return f;
}

}  // namespace detail

/// Weighted tri-exponential fit of points (x in ns) past a fixed onset t0.
/// The onset is not fitted: shifting it only rescales the amplitudes.
inline TriExpFit fit_triexp_points(std::span<const double> x, std::span<const double> y,
                                   std::span<const double> weights, double t0_ns,
                                   const std::optional<TriExpFit>& init = {}, const fit::LmOptions& lm = {}) {
  using detail::Model;
  const double step = x.size() > 1 ? x[1] - x[0] : 1.0;
  const double span = x.back() - x.front();

  detail::Params base{};
  base[Model::T0] = t0_ns;
  std::array<double, 3> tau0{};
  if (init) {
    tau0 = init->lifetimes_ns;
  } else {
    tau0 = detail::tertile_lifetimes(x, y, t0_ns, step);
  }

  const std::vector<std::size_t> free{Model::A1, Model::A2, Model::A3, Model::Tau1,
                                      Model::Tau2, Model::Tau3, Model::Baseline};
  fit::Bounds bounds;
  bounds.lower.resize(7);
  bounds.upper.resize(7);
  const double inf = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    bounds.lower[k] = 0.0;
    bounds.upper[k] = inf;
    bounds.lower[3 + k] = 0.1 * step;
    bounds.upper[3 + k] = 1e3 * std::max(span, step);
  }
  bounds.lower[6] = 0.0;
  bounds.upper[6] = inf;

  auto run = [&](const std::array<double, 3>& tau, bool use_init_amplitudes) {
    detail::Params p = base;
    for (int k = 0; k < 3; ++k) p[Model::Tau1 + k] = tau[k];
    if (use_init_amplitudes) {
      for (int k = 0; k < 3; ++k) p[Model::A1 + k] = init->amplitudes[k];
      p[Model::Baseline] = init->baseline;
    } else {
      detail::linear_amplitudes(x, y, weights, p);
    }
    fit::CurveProblem<Model> problem(x, y, weights, p, free);
    const auto r = fit::levenberg_marquardt(problem, problem.pack(p), bounds, lm);
    return detail::to_result(problem.expand(r.params), r, x.size());
  };

  TriExpFit best = run(tau0, init.has_value());
  best.starts_used = 1;
  // Tri-exponential surfaces are multimodal; retry from scaled lifetimes when
  // the first attempt stalls or collapses a component onto a bound.
  auto suspicious = [&](const TriExpFit& f) {
    if (!f.converged) return true;
    for (int k = 0; k < 3; ++k)
      if (f.amplitudes[k] <= 0.0 || f.lifetimes_ns[k] <= bounds.lower[3] ||
          f.lifetimes_ns[k] >= bounds.upper[3])
        return true;
    return false;
  };
  if (suspicious(best)) {
    for (double scale : {0.3, 3.0}) {
      std::array<double, 3> tau = tau0;
      for (double& t : tau) t *= scale;
      TriExpFit f = run(tau, false);
      ++best.starts_used;
      if ((f.converged && !best.converged) || (f.converged == best.converged && f.cost < best.cost)) {
        const int used = best.starts_used;
        best = f;
        best.starts_used = used;
      }
    }
  }
  return best;
}

/// Fits the decay from the peak bin onward, with t0 fixed at the peak bin's
/// left edge unless `init` supplies one.
inline TriExpFit fit_triexp(const DecayHistogram& hist, const std::optional<TriExpFit>& init = {},
                            const TriExpOptions& options = {}) {
  if (hist.counts.empty()) throw InsufficientStatisticsError("empty decay histogram");
  const auto [lo, hi] = std::minmax_element(hist.counts.begin(), hist.counts.end());
  if (*lo == *hi) throw DegenerateDataError("decay histogram is flat");

  const std::size_t peak = hist.peak_bin();
  std::size_t nonzero = 0;
  for (std::size_t i = peak + 1; i < hist.size(); ++i) nonzero += hist.counts[i] > 0.0 ? 1 : 0;
  if (nonzero < 50)
    throw InsufficientStatisticsError("need at least 50 nonzero bins past the decay peak, found " +
                                      std::to_string(nonzero));

  // A short final bin would see less exposure than the model assumes.
  std::size_t end = hist.size();
  if (hist.rep_period_ps % hist.bin_width_ps != 0) --end;

  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> w;
  for (std::size_t i = peak; i < end; ++i) {
    x.push_back(hist.time_ns(i));
    y.push_back(hist.counts[i]);
    w.push_back(options.poisson_weights ? 1.0 / std::max(hist.counts[i], 1.0) : 1.0);
  }
  const double t0 = init ? init->t0_ns : hist.time_ns(peak);
  TriExpFit best = fit_triexp_points(x, y, w, t0, init, options.lm);
  if (!options.poisson_weights) return best;

  const int starts = best.starts_used;
  for (int pass = 0; pass < options.refine_passes; ++pass) {
    double peak_value = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      w[i] = model_value(best, x[i]);
      peak_value = std::max(peak_value, w[i]);
    }
    // Relative floor keeps the weights scale free.
    const double floor = 1e-6 * peak_value;
    for (double& v : w) v = 1.0 / std::max(v, floor);
    best = fit_triexp_points(x, y, w, t0, best, options.lm);
  }
  best.starts_used = starts;
  return best;
}

enum class LifetimeConvention { amplitude_weighted, intensity_weighted };

/// sum A tau / sum A, or sum A tau^2 / sum A tau.
inline double average_lifetime(const TriExpFit& fit,
                               LifetimeConvention convention = LifetimeConvention::amplitude_weighted) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double a = fit.amplitudes[k];
    const double t = fit.lifetimes_ns[k];
    s0 += a;
    s1 += a * t;
    s2 += a * t * t;
  }
  if (convention == LifetimeConvention::amplitude_weighted) {
    if (!(s0 > 0.0)) throw DegenerateDataError("all amplitudes are zero");
    return s1 / s0;
  }
  if (!(s1 > 0.0)) throw DegenerateDataError("all amplitudes are zero");
  return s2 / s1;
}

struct SaturationPoint {
  double power;
  double intensity;
};

struct SaturationFit {
  double a = 0.0;
  double b = 0.0;
  double p_sat = 0.0;
  double a_error = 0.0;
  double b_error = 0.0;
  double p_sat_error = 0.0;
  double residual_rms = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Unweighted fit of I = A (1 - exp(-P / Psat)) + B P / Psat with A, B >= 0.
inline SaturationFit fit_saturation(std::vector<SaturationPoint> points, const fit::LmOptions& lm = {}) {
  if (points.size() < 4) throw ValidationError("saturation fit needs at least 4 points");
  std::sort(points.begin(), points.end(), [](auto& a, auto& b) { return a.power < b.power; });
  if (!(points.front().power > 0.0)) throw ValidationError("powers must be positive");
  if (points.back().power < 10.0 * points.front().power)
    throw ValidationError("powers must span at least one decade");

  std::vector<double> x, y;
  for (const auto& p : points) {
    x.push_back(p.power);
    y.push_back(p.intensity);
  }
  const double ymax = *std::max_element(y.begin(), y.end());
  if (!(ymax > 0.0)) throw DegenerateDataError("all intensities are zero");

  // Power at which the curve first reaches (1 - 1/e) of its maximum.
  const double level = (1.0 - std::exp(-1.0)) * ymax;
  double psat = x.back();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] < level) continue;
    if (i == 0) {
      psat = x[0];
    } else {
      const double f = (level - y[i - 1]) / (y[i] - y[i - 1]);
      psat = x[i - 1] + f * (x[i] - x[i - 1]);
    }
    break;
  }

  using M = fit::Saturation;
  std::array<double, 3> p0{ymax, 0.0, psat};
  fit::CurveProblem<M> problem(x, y, {}, p0, fit::all_parameters<M>());
  const double inf = std::numeric_limits<double>::infinity();
  fit::Bounds bounds{fit::Vector::Zero(3), fit::Vector::Constant(3, inf)};
  bounds.lower[M::Psat] = 1e-12 * x.front();
  const auto r = fit::levenberg_marquardt(problem, problem.pack(p0), bounds, lm);

  SaturationFit out;
  out.a = r.params[M::A];
  out.b = r.params[M::B];
  out.p_sat = r.params[M::Psat];
  out.a_error = r.standard_errors[M::A];
  out.b_error = r.standard_errors[M::B];
  out.p_sat_error = r.standard_errors[M::Psat];
  out.residual_rms = std::sqrt(2.0 * r.cost / static_cast<double>(x.size()));
  out.iterations = r.iterations;
  out.converged = r.converged;
  return out;
}

}  // namespace photonstat::lifetime
