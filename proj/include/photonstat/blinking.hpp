#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <thread>
#include <vector>

#include "photonstat/core.hpp"
#include "photonstat/error.hpp"
#include "photonstat/lifetime.hpp"
#include "photonstat/lm.hpp"
#include "photonstat/models.hpp"
#include "photonstat/units.hpp"

namespace photonstat::blinking {

enum class State : std::uint8_t { off = 0, on = 1 };

inline const char* to_string(State s) { return s == State::on ? "on" : "off"; }

struct Segment {
  State state;
  std::size_t start_bin;
  std::size_t length;  // bins

  std::size_t end_bin() const noexcept { return start_bin + length; }
};

struct SegmentedTrace {
  double threshold = kDefaultOffThreshold;
  TimePs bin_width_ps = kDefaultTraceBinPs;
  std::size_t n_bins = 0;
  std::vector<Segment> segments;
};

/// Bin k is OFF when counts[k] < threshold; maximal runs of equal state form
/// the segments.
inline SegmentedTrace segment(const IntensityTrace& trace, double threshold = kDefaultOffThreshold) {
  if (!(threshold >= 0.0)) throw ValidationError("threshold must be >= 0");
  SegmentedTrace out;
  out.threshold = threshold;
  out.bin_width_ps = trace.bin_width_ps;
  out.n_bins = trace.size();
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const State s = static_cast<double>(trace.counts[k]) < threshold ? State::off : State::on;
    if (!out.segments.empty() && out.segments.back().state == s) ++out.segments.back().length;
    else out.segments.push_back({s, k, 1});
  }
  return out;
}

/// Empirical survival of OFF durations: probabilities[j] = P(T >= durations[j])
/// over the distinct durations, i.e. P(T > t) just below each observed value.
struct OffCdf {
  std::vector<double> durations_s;
  std::vector<double> probabilities;
  std::size_t n_events = 0;
};

inline constexpr std::size_t kMinOffEvents = 10;

/// OFF segments touching either end of the trace are censored and dropped.
inline OffCdf off_cdf(const SegmentedTrace& seg) {
  std::vector<std::size_t> lengths;
  for (const auto& s : seg.segments)
    if (s.state == State::off && s.start_bin > 0 && s.end_bin() < seg.n_bins) lengths.push_back(s.length);
  if (lengths.size() < kMinOffEvents)
    throw InsufficientStatisticsError("need at least " + std::to_string(kMinOffEvents) +
                                      " uncensored OFF segments, found " + std::to_string(lengths.size()));
  std::sort(lengths.begin(), lengths.end());

  OffCdf out;
  out.n_events = lengths.size();
  const double n = static_cast<double>(lengths.size());
  const double w = ps_to_s(static_cast<double>(seg.bin_width_ps));
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (i > 0 && lengths[i] == lengths[i - 1]) continue;
    out.durations_s.push_back(static_cast<double>(lengths[i]) * w);
    out.probabilities.push_back(static_cast<double>(lengths.size() - i) / n);
  }
  return out;
}

struct PowerLawFit {
  double c = 0.0;
  double m_off = 0.0;
  double tau_c_s = 0.0;  // infinite when the fit finds no cut-off
  double m_error = 0.0;
  double residual_rms = 0.0;  // of log P
  int iterations = 0;
  bool converged = false;

  /// OFF exponent below 1: long dark periods dominate (Levy-like statistics).
  bool levy_like() const noexcept { return m_off < 1.0; }
};

struct OffFitOptions {
  /// Weight each log residual by the inverse binomial variance of log P,
  /// n P / (1 - P + 1/n). Unweighted fits let the noisy last few events
  /// dominate.
  bool binomial_weights = true;
  fit::LmOptions lm{};
};

/// Fits log P = log C - m log t - t / tau_c to the survival curve with
/// tau_c > 0 (kappa = 1 / tau_c >= 0).
inline PowerLawFit fit_off_cdf(const OffCdf& cdf, const OffFitOptions& options = {}) {
  const std::size_t n = cdf.durations_s.size();
  if (n < 10)
    throw InsufficientStatisticsError("need at least 10 distinct OFF durations, found " + std::to_string(n));
  const double events = static_cast<double>(std::max<std::size_t>(cdf.n_events, 1));

  std::vector<double> x(cdf.durations_s);
  std::vector<double> y(n);
  std::vector<double> w(n, 1.0);
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::log(cdf.probabilities[j]);
    if (options.binomial_weights) {
      const double p = cdf.probabilities[j];
      w[j] = events * p / (std::max(0.0, 1.0 - p) + 1.0 / events);
    }
  }

  // m from the log-log slope over the first decade of durations.
  double m0 = 1.0;
  {
    double k = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t j = 0; j < n && x[j] <= 10.0 * x[0]; ++j) {
      const double lx = std::log(x[j]);
      k += 1.0;
      sx += lx;
      sy += y[j];
      sxx += lx * lx;
      sxy += lx * y[j];
    }
    const double den = k * sxx - sx * sx;
    if (k >= 2.0 && den > 0.0) m0 = -(k * sxy - sx * sy) / den;
  }
  const double log_c0 = y[0] + m0 * std::log(x[0]);
  // tau_c where the data fall 1/e below the power-law extrapolation.
  double tau0 = x.back();
  for (std::size_t j = 0; j < n; ++j)
    if (y[j] < log_c0 - m0 * std::log(x[j]) - 1.0) {
      tau0 = x[j];
      break;
    }

  using M = fit::LogTruncatedPowerLaw;
  std::array<double, 3> p0{log_c0, m0, 1.0 / tau0};
  fit::CurveProblem<M> problem(x, y, w, p0, fit::all_parameters<M>());
  const double inf = std::numeric_limits<double>::infinity();
  fit::Bounds bounds = fit::Bounds::unbounded(3);
  bounds.lower[M::Kappa] = 0.0;
  bounds.upper[M::Kappa] = inf;
  const auto r = fit::levenberg_marquardt(problem, problem.pack(p0), bounds, options.lm);

  PowerLawFit out;
  out.c = std::exp(r.params[M::LogC]);
  out.m_off = r.params[M::M];
  out.tau_c_s = r.params[M::Kappa] > 0.0 ? 1.0 / r.params[M::Kappa] : inf;
  out.m_error = r.standard_errors[M::M];
  double ss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = M::value(x[j], std::span<const double, 3>(r.params.data(), 3)) - y[j];
    ss += d * d;
  }
  out.residual_rms = std::sqrt(ss / static_cast<double>(n));
  out.iterations = r.iterations;
  out.converged = r.converged;
  return out;
}

/// Occurrences of each per-bin count value.
inline std::map<std::uint32_t, std::uint64_t> intensity_histogram(const IntensityTrace& trace) {
  std::map<std::uint32_t, std::uint64_t> out;
  for (auto c : trace.counts) ++out[c];
  return out;
}

struct FlidPoint {
  double intensity;    // photons in the bin
  double lifetime_ns;  // mean micro-time after t0
};

struct GridSpec {
  std::size_t n_intensity = 128;
  std::size_t n_lifetime = 128;
};

/// Kernel density over (intensity, lifetime). density is row-major with one
/// row per intensity grid value and integrates to 1 as a Riemann sum over
/// cells of size d_intensity * d_lifetime.
struct FlidMap {
  std::vector<FlidPoint> points;
  std::vector<double> intensity_axis;
  std::vector<double> lifetime_axis;
  std::vector<double> density;
  double bandwidth_intensity = 0.0;
  double bandwidth_lifetime = 0.0;
  double t0_ns = 0.0;
  TimePs bin_width_ps = kDefaultTraceBinPs;

  double d_intensity() const { return intensity_axis.size() > 1 ? intensity_axis[1] - intensity_axis[0] : 1.0; }
  double d_lifetime() const { return lifetime_axis.size() > 1 ? lifetime_axis[1] - lifetime_axis[0] : 1.0; }
  double at(std::size_t i, std::size_t j) const { return density[i * lifetime_axis.size() + j]; }
  double mass() const {
    double s = 0.0;
    for (double v : density) s += v;
    return s * d_intensity() * d_lifetime();
  }
};

inline constexpr std::size_t kMinFlidBins = 50;
inline constexpr TimePs kFlidDecayBinPs = 16;

/// Silverman's rule 1.06 sigma n^(-1/5), with sample standard deviation.
inline double silverman_bandwidth(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x / n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= std::max(1.0, n - 1.0);
  return 1.06 * std::sqrt(var) * std::pow(n, -0.2);
}

namespace detail {

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = n > 1 ? lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1) : lo;
  return v;
}

// A zero spread would make the kernel a delta; fall back to a width that
// still resolves on the grid.
inline double usable_bandwidth(double h, double scale) {
  if (h > 0.0) return h;
  return std::max(1e-3 * std::abs(scale), 1e-6);
}

}  // namespace detail

/// Points: per bin, photon count and mean (micro-time - t0), where t0 is the
/// mode of the global decay histogram. Bins with fewer than 2 photons are
/// skipped. The density uses a product Gaussian kernel cut off at 4 bandwidths.
inline FlidMap flid(const PhotonStream& stream, TimePs bin_width_ps = kDefaultTraceBinPs,
                    GridSpec grid = {}, unsigned threads = 1) {
  if (!stream.pulsed()) throw UnsupportedModeError("FLID needs a pulsed stream");
  if (bin_width_ps == 0) throw ValidationError("bin width must be positive");
  if (grid.n_intensity < 2 || grid.n_lifetime < 2) throw ValidationError("FLID grid needs at least 2x2 cells");

  FlidMap map;
  map.bin_width_ps = bin_width_ps;
  const TimePs rep = stream.rep_period_ps;
  const auto decay = lifetime::decay_histogram(stream, std::min(kFlidDecayBinPs, rep));
  const double t0_ps =
      (static_cast<double>(decay.peak_bin()) + 0.5) * static_cast<double>(decay.bin_width_ps);
  map.t0_ns = ps_to_ns(t0_ps);

  // Photons a little before t0 (timing jitter) wrap to the end of the period;
  // unwrap them so they count as small negative delays.
  const double wrap = static_cast<double>(rep) * 0.9;
  const TimePs nbins = stream.duration_ps / bin_width_ps;
  std::size_t i = 0;
  const auto& rec = stream.records;
  for (TimePs b = 0; b < nbins; ++b) {
    const TimePs end = (b + 1) * bin_width_ps;
    std::size_t count = 0;
    double sum = 0.0;
    for (; i < rec.size() && rec[i].t_abs < end; ++i) {
      double d = static_cast<double>(micro_time(rec[i].t_abs, rep).value) - t0_ps;
      if (d >= wrap) d -= static_cast<double>(rep);
      sum += d;
      ++count;
    }
    if (count >= 2)
      map.points.push_back({static_cast<double>(count), ps_to_ns(sum / static_cast<double>(count))});
  }
  if (map.points.size() < kMinFlidBins)
    throw InsufficientStatisticsError("need at least " + std::to_string(kMinFlidBins) +
                                      " bins with two or more photons, found " + std::to_string(map.points.size()));

  std::vector<double> xs, ys;
  for (const auto& p : map.points) {
    xs.push_back(p.intensity);
    ys.push_back(p.lifetime_ns);
  }
  const auto [xmin, xmax] = std::minmax_element(xs.begin(), xs.end());
  const auto [ymin, ymax] = std::minmax_element(ys.begin(), ys.end());
  const double hx = detail::usable_bandwidth(silverman_bandwidth(xs), *xmax);
  const double hy = detail::usable_bandwidth(silverman_bandwidth(ys), *ymax);
  map.bandwidth_intensity = hx;
  map.bandwidth_lifetime = hy;
  map.intensity_axis = detail::linspace(*xmin - 4.0 * hx, *xmax + 4.0 * hx, grid.n_intensity);
  map.lifetime_axis = detail::linspace(*ymin - 4.0 * hy, *ymax + 4.0 * hy, grid.n_lifetime);
  const double dx = map.d_intensity();
  const double dy = map.d_lifetime();
  const std::size_t nx = grid.n_intensity;
  const std::size_t ny = grid.n_lifetime;
  map.density.assign(nx * ny, 0.0);

  const double x0 = map.intensity_axis.front();
  const double y0 = map.lifetime_axis.front();
  const double norm = 1.0 / (2.0 * std::numbers::pi * hx * hy * static_cast<double>(xs.size()));

  // Each worker owns a block of intensity rows and scatters every point into
  // it in point order, so results do not depend on the thread count.
  auto fill_rows = [&](std::size_t row_lo, std::size_t row_hi) {
    std::vector<double> ky(ny);
    for (std::size_t p = 0; p < xs.size(); ++p) {
      const double fx_lo = std::ceil((xs[p] - 4.0 * hx - x0) / dx);
      const double fx_hi = std::floor((xs[p] + 4.0 * hx - x0) / dx);
      const auto ilo = static_cast<std::size_t>(std::max<double>(fx_lo, static_cast<double>(row_lo)));
      const auto ihi = static_cast<std::size_t>(std::min<double>(fx_hi + 1.0, static_cast<double>(row_hi)));
      if (fx_hi + 1.0 <= static_cast<double>(row_lo) || ilo >= ihi) continue;
      const auto jlo = static_cast<std::size_t>(std::max(0.0, std::ceil((ys[p] - 4.0 * hy - y0) / dy)));
      const auto jhi = static_cast<std::size_t>(
          std::min(static_cast<double>(ny), std::floor((ys[p] + 4.0 * hy - y0) / dy) + 1.0));
      for (std::size_t j = jlo; j < jhi; ++j) {
        const double z = (map.lifetime_axis[j] - ys[p]) / hy;
        ky[j] = std::exp(-0.5 * z * z);
      }
      for (std::size_t r = ilo; r < ihi; ++r) {
        const double z = (map.intensity_axis[r] - xs[p]) / hx;
        const double kx = norm * std::exp(-0.5 * z * z);
        double* row = &map.density[r * ny];
        for (std::size_t j = jlo; j < jhi; ++j) row[j] += kx * ky[j];
      }
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(nx)));
  if (threads == 1) {
    fill_rows(0, nx);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (nx + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t lo = std::min(nx, t * chunk);
      const std::size_t hi = std::min(nx, lo + chunk);
      pool.emplace_back(fill_rows, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  double total = 0.0;
  for (double v : map.density) total += v;
  total *= dx * dy;
  if (total > 0.0)
    for (double& v : map.density) v /= total;
  return map;
}

struct FlidMode {
  double intensity;
  double lifetime_ns;
  double density;
};

/// Grid local maxima (8-neighbourhood) holding at least `min_fraction` of the
/// global maximum, strongest first.
inline std::vector<FlidMode> flid_modes(const FlidMap& map, double min_fraction = 0.05) {
  const std::size_t nx = map.intensity_axis.size();
  const std::size_t ny = map.lifetime_axis.size();
  const double peak = map.density.empty() ? 0.0 : *std::max_element(map.density.begin(), map.density.end());
  std::vector<FlidMode> out;
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      const double v = map.at(i, j);
      if (v <= 0.0 || v < min_fraction * peak) continue;
      bool is_max = true;
      for (int di = -1; di <= 1 && is_max; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const auto a = static_cast<std::ptrdiff_t>(i) + di;
          const auto b = static_cast<std::ptrdiff_t>(j) + dj;
          if (a < 0 || b < 0 || a >= static_cast<std::ptrdiff_t>(nx) || b >= static_cast<std::ptrdiff_t>(ny))
            continue;
          const double u = map.at(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
          // Ties resolve toward the lower index so a flat top yields one mode.
          if (u > v || (u == v && (a < static_cast<std::ptrdiff_t>(i) ||
                                   (a == static_cast<std::ptrdiff_t>(i) && b < static_cast<std::ptrdiff_t>(j))))) {
            is_max = false;
            break;
          }
        }
      if (is_max) out.push_back({map.intensity_axis[i], map.lifetime_axis[j], v});
    }
  std::sort(out.begin(), out.end(), [](const FlidMode& a, const FlidMode& b) { return a.density > b.density; });
  return out;
}

}  // namespace photonstat::blinking
