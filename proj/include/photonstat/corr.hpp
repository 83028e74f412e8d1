#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include "photonstat/core.hpp"
#include "photonstat/error.hpp"
#include "photonstat/units.hpp"

namespace photonstat::corr {

enum class Stage { raw, cleaned, normalized };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::raw: return "raw";
    case Stage::cleaned: return "cleaned";
    case Stage::normalized: return "normalized";
  }
  return "?";
}

/// Coincidences of (channel 0 start, channel 1 stop) pairs binned by the signed
/// delay t1 - t0 over [-max_delay, +max_delay).
struct CorrelationHistogram {
  std::int64_t bin_width_ps = 1000;
  std::int64_t max_delay_ps = 0;
  std::vector<double> counts;
  std::uint64_t total_starts = 0;
  Stage stage = Stage::raw;
  bool background_cleaned = false;
  std::int64_t rep_period_ps = 0;
  std::int64_t reference_delay_ps = 0;  // set by normalize_peaks
  double background_per_bin = 0.0;      // S(tau_b) used by clean_background

  std::size_t size() const noexcept { return counts.size(); }
  double bin_lower_ps(std::size_t i) const {
    return static_cast<double>(-max_delay_ps + static_cast<std::int64_t>(i) * bin_width_ps);
  }
  double bin_center_ps(std::size_t i) const { return bin_lower_ps(i) + 0.5 * static_cast<double>(bin_width_ps); }
};

struct G2Result {
  double g2_zero = 0.0;
  double center_area = 0.0;
  double mean_side_area = 0.0;
  std::size_t n_side_peaks_used = 0;
  bool background_cleaned = false;
};

inline constexpr std::int64_t kDefaultBinPs = 1000;
inline constexpr int kDefaultMaxDelayPeriods = 25;
inline constexpr int kDefaultReferencePeriods = 10;

namespace detail {

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b;
  return (a % b != 0 && ((a < 0) == (b < 0))) ? q + 1 : q;
}

inline void accumulate(const std::vector<std::int64_t>& starts, const std::vector<std::int64_t>& stops,
                       std::size_t first, std::size_t last, std::int64_t bin, std::int64_t max_delay,
                       std::vector<std::uint64_t>& hist) {
  if (first >= last) return;
  auto lo = static_cast<std::size_t>(
      std::lower_bound(stops.begin(), stops.end(), starts[first] - max_delay) - stops.begin());
  for (std::size_t i = first; i < last; ++i) {
    const std::int64_t a = starts[i];
    while (lo < stops.size() && stops[lo] < a - max_delay) ++lo;
    for (std::size_t j = lo; j < stops.size(); ++j) {
      const std::int64_t d = stops[j] - a;
      if (d >= max_delay) break;
      ++hist[static_cast<std::size_t>((d + max_delay) / bin)];
    }
  }
}

}  // namespace detail

/// Two-pointer sweep over the sorted channel time lists. Work is linear in the
/// number of starts times the mean number of stops inside the delay window.
/// With threads > 1 the start range is split and partial histograms are summed.
inline CorrelationHistogram correlate(const PhotonStream& stream, std::int64_t bin_width_ps,
                                      std::int64_t max_delay_ps, unsigned threads = 1) {
  if (bin_width_ps <= 0 || max_delay_ps <= 0)
    throw ValidationError("bin width and max delay must be positive");
  if (max_delay_ps % bin_width_ps != 0)
    throw ValidationError("max delay must be a whole number of bins");

  std::vector<std::int64_t> starts;
  std::vector<std::int64_t> stops;
  for (const auto& r : stream.records)
    (r.channel == 0 ? starts : stops).push_back(static_cast<std::int64_t>(r.t_abs));
  if (starts.empty() || stops.empty())
    throw MissingChannelError("correlation needs photons on both channel 0 and channel 1");

  const auto nbins = static_cast<std::size_t>(2 * max_delay_ps / bin_width_ps);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(starts.size())));
  std::vector<std::vector<std::uint64_t>> partial(threads, std::vector<std::uint64_t>(nbins, 0));
  if (threads == 1) {
    detail::accumulate(starts, stops, 0, starts.size(), bin_width_ps, max_delay_ps, partial[0]);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (starts.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t first = std::min(starts.size(), t * chunk);
      const std::size_t last = std::min(starts.size(), first + chunk);
      pool.emplace_back([&, t, first, last] {
        detail::accumulate(starts, stops, first, last, bin_width_ps, max_delay_ps, partial[t]);
      });
    }
    for (auto& th : pool) th.join();
  }

  CorrelationHistogram h;
  h.bin_width_ps = bin_width_ps;
  h.max_delay_ps = max_delay_ps;
  h.total_starts = starts.size();
  h.rep_period_ps = static_cast<std::int64_t>(stream.rep_period_ps);
  h.counts.assign(nbins, 0.0);
  for (const auto& p : partial)
    for (std::size_t i = 0; i < nbins; ++i) h.counts[i] += static_cast<double>(p[i]);
  return h;
}

/// Half-open bin range whose centers fall in [lo_ps, hi_ps).
inline std::pair<std::size_t, std::size_t> bins_in(const CorrelationHistogram& h, std::int64_t lo_ps,
                                                   std::int64_t hi_ps) {
  // center_i = -max + (i + 1/2) w; compare doubled values to stay in integers.
  const std::int64_t w = h.bin_width_ps;
  auto first_at_or_above = [&](std::int64_t t) {
    return detail::ceil_div(2 * t + 2 * h.max_delay_ps - w, 2 * w);
  };
  const auto n = static_cast<std::int64_t>(h.size());
  const std::int64_t a = std::clamp<std::int64_t>(first_at_or_above(lo_ps), 0, n);
  const std::int64_t b = std::clamp<std::int64_t>(first_at_or_above(hi_ps), 0, n);
  return {static_cast<std::size_t>(a), static_cast<std::size_t>(std::max(a, b))};
}

/// Window of the k-th pulse peak: [k T - T/2, k T + T/2).
inline std::pair<std::size_t, std::size_t> peak_bins(const CorrelationHistogram& h, int k) {
  const std::int64_t rep = h.rep_period_ps;
  return bins_in(h, k * rep - rep / 2, k * rep - rep / 2 + rep);
}

/// Whether the k-th peak window lies entirely inside the histogram range.
inline bool peak_in_range(const CorrelationHistogram& h, int k) {
  const std::int64_t rep = h.rep_period_ps;
  return k * rep - rep / 2 >= -h.max_delay_ps && k * rep - rep / 2 + rep <= h.max_delay_ps;
}

inline double window_sum(const CorrelationHistogram& h, std::pair<std::size_t, std::size_t> range) {
  double s = 0.0;
  for (std::size_t i = range.first; i < range.second; ++i) s += h.counts[i];
  return s;
}

struct PeakArea {
  int index;       // delay in units of the pulse period
  double area;     // sum over the window; for normalized data, divided by bins per window
};

/// Area of every pulse peak fully inside the histogram range.
inline std::vector<PeakArea> peak_areas(const CorrelationHistogram& h) {
  if (h.rep_period_ps <= 0) throw UnsupportedModeError("peak areas need pulsed data");
  std::vector<PeakArea> out;
  const int kmax = static_cast<int>(h.max_delay_ps / h.rep_period_ps) + 1;
  for (int k = -kmax; k <= kmax; ++k) {
    if (!peak_in_range(h, k)) continue;
    const auto range = peak_bins(h, k);
    double area = window_sum(h, range);
    if (h.stage == Stage::normalized && range.second > range.first)
      area /= static_cast<double>(range.second - range.first);
    out.push_back({k, area});
  }
  return out;
}

struct DelayWindow {
  std::int64_t lo_ps;
  std::int64_t hi_ps;
};

/// Band centered half-way between the first and second positive side peaks,
/// one quarter period wide.
inline DelayWindow default_background_window(std::int64_t rep_period_ps) {
  const std::int64_t mid = rep_period_ps + rep_period_ps / 2;
  return {mid - rep_period_ps / 8, mid + rep_period_ps / 8};
}

/// Background removal S_clean = S + S_b - 2 sqrt(S) sqrt(S_b), where S_b is the
/// mean count per bin over a signal-free delay window.
inline CorrelationHistogram clean_background(const CorrelationHistogram& raw,
                                             std::optional<DelayWindow> window = {}) {
  if (raw.stage == Stage::normalized)
    throw ValidationError("background cleaning applies to raw or cleaned histograms");
  if (!window) {
    if (raw.rep_period_ps <= 0)
      throw UnsupportedModeError("default background window needs pulsed data");
    window = default_background_window(raw.rep_period_ps);
  }
  const auto range = bins_in(raw, window->lo_ps, window->hi_ps);
  if (range.second <= range.first)
    throw InvalidWindowError("background window holds no histogram bins");
  const double sb = window_sum(raw, range) / static_cast<double>(range.second - range.first);

  if (raw.rep_period_ps > 0) {
    double side_max = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i)
      if (std::abs(raw.bin_center_ps(i)) >= 0.5 * static_cast<double>(raw.rep_period_ps))
        side_max = std::max(side_max, raw.counts[i]);
    if (sb > 0.5 * side_max)
      throw InvalidWindowError("background window overlaps a correlation peak");
  }

  CorrelationHistogram out = raw;
  // (sqrt S - sqrt S_b)^2 is the same expression; the square form is exact
  // for S = S_b and never negative.
  const double root_b = std::sqrt(sb);
  if (root_b > 0.0)
    for (double& s : out.counts) {
      const double d = std::sqrt(s) - root_b;
      s = d * d;
    }
  out.stage = Stage::cleaned;
  out.background_cleaned = true;
  out.background_per_bin = sb;
  return out;
}

/// Scales the histogram so the reference peaks (|k T| >= reference delay) have
/// unit mean area, where a peak's area is its window sum divided by the bins
/// per window. Equivalently each normalized bin is a g2 value.
inline CorrelationHistogram normalize_peaks(const CorrelationHistogram& hist, std::int64_t rep_period_ps,
                                            std::int64_t reference_delay_ps) {
  if (rep_period_ps <= 0) throw UnsupportedModeError("peak normalization needs pulsed data");
  if (hist.stage == Stage::normalized) throw ValidationError("histogram is already normalized");
  CorrelationHistogram out = hist;
  out.rep_period_ps = rep_period_ps;
  out.reference_delay_ps = reference_delay_ps;

  double total = 0.0;
  double bins = 0.0;
  std::size_t n_ref = 0;
  const int kmax = static_cast<int>(hist.max_delay_ps / rep_period_ps) + 1;
  for (int k = -kmax; k <= kmax; ++k) {
    if (static_cast<std::int64_t>(std::abs(k)) * rep_period_ps < reference_delay_ps) continue;
    if (!peak_in_range(out, k)) continue;
    const auto range = peak_bins(out, k);
    total += window_sum(out, range);
    bins += static_cast<double>(range.second - range.first);
    ++n_ref;
  }
  if (n_ref < 3)
    throw InsufficientRangeError("need at least 3 reference peaks beyond the reference delay, found " +
                                 std::to_string(n_ref));
  const double mean_bins = bins / static_cast<double>(n_ref);
  const double mean_area = total / static_cast<double>(n_ref);
  if (!(mean_area > 0.0)) throw DegenerateDataError("reference peaks hold no coincidences");
  const double scale = mean_area / mean_bins;
  for (double& v : out.counts) v /= scale;
  out.stage = Stage::normalized;
  return out;
}

/// Reference peak indices ordered by distance from the reference delay,
/// positive side first at equal distance.
inline std::vector<int> reference_peaks(const CorrelationHistogram& h) {
  std::vector<int> ks;
  const int kmax = static_cast<int>(h.max_delay_ps / h.rep_period_ps) + 1;
  for (int d = 0; d <= kmax; ++d)
    for (int k : {d, -d}) {
      if (k == 0 || (d == 0 && k != 0)) continue;
      if (static_cast<std::int64_t>(d) * h.rep_period_ps < h.reference_delay_ps) continue;
      if (peak_in_range(h, k) && std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
    }
  return ks;
}

/// Center peak area over the mean area of `n_side_peaks` reference peaks
/// (0 uses all of them).
inline G2Result g2_zero(const CorrelationHistogram& hist, std::size_t n_side_peaks = 0) {
  if (hist.stage != Stage::normalized) throw ValidationError("g2_zero needs a normalized histogram");
  auto ks = reference_peaks(hist);
  if (n_side_peaks > 0) {
    if (ks.size() < n_side_peaks)
      throw InsufficientRangeError("requested " + std::to_string(n_side_peaks) + " side peaks, have " +
                                   std::to_string(ks.size()));
    ks.resize(n_side_peaks);
  }
  if (ks.empty()) throw InsufficientRangeError("no reference peaks in range");

  auto area = [&](int k) {
    const auto range = peak_bins(hist, k);
    return window_sum(hist, range) / static_cast<double>(std::max<std::size_t>(1, range.second - range.first));
  };
  G2Result r;
  r.center_area = area(0);
  double side = 0.0;
  for (int k : ks) side += area(k);
  r.mean_side_area = side / static_cast<double>(ks.size());
  r.n_side_peaks_used = ks.size();
  r.g2_zero = r.mean_side_area > 0.0 ? r.center_area / r.mean_side_area : 0.0;
  r.background_cleaned = hist.background_cleaned;
  return r;
}

}  // namespace photonstat::corr
