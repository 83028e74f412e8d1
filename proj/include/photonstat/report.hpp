#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "photonstat/blinking.hpp"
#include "photonstat/corr.hpp"
#include "photonstat/lifetime.hpp"
#include "photonstat/spectra.hpp"
#include "photonstat/stream_io.hpp"

// JSON and CSV renderings of analysis results. Layouts match schemas/.

namespace photonstat::report {

using nlohmann::json;

/// Non-finite numbers have no JSON spelling; they become null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(); }

inline std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

// --- g2 --------------------------------------------------------------------

inline json g2_json(const corr::CorrelationHistogram& h, const corr::G2Result& r) {
  json edges = json::array();
  for (std::size_t i = 0; i <= h.size(); ++i)
    edges.push_back(-h.max_delay_ps + static_cast<std::int64_t>(i) * h.bin_width_ps);
  json values = json::array();
  for (double v : h.counts) values.push_back(number(v));
  return {{"stage", corr::to_string(h.stage)},
          {"bin_width_ps", h.bin_width_ps},
          {"max_delay_ps", h.max_delay_ps},
          {"rep_period_ps", h.rep_period_ps},
          {"reference_delay_ps", h.reference_delay_ps},
          {"total_starts", h.total_starts},
          {"background_per_bin", number(h.background_per_bin)},
          {"bin_edges_ps", std::move(edges)},
          {"values", std::move(values)},
          {"result",
           {{"g2_zero", number(r.g2_zero)},
            {"center_area", number(r.center_area)},
            {"mean_side_area", number(r.mean_side_area)},
            {"n_side_peaks_used", r.n_side_peaks_used},
            {"background_cleaned", r.background_cleaned}}}};
}

inline std::string g2_csv(const corr::CorrelationHistogram& h) {
  std::string s = "delay_lo_ps,delay_hi_ps,value\n";
  for (std::size_t i = 0; i < h.size(); ++i) {
    const auto lo = -h.max_delay_ps + static_cast<std::int64_t>(i) * h.bin_width_ps;
    s += std::to_string(lo) + "," + std::to_string(lo + h.bin_width_ps) + "," + fmt(h.counts[i]) + "\n";
  }
  return s;
}

// --- decay -----------------------------------------------------------------

inline json triexp_json(const lifetime::TriExpFit& f) {
  json comps = json::array();
  for (int k = 0; k < 3; ++k)
    comps.push_back({{"amplitude", number(f.amplitudes[k])},
                     {"amplitude_error", number(f.amplitude_errors[k])},
                     {"lifetime_ns", number(f.lifetimes_ns[k])},
                     {"lifetime_error_ns", number(f.lifetime_errors[k])}});
  json j = {{"components", std::move(comps)},
            {"t0_ns", number(f.t0_ns)},
            {"baseline", number(f.baseline)},
            {"baseline_error", number(f.baseline_error)},
            {"residual_rms", number(f.residual_rms)},
            {"iterations", f.iterations},
            {"starts_used", f.starts_used},
            {"converged", f.converged}};
  double amp = std::numeric_limits<double>::quiet_NaN();
  double inten = amp;
  try {
    amp = lifetime::average_lifetime(f, lifetime::LifetimeConvention::amplitude_weighted);
    inten = lifetime::average_lifetime(f, lifetime::LifetimeConvention::intensity_weighted);
  } catch (const DegenerateDataError&) {
  }
  j["average_lifetime_ns"] = {{"amplitude_weighted", number(amp)}, {"intensity_weighted", number(inten)}};
  return j;
}

inline json decay_json(const lifetime::DecayHistogram& h, const lifetime::TriExpFit* fit) {
  json j = {{"bin_width_ps", h.bin_width_ps},
            {"rep_period_ps", h.rep_period_ps},
            {"normalization", h.normalization == lifetime::Normalization::raw ? "raw" : "peak"},
            {"counts", h.counts}};
  j["fit"] = fit ? triexp_json(*fit) : json();
  return j;
}

inline std::string decay_csv(const lifetime::DecayHistogram& h, const lifetime::TriExpFit* fit) {
  std::string s = fit ? "time_ns,counts,model\n" : "time_ns,counts\n";
  std::array<double, 8> p{};
  if (fit) {
    using M = fit::TriExponential;
    for (int k = 0; k < 3; ++k) {
      p[M::A1 + k] = fit->amplitudes[k];
      p[M::Tau1 + k] = fit->lifetimes_ns[k];
    }
    p[M::T0] = fit->t0_ns;
    p[M::Baseline] = fit->baseline;
  }
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double t = h.time_ns(i);
    s += fmt(t) + "," + fmt(h.counts[i]);
    if (fit) s += "," + (t >= fit->t0_ns ? fmt(fit::TriExponential::value(t, p)) : std::string());
    s += "\n";
  }
  return s;
}

inline json saturation_json(const lifetime::SaturationFit& f) {
  return {{"a", number(f.a)},         {"b", number(f.b)},
          {"p_sat", number(f.p_sat)}, {"a_error", number(f.a_error)},
          {"b_error", number(f.b_error)}, {"p_sat_error", number(f.p_sat_error)},
          {"residual_rms", number(f.residual_rms)}, {"iterations", f.iterations},
          {"converged", f.converged}};
}

// --- blinking --------------------------------------------------------------

inline json power_law_json(const blinking::PowerLawFit& f) {
  return {{"c", number(f.c)},
          {"m_off", number(f.m_off)},
          {"m_error", number(f.m_error)},
          {"tau_c_s", number(f.tau_c_s)},
          {"residual_rms", number(f.residual_rms)},
          {"iterations", f.iterations},
          {"converged", f.converged},
          {"levy_like", f.levy_like()}};
}

/// `cdf` and `fit` may be null when there were too few OFF events.
inline json blink_json(const IntensityTrace& trace, const blinking::SegmentedTrace& seg,
                       const blinking::OffCdf* cdf, const blinking::PowerLawFit* fit) {
  std::size_t on = 0, off = 0, off_bins = 0;
  for (const auto& s : seg.segments) {
    if (s.state == blinking::State::on) {
      ++on;
    } else {
      ++off;
      off_bins += s.length;
    }
  }
  json hist = json::array();
  for (const auto& [count, n] : blinking::intensity_histogram(trace)) hist.push_back({count, n});
  json j = {{"bin_width_ps", seg.bin_width_ps},
            {"threshold", seg.threshold},
            {"n_bins", seg.n_bins},
            {"on_segments", on},
            {"off_segments", off},
            {"off_fraction", seg.n_bins ? static_cast<double>(off_bins) / static_cast<double>(seg.n_bins) : 0.0},
            {"intensity_histogram", std::move(hist)}};
  if (cdf) {
    j["off_cdf"] = {{"n_events", cdf->n_events}, {"durations_s", cdf->durations_s}, {"probabilities", cdf->probabilities}};
  } else {
    j["off_cdf"] = json();
  }
  j["fit"] = fit ? power_law_json(*fit) : json();
  return j;
}

inline std::string trace_csv(const IntensityTrace& trace, double threshold) {
  std::string s = "time_s,counts,state\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double t = ps_to_s(static_cast<double>(trace.start_ps + i * trace.bin_width_ps));
    const bool off = static_cast<double>(trace.counts[i]) < threshold;
    s += fmt(t) + "," + std::to_string(trace.counts[i]) + "," + (off ? "off" : "on") + "\n";
  }
  return s;
}

// --- FLID ------------------------------------------------------------------

inline json flid_json(const blinking::FlidMap& map, const std::vector<blinking::FlidMode>& modes) {
  json m = json::array();
  for (const auto& mode : modes)
    m.push_back({{"intensity", mode.intensity}, {"lifetime_ns", mode.lifetime_ns}, {"density", mode.density}});
  return {{"bin_width_ps", map.bin_width_ps},
          {"n_points", map.points.size()},
          {"t0_ns", map.t0_ns},
          {"bandwidth_intensity", map.bandwidth_intensity},
          {"bandwidth_lifetime_ns", map.bandwidth_lifetime},
          {"grid", {{"n_intensity", map.intensity_axis.size()},
                    {"n_lifetime", map.lifetime_axis.size()},
                    {"intensity_min", map.intensity_axis.front()},
                    {"intensity_max", map.intensity_axis.back()},
                    {"lifetime_min_ns", map.lifetime_axis.front()},
                    {"lifetime_max_ns", map.lifetime_axis.back()}}},
          {"mass", map.mass()},
          {"modes", std::move(m)}};
}

inline std::string flid_csv(const blinking::FlidMap& map) {
  std::string s = "intensity,lifetime,density\n";
  const std::size_t ny = map.lifetime_axis.size();
  for (std::size_t i = 0; i < map.intensity_axis.size(); ++i)
    for (std::size_t j = 0; j < ny; ++j)
      s += fmt(map.intensity_axis[i]) + "," + fmt(map.lifetime_axis[j]) + "," + fmt(map.density[i * ny + j]) + "\n";
  return s;
}

// --- spectra ---------------------------------------------------------------

inline json cohort_json(const spectra::CohortStats& c, const std::vector<spectra::PeakMetrics>& metrics) {
  json scatter = json::array();
  for (const auto& m : metrics) {
    json row = {{"cew_nm", m.cew_nm}, {"fwhm_nm", m.fwhm_nm}};
    if (!m.source.empty()) row["source"] = m.source;
    scatter.push_back(std::move(row));
  }
  return {{"n", c.n},
          {"mean_cew_nm", c.mean_cew_nm},
          {"std_cew_nm", c.std_cew_nm},
          {"mean_fwhm_nm", c.mean_fwhm_nm},
          {"std_fwhm_nm", c.std_fwhm_nm},
          {"scatter", std::move(scatter)}};
}

}  // namespace photonstat::report
