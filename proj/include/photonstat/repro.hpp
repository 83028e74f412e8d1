#pragma once

#include <cmath>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "photonstat/blinking.hpp"
#include "photonstat/corr.hpp"
#include "photonstat/lifetime.hpp"
#include "photonstat/report.hpp"
#include "photonstat/sim.hpp"

namespace photonstat::repro {

using nlohmann::json;

/// A reference observable with its target and acceptance band.
struct Target {
  double value = 0.0;
  double tolerance = 0.0;
  bool relative = false;  // tolerance is a fraction of value

  bool accepts(double measured) const {
    const double band = relative ? tolerance * std::abs(value) : tolerance;
    return std::isfinite(measured) && std::abs(measured - value) <= band;
  }
};

struct Profile {
  std::string name;
  std::string description;
  sim::EmitterModel model;
  TimePs duration_ps = kDefaultTraceLengthPs;
  Target g2_zero;
  Target m_off;
  Target tau_c_s;
};

// Bundled emitter profiles. Lifetimes follow the dominant components of the
// single-dot decay fits; the biexciton leak is calibrated so the generator's
// g2(0) equals the target; OFF dwell laws are the fitted blinking statistics.
// The copies under profiles/ must stay identical to these.
inline constexpr const char* kProfileX0 = R"({
  "name": "x0",
  "description": "Cs(1-x)FA(x)PbBr3 emitter, x = 0",
  "duration_ps": 600000000000000,
  "model": {
    "rep_period_ps": 400000,
    "mean_excitons_per_pulse": 1.0,
    "lifetime_bright_ps": 8400.0,
    "lifetime_dim_ps": 3500.0,
    "qy_bright": 0.7,
    "qy_dim": 0.05,
    "biexciton_leak": 0.03905,
    "dwell_on": {"m": 1.5, "tau_c_ps": 2e11, "t_min_ps": 3e10, "form": "survival"},
    "dwell_off": {"m": 1.34, "tau_c_ps": 2.5e11, "t_min_ps": 5e9, "form": "survival"},
    "blinking": true,
    "detect_efficiency": 0.005,
    "dark_rate_hz": 10.0,
    "bleach_tau_ps": null,
    "irf_sigma_ps": 30.0,
    "biexciton_lifetime_factor": 0.5,
    "dead_time_ps": 0.0,
    "seed": 1
  },
  "targets": {
    "g2_zero": {"value": 0.05, "tolerance": 0.02},
    "m_off": {"value": 1.34, "tolerance": 0.1},
    "tau_c_s": {"value": 0.25, "tolerance": 0.3, "relative": true}
  }
})";

inline constexpr const char* kProfileX08 = R"({
  "name": "x08",
  "description": "Cs(1-x)FA(x)PbBr3 emitter, x = 0.8",
  "duration_ps": 600000000000000,
  "model": {
    "rep_period_ps": 400000,
    "mean_excitons_per_pulse": 1.0,
    "lifetime_bright_ps": 13900.0,
    "lifetime_dim_ps": 4500.0,
    "qy_bright": 0.7,
    "qy_dim": 0.05,
    "biexciton_leak": 0.03103,
    "dwell_on": {"m": 1.5, "tau_c_ps": 2e11, "t_min_ps": 3e10, "form": "survival"},
    "dwell_off": {"m": 1.36, "tau_c_ps": 2e10, "t_min_ps": 5e9, "form": "survival"},
    "blinking": true,
    "detect_efficiency": 0.005,
    "dark_rate_hz": 10.0,
    "bleach_tau_ps": null,
    "irf_sigma_ps": 30.0,
    "biexciton_lifetime_factor": 0.5,
    "dead_time_ps": 0.0,
    "seed": 1
  },
  "targets": {
    "g2_zero": {"value": 0.04, "tolerance": 0.02},
    "m_off": {"value": 1.36, "tolerance": 0.1},
    "tau_c_s": {"value": 0.02, "tolerance": 0.3, "relative": true}
  }
})";

inline constexpr const char* kProfileX1 = R"({
  "name": "x1",
  "description": "Cs(1-x)FA(x)PbBr3 emitter, x = 1, with photobleaching",
  "duration_ps": 600000000000000,
  "model": {
    "rep_period_ps": 400000,
    "mean_excitons_per_pulse": 1.0,
    "lifetime_bright_ps": 19600.0,
    "lifetime_dim_ps": 3900.0,
    "qy_bright": 0.7,
    "qy_dim": 0.05,
    "biexciton_leak": 0.009012,
    "dwell_on": {"m": 1.5, "tau_c_ps": 2e11, "t_min_ps": 3e10, "form": "survival"},
    "dwell_off": {"m": 0.83, "tau_c_ps": 1.5e11, "t_min_ps": 5e9, "form": "survival"},
    "blinking": true,
    "detect_efficiency": 0.005,
    "dark_rate_hz": 10.0,
    "bleach_tau_ps": 3e15,
    "irf_sigma_ps": 30.0,
    "biexciton_lifetime_factor": 0.5,
    "dead_time_ps": 0.0,
    "seed": 1
  },
  "targets": {
    "g2_zero": {"value": 0.013, "tolerance": 0.01},
    "m_off": {"value": 0.83, "tolerance": 0.1},
    "tau_c_s": {"value": 0.15, "tolerance": 0.3, "relative": true}
  }
})";

inline const std::vector<std::string>& profile_names() {
  static const std::vector<std::string> names{"x0", "x08", "x1"};
  return names;
}

inline json builtin_profile_json(const std::string& name) {
  if (name == "x0") return json::parse(kProfileX0);
  if (name == "x08") return json::parse(kProfileX08);
  if (name == "x1") return json::parse(kProfileX1);
  throw ValidationError("unknown profile '" + name + "' (expected x0, x08 or x1)");
}

inline void from_json(const json& j, Target& t) {
  t.value = j.at("value").get<double>();
  t.tolerance = j.at("tolerance").get<double>();
  t.relative = j.value("relative", false);
}

inline Profile parse_profile(const json& j) {
  Profile p;
  p.name = j.at("name").get<std::string>();
  p.description = j.value("description", std::string());
  p.duration_ps = j.value("duration_ps", kDefaultTraceLengthPs);
  p.model = j.at("model").get<sim::EmitterModel>();
  const auto& t = j.at("targets");
  p.g2_zero = t.at("g2_zero").get<Target>();
  p.m_off = t.at("m_off").get<Target>();
  p.tau_c_s = t.at("tau_c_s").get<Target>();
  return p;
}

/// Analysis settings shared by every profile; the reference experiment's values.
struct Settings {
  std::int64_t g2_bin_ps = corr::kDefaultBinPs;
  int g2_max_delay_periods = corr::kDefaultMaxDelayPeriods;
  int g2_reference_periods = corr::kDefaultReferencePeriods;
  TimePs decay_bin_ps = 100;
  TimePs trace_bin_ps = kDefaultTraceBinPs;
  double threshold = kDefaultOffThreshold;
  blinking::GridSpec flid_grid{};
};

struct Outcome {
  json summary;
  bool all_pass = false;
  bool converged = true;
};

/// simulate -> g2 -> decay -> blinking -> FLID, writing artifacts to out_dir.
/// Output is a function of (profile, seed) only; the thread count changes
/// nothing but speed.
inline Outcome run_pipeline(const Profile& profile, std::uint64_t seed, const std::filesystem::path& out_dir,
                            unsigned threads = 1, const Settings& settings = {}) {
  std::filesystem::create_directories(out_dir);
  const auto& model = profile.model;
  report::write_json(out_dir / "model.json", json(model));

  sim::SimulationTruth truth;
  const PhotonStream stream = sim::simulate(model, profile.duration_ps, seed, &truth);

  const auto rep = static_cast<std::int64_t>(model.rep_period_ps);
  const auto raw = corr::correlate(stream, settings.g2_bin_ps, settings.g2_max_delay_periods * rep, threads);
  const auto cleaned = corr::clean_background(raw);
  const auto normalized = corr::normalize_peaks(cleaned, rep, settings.g2_reference_periods * rep);
  const auto g2 = corr::g2_zero(normalized);
  report::write_json(out_dir / "g2.json", report::g2_json(normalized, g2));
  write_file(out_dir / "g2.csv", report::g2_csv(normalized));

  const auto decay = lifetime::decay_histogram(stream, settings.decay_bin_ps);
  const auto tri = lifetime::fit_triexp(decay);
  report::write_json(out_dir / "decay.json", report::decay_json(decay, &tri));
  write_file(out_dir / "decay.csv", report::decay_csv(decay, &tri));

  const auto trace = bin_intensity(stream, settings.trace_bin_ps);
  const auto seg = blinking::segment(trace, settings.threshold);
  const auto cdf = blinking::off_cdf(seg);
  const auto plaw = blinking::fit_off_cdf(cdf);
  report::write_json(out_dir / "blink.json", report::blink_json(trace, seg, &cdf, &plaw));
  write_file(out_dir / "trace.csv", report::trace_csv(trace, settings.threshold));

  const auto map = blinking::flid(stream, settings.trace_bin_ps, settings.flid_grid, threads);
  const auto modes = blinking::flid_modes(map);
  report::write_json(out_dir / "flid.json", report::flid_json(map, modes));
  write_file(out_dir / "flid.csv", report::flid_csv(map));

  auto check = [](const char* name, const Target& t, double measured) {
    return json{{"observable", name},
                {"target", t.value},
                {"tolerance", t.tolerance},
                {"relative_tolerance", t.relative},
                {"measured", report::number(measured)},
                {"pass", t.accepts(measured)}};
  };
  json checks = json::array();
  checks.push_back(check("g2_zero", profile.g2_zero, g2.g2_zero));
  checks.push_back(check("m_off", profile.m_off, plaw.m_off));
  checks.push_back(check("tau_c_s", profile.tau_c_s, plaw.tau_c_s));
  const bool want_levy = profile.m_off.value < 1.0;
  checks.push_back({{"observable", "levy_like"},
                    {"target", want_levy},
                    {"measured", plaw.levy_like()},
                    {"pass", plaw.levy_like() == want_levy}});

  Outcome out;
  out.all_pass = true;
  for (const auto& c : checks) out.all_pass = out.all_pass && c.at("pass").get<bool>();
  out.converged = tri.converged && plaw.converged;

  json flid_modes = json::array();
  for (std::size_t k = 0; k < std::min<std::size_t>(2, modes.size()); ++k)
    flid_modes.push_back({{"intensity", modes[k].intensity}, {"lifetime_ns", modes[k].lifetime_ns}});

  out.summary = {
      {"profile", profile.name},
      {"seed", seed},
      {"duration_ps", profile.duration_ps},
      {"photons", stream.size()},
      {"checks", std::move(checks)},
      {"all_pass", out.all_pass},
      {"converged", out.converged},
      {"observations",
       {{"expected_g2_zero", sim::expected_g2_zero(model, profile.duration_ps)},
        {"average_lifetime_ns", report::triexp_json(tri)["average_lifetime_ns"]},
        {"lifetime_bright_ns", ps_to_ns(model.lifetime_bright_ps)},
        {"off_events", cdf.n_events},
        {"flid_modes", std::move(flid_modes)},
        {"pair_pulses", truth.pair_pulses},
        {"dark_counts", truth.dark_counts}}},
      {"artifacts", {"model.json", "g2.json", "g2.csv", "decay.json", "decay.csv", "blink.json", "trace.csv",
                     "flid.json", "flid.csv", "summary.json"}}};
  report::write_json(out_dir / "summary.json", out.summary);
  return out;
}

/// One line per check: observable, target, measured, PASS/FAIL.
inline void print_summary(std::ostream& os, const json& summary) {
  os << "profile " << summary.at("profile").get<std::string>() << ", seed " << summary.at("seed").get<std::uint64_t>()
     << ", " << summary.at("photons").get<std::uint64_t>() << " photons\n";
  for (const auto& c : summary.at("checks")) {
    os << "  " << c.at("observable").get<std::string>() << ": target " << c.at("target").dump() << ", measured "
       << c.at("measured").dump() << "  " << (c.at("pass").get<bool>() ? "PASS" : "FAIL") << "\n";
  }
  os << (summary.at("all_pass").get<bool>() ? "all checks passed" : "some checks failed") << "\n";
}

}  // namespace photonstat::repro
