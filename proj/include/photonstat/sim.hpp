#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "photonstat/core.hpp"
#include "photonstat/error.hpp"
#include "photonstat/random.hpp"
#include "photonstat/units.hpp"

namespace photonstat::sim {

/// Heavy-tailed law t^-m exp(-t / tau_c) supported on [t_min, inf).
struct TruncatedPowerLaw {
  double m = 1.0;
  double tau_c_ps = 0.25 * 1e12;
  double t_min_ps = 5e9;

  void validate() const {
    if (!(m > 0.0)) throw ValidationError("power-law exponent m must be positive");
    if (!(t_min_ps > 0.0)) throw ValidationError("t_min_ps must be positive");
    if (!(tau_c_ps > t_min_ps)) throw ValidationError("tau_c_ps must exceed t_min_ps");
  }
};

/// Draws from the density proportional to t^-m exp(-t / tau_c) on [t_min, inf).
/// Rejection from a Pareto envelope when m > 1, otherwise from a shifted
/// exponential envelope.
inline double sample_truncated_power_law(const TruncatedPowerLaw& law, Rng& rng) {
  if (law.m > 1.0) {
    for (;;) {
      const double t = law.t_min_ps * std::pow(rng.uniform_open0(), -1.0 / (law.m - 1.0));
      if (!std::isfinite(law.tau_c_ps) || rng.uniform() < std::exp(-(t - law.t_min_ps) / law.tau_c_ps))
        return t;
    }
  }
  for (;;) {
    const double t = law.t_min_ps + rng.exponential(law.tau_c_ps);
    if (rng.uniform() < std::pow(t / law.t_min_ps, -law.m)) return t;
  }
}

/// Draws a duration whose survival function is
/// P(T > t) = (t / t_min)^-m exp(-(t - t_min) / tau_c) for t >= t_min: the
/// minimum of a Pareto(m) and a shifted exponential.
inline double sample_truncated_power_law_survival(const TruncatedPowerLaw& law, Rng& rng) {
  const double pareto = law.t_min_ps * std::pow(rng.uniform_open0(), -1.0 / law.m);
  const double cutoff = std::isfinite(law.tau_c_ps)
                            ? law.t_min_ps + rng.exponential(law.tau_c_ps)
                            : std::numeric_limits<double>::infinity();
  return std::min(pareto, cutoff);
}

/// How a dwell law's parameters are read: as the density of the durations, or
/// as their survival curve P(T > t).
enum class DwellForm { survival, density };

struct DwellLaw {
  TruncatedPowerLaw law;
  DwellForm form = DwellForm::survival;

  double sample(Rng& rng) const {
    return form == DwellForm::survival ? sample_truncated_power_law_survival(law, rng)
                                       : sample_truncated_power_law(law, rng);
  }
};

enum class EmitterState : std::uint8_t { off = 0, on = 1 };

/// Phenomenological blinking emitter. "on" is the bright neutral state, "off"
/// the dim charged state.
struct EmitterModel {
  TimePs rep_period_ps = kDefaultRepPeriodPs;
  double mean_excitons_per_pulse = 1.0;
  double lifetime_bright_ps = 6000.0;
  double lifetime_dim_ps = 2000.0;
  double qy_bright = 0.7;
  double qy_dim = 0.05;
  double biexciton_leak = 0.0;
  DwellLaw dwell_on{{0.6, 2e12, 2e10}};
  DwellLaw dwell_off{{1.34, 0.25e12, 5e9}};
  bool blinking = true;
  double detect_efficiency = 0.005;
  double dark_rate_hz = 10.0;  // per detector
  double bleach_tau_ps = std::numeric_limits<double>::infinity();
  double irf_sigma_ps = 30.0;
  double biexciton_lifetime_factor = 0.5;
  double dead_time_ps = 0.0;
  std::uint64_t seed = 1;

  double qy(EmitterState s) const { return s == EmitterState::on ? qy_bright : qy_dim; }
  double lifetime_ps(EmitterState s) const {
    return s == EmitterState::on ? lifetime_bright_ps : lifetime_dim_ps;
  }

  void validate() const {
    auto prob = [](double p, const char* name) {
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(name) + " must lie in [0, 1]");
    };
    prob(qy_bright, "qy_bright");
    prob(qy_dim, "qy_dim");
    prob(biexciton_leak, "biexciton_leak");
    prob(detect_efficiency, "detect_efficiency");
    if (qy_dim > qy_bright) throw ValidationError("qy_dim must not exceed qy_bright");
    if (rep_period_ps == 0) throw ValidationError("rep_period_ps must be positive");
    if (!(mean_excitons_per_pulse >= 0.0)) throw ValidationError("mean_excitons_per_pulse must be >= 0");
    if (!(lifetime_bright_ps > 0.0) || !(lifetime_dim_ps > 0.0))
      throw ValidationError("lifetimes must be positive");
    if (!(bleach_tau_ps > 0.0)) throw ValidationError("bleach_tau_ps must be positive");
    if (!(irf_sigma_ps >= 0.0)) throw ValidationError("irf_sigma_ps must be >= 0");
    if (!(dark_rate_hz >= 0.0)) throw ValidationError("dark_rate_hz must be >= 0");
    if (!(biexciton_lifetime_factor > 0.0)) throw ValidationError("biexciton_lifetime_factor must be positive");
    if (!(dead_time_ps >= 0.0)) throw ValidationError("dead_time_ps must be >= 0");
    if (blinking) {
      dwell_on.law.validate();
      dwell_off.law.validate();
    }
  }
};

/// Poisson exciton-number probabilities for one pulse.
struct ExcitonOccupancy {
  double none;       // P(n = 0)
  double single;     // P(n = 1)
  double multiple;   // P(n >= 2)

  static ExcitonOccupancy from_mean(double mean) {
    const double p0 = std::exp(-mean);
    const double p1 = mean * p0;
    return {p0, p1, std::max(0.0, -std::expm1(-mean) - p1)};
  }
  double at_least_one() const { return single + multiple; }
};

inline double bleach_factor(const EmitterModel& model, double t_ps) {
  return std::isfinite(model.bleach_tau_ps) ? std::exp(-t_ps / model.bleach_tau_ps) : 1.0;
}

/// Expected detected signal photons per pulse in a state, without bleaching
/// or dark counts.
inline double expected_photons_per_pulse(const EmitterModel& model, EmitterState state) {
  const auto occ = ExcitonOccupancy::from_mean(model.mean_excitons_per_pulse);
  const double q = model.qy(state);
  return model.detect_efficiency * q * (occ.at_least_one() + model.biexciton_leak * occ.multiple);
}

/// Expected counts per intensity bin in a state, dark counts of both detectors
/// included.
inline double expected_counts_per_bin(const EmitterModel& model, EmitterState state,
                                      TimePs bin_width_ps) {
  const double pulses = static_cast<double>(bin_width_ps) / static_cast<double>(model.rep_period_ps);
  return pulses * expected_photons_per_pulse(model, state) +
         2.0 * model.dark_rate_hz * ps_to_s(static_cast<double>(bin_width_ps));
}

/// Center-to-side peak area ratio the generator produces, averaged over the
/// bleaching decay across [0, duration]. Dark counts are excluded.
inline double expected_g2_zero(const EmitterModel& model, TimePs duration_ps) {
  const auto occ = ExcitonOccupancy::from_mean(model.mean_excitons_per_pulse);
  const double leak = model.biexciton_leak;
  constexpr int kSteps = 2000;
  double mean_b = 0.0;
  double mean_mu2 = 0.0;
  for (int i = 0; i < kSteps; ++i) {
    const double t = (i + 0.5) / kSteps * static_cast<double>(duration_ps);
    const double b = bleach_factor(model, t);
    const double mu = occ.at_least_one() * b + occ.multiple * leak;
    mean_b += b / kSteps;
    mean_mu2 += mu * mu / kSteps;
  }
  return mean_mu2 > 0.0 ? 2.0 * occ.multiple * leak * mean_b / mean_mu2 : 0.0;
}

/// Smallest biexciton leak whose expected g2(0) equals `target`.
inline double calibrate_leak(EmitterModel model, TimePs duration_ps, double target) {
  double lo = 0.0;
  double hi = 1.0;
  model.biexciton_leak = hi;
  if (expected_g2_zero(model, duration_ps) < target)
    throw ValidationError("target g2(0) unreachable with biexciton_leak <= 1");
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    model.biexciton_leak = mid;
    (expected_g2_zero(model, duration_ps) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct StateSegment {
  EmitterState state;
  TimePs start_ps;
  TimePs end_ps;
};

/// Generator-side record of what happened, for checking analysis results.
struct SimulationTruth {
  std::vector<StateSegment> timeline;
  std::uint64_t pulses = 0;
  std::uint64_t signal_photons = 0;   // detected, before the duration cut
  std::uint64_t dark_counts = 0;
  std::uint64_t pair_pulses = 0;      // pulses with both photons detected
};

namespace detail {

inline std::vector<StateSegment> state_timeline(const EmitterModel& model, TimePs duration_ps,
                                                Rng& rng) {
  std::vector<StateSegment> out;
  if (!model.blinking) {
    out.push_back({EmitterState::on, 0, duration_ps});
    return out;
  }
  EmitterState state = EmitterState::on;
  double t = 0.0;
  const double end = static_cast<double>(duration_ps);
  while (t < end) {
    const auto& law = state == EmitterState::on ? model.dwell_on : model.dwell_off;
    const double next = std::min(end, t + law.sample(rng));
    const auto a = static_cast<TimePs>(std::llround(t));
    const auto b = static_cast<TimePs>(std::llround(next));
    if (b > a) {
      if (!out.empty() && out.back().state == state) out.back().end_ps = b;
      else out.push_back({state, a, b});
    }
    t = next;
    state = state == EmitterState::on ? EmitterState::off : EmitterState::on;
  }
  if (out.empty()) out.push_back({EmitterState::on, 0, duration_ps});
  out.back().end_ps = duration_ps;
  return out;
}

// Bleaching bounds are refreshed at least this often so thinning stays cheap.
inline constexpr TimePs kBleachChunkPs = kSecond;

}  // namespace detail

/// Monte Carlo photon stream for `duration_ps`. Pulses with no detected photon
/// are skipped geometrically; bleaching is applied exactly by thinning the
/// first photon against the bound at the start of each chunk.
inline PhotonStream simulate(const EmitterModel& model, TimePs duration_ps, std::uint64_t seed,
                             SimulationTruth* truth = nullptr) {
  model.validate();
  if (duration_ps < model.rep_period_ps)
    throw ValidationError("duration must cover at least one pulse period");

  Rng rng(seed);
  SimulationTruth local;
  SimulationTruth& log = truth ? *truth : local;
  log = SimulationTruth{};
  log.timeline = detail::state_timeline(model, duration_ps, rng);

  const TimePs rep = model.rep_period_ps;
  const auto occ = ExcitonOccupancy::from_mean(model.mean_excitons_per_pulse);
  const double eta = model.detect_efficiency;

  PhotonStream stream;
  stream.rep_period_ps = rep;
  stream.duration_ps = duration_ps;
  auto& records = stream.records;

  auto emit = [&](std::uint64_t pulse, double lifetime) {
    double t = static_cast<double>(pulse * rep) + rng.exponential(lifetime);
    if (model.irf_sigma_ps > 0.0) t += rng.normal(0.0, model.irf_sigma_ps);
    const std::uint8_t channel = rng.bernoulli(0.5) ? 1 : 0;
    if (t < 0.0) t = 0.0;
    const auto ts = static_cast<TimePs>(std::llround(t));
    if (ts <= duration_ps) records.push_back({channel, ts});
  };

  for (const auto& seg : log.timeline) {
    const double q = model.qy(seg.state);
    const double tau = model.lifetime_ps(seg.state);
    const double c = model.biexciton_leak * q * eta;
    std::uint64_t pulse = (seg.start_ps + rep - 1) / rep;
    const std::uint64_t seg_end = (seg.end_ps + rep - 1) / rep;
    log.pulses += seg_end > pulse ? seg_end - pulse : 0;

    while (pulse < seg_end) {
      const std::uint64_t chunk_end =
          std::min(seg_end, (pulse * rep + detail::kBleachChunkPs) / rep + 1);
      const double b_max = bleach_factor(model, static_cast<double>(pulse * rep));
      const double a = q * b_max * eta;
      const double w1 = occ.single * a;
      const double w2 = occ.multiple * a * (1.0 - c);
      const double w3 = occ.multiple * (1.0 - a) * c;
      const double w4 = occ.multiple * a * c;
      const double p_any = w1 + w2 + w3 + w4;

      while (p_any > 0.0) {
        const std::uint64_t skip = rng.geometric(p_any);
        if (skip >= chunk_end - pulse) break;
        pulse += skip;
        const double u = rng.uniform() * p_any;
        bool first = u < w1 + w2 || u >= w1 + w2 + w3;
        const bool second = u >= w1 + w2;
        if (first && std::isfinite(model.bleach_tau_ps)) {
          const double b = bleach_factor(model, static_cast<double>(pulse * rep));
          first = rng.uniform() * b_max < b;
        }
        if (first) emit(pulse, tau);
        if (second) emit(pulse, tau * model.biexciton_lifetime_factor);
        log.signal_photons += static_cast<std::uint64_t>(first) + static_cast<std::uint64_t>(second);
        log.pair_pulses += static_cast<std::uint64_t>(first && second);
        ++pulse;
      }
      pulse = chunk_end;
    }
  }

  if (model.dark_rate_hz > 0.0) {
    const double mean_gap = s_to_ps(1.0 / model.dark_rate_hz);
    for (std::uint8_t channel = 0; channel < 2; ++channel) {
      double t = rng.exponential(mean_gap);
      while (t <= static_cast<double>(duration_ps)) {
        records.push_back({channel, static_cast<TimePs>(t)});
        ++log.dark_counts;
        t += rng.exponential(mean_gap);
      }
    }
  }

  std::sort(records.begin(), records.end(), [](const PhotonRecord& x, const PhotonRecord& y) {
    return x.t_abs != y.t_abs ? x.t_abs < y.t_abs : x.channel < y.channel;
  });

  if (model.dead_time_ps > 0.0) {
    const auto dead = static_cast<TimePs>(std::llround(model.dead_time_ps));
    std::array<TimePs, 2> last{};
    std::array<bool, 2> seen{};
    std::size_t kept = 0;
    for (const auto& r : records) {
      if (seen[r.channel] && r.t_abs < last[r.channel] + dead) continue;
      seen[r.channel] = true;
      last[r.channel] = r.t_abs;
      records[kept++] = r;
    }
    records.resize(kept);
  }
  return stream;
}

struct PowerPoint {
  double power;            // P / P_sat
  double mean_count_rate;  // detected counts per second
};

/// Count rate against excitation power. The model's exciton number is taken
/// as the value at P = P_sat and scaled linearly.
inline std::vector<PowerPoint> sweep_power(const EmitterModel& model, const std::vector<double>& powers,
                                           TimePs duration_ps, std::uint64_t seed) {
  std::vector<PowerPoint> out;
  out.reserve(powers.size());
  for (std::size_t i = 0; i < powers.size(); ++i) {
    if (!(powers[i] > 0.0)) throw ValidationError("powers must be positive");
    EmitterModel scaled = model;
    scaled.mean_excitons_per_pulse = model.mean_excitons_per_pulse * powers[i];
    const auto stream = simulate(scaled, duration_ps, seed + i);
    out.push_back({powers[i], static_cast<double>(stream.size()) / ps_to_s(static_cast<double>(duration_ps))});
  }
  return out;
}

// JSON layout of EmitterModel: snake_case field names; an infinite
// bleach_tau_ps is written as null.

inline void to_json(nlohmann::json& j, const TruncatedPowerLaw& law) {
  j = {{"m", law.m}, {"tau_c_ps", law.tau_c_ps}, {"t_min_ps", law.t_min_ps}};
}

inline void from_json(const nlohmann::json& j, TruncatedPowerLaw& law) {
  law.m = j.at("m").get<double>();
  law.tau_c_ps = j.at("tau_c_ps").get<double>();
  law.t_min_ps = j.at("t_min_ps").get<double>();
}

inline void to_json(nlohmann::json& j, const DwellLaw& d) {
  j = d.law;
  j["form"] = d.form == DwellForm::survival ? "survival" : "density";
}

inline void from_json(const nlohmann::json& j, DwellLaw& d) {
  d.law = j.get<TruncatedPowerLaw>();
  const auto form = j.value("form", std::string("survival"));
  if (form != "survival" && form != "density") throw ValidationError("unknown dwell form '" + form + "'");
  d.form = form == "survival" ? DwellForm::survival : DwellForm::density;
}

inline void to_json(nlohmann::json& j, const EmitterModel& m) {
  j = {{"rep_period_ps", m.rep_period_ps},
       {"mean_excitons_per_pulse", m.mean_excitons_per_pulse},
       {"lifetime_bright_ps", m.lifetime_bright_ps},
       {"lifetime_dim_ps", m.lifetime_dim_ps},
       {"qy_bright", m.qy_bright},
       {"qy_dim", m.qy_dim},
       {"biexciton_leak", m.biexciton_leak},
       {"dwell_on", m.dwell_on},
       {"dwell_off", m.dwell_off},
       {"blinking", m.blinking},
       {"detect_efficiency", m.detect_efficiency},
       {"dark_rate_hz", m.dark_rate_hz},
       {"bleach_tau_ps", std::isfinite(m.bleach_tau_ps) ? nlohmann::json(m.bleach_tau_ps) : nlohmann::json()},
       {"irf_sigma_ps", m.irf_sigma_ps},
       {"biexciton_lifetime_factor", m.biexciton_lifetime_factor},
       {"dead_time_ps", m.dead_time_ps},
       {"seed", m.seed}};
}

/// Missing fields keep their defaults.
inline void from_json(const nlohmann::json& j, EmitterModel& m) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("rep_period_ps", m.rep_period_ps);
  get("mean_excitons_per_pulse", m.mean_excitons_per_pulse);
  get("lifetime_bright_ps", m.lifetime_bright_ps);
  get("lifetime_dim_ps", m.lifetime_dim_ps);
  get("qy_bright", m.qy_bright);
  get("qy_dim", m.qy_dim);
  get("biexciton_leak", m.biexciton_leak);
  get("dwell_on", m.dwell_on);
  get("dwell_off", m.dwell_off);
  get("blinking", m.blinking);
  get("detect_efficiency", m.detect_efficiency);
  get("dark_rate_hz", m.dark_rate_hz);
  if (j.contains("bleach_tau_ps")) {
    const auto& v = j.at("bleach_tau_ps");
    m.bleach_tau_ps = v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
  }
  get("irf_sigma_ps", m.irf_sigma_ps);
  get("biexciton_lifetime_factor", m.biexciton_lifetime_factor);
  get("dead_time_ps", m.dead_time_ps);
  get("seed", m.seed);
}

}  // namespace photonstat::sim
