#include <gtest/gtest.h>

#include <map>

#include "oracles.hpp"
#include "photonstat/sim.hpp"

using namespace photonstat;
using sim::EmitterModel;
using sim::TruncatedPowerLaw;

namespace {

EmitterModel steady_model() {
  EmitterModel m;
  m.blinking = false;
  m.dark_rate_hz = 0.0;
  return m;
}

std::vector<double> draw(const TruncatedPowerLaw& law, std::size_t n, std::uint64_t seed, bool survival = false) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = survival ? sim::sample_truncated_power_law_survival(law, rng) : sim::sample_truncated_power_law(law, rng);
  return v;
}

}  // namespace

TEST(Sampling, PureParetoMatchesClosedForm) {
  const TruncatedPowerLaw law{2.0, std::numeric_limits<double>::infinity(), 1.0};
  const auto xs = draw(law, 100000, 1);
  const double d = oracle::ks_statistic(xs, [](double t) { return t <= 1.0 ? 0.0 : 1.0 - 1.0 / t; });
  EXPECT_LT(d, 0.01);
}

TEST(Sampling, LevyCaseMeanMatchesQuadrature) {
  const TruncatedPowerLaw law{0.83, 0.15e12, 10e9};
  const auto xs = draw(law, 200000, 2);
  double mean = 0.0;
  for (double x : xs) mean += x / static_cast<double>(xs.size());
  const oracle::TruncatedPowerLawCdf cdf(law);
  EXPECT_NEAR(mean / cdf.mean(), 1.0, 0.02);
}

TEST(Sampling, SupportStartsAtTmin) {
  const TruncatedPowerLaw law{1.34, 0.25e12, 5e9};
  for (double x : draw(law, 50000, 3)) ASSERT_GE(x, law.t_min_ps);
  for (double x : draw(law, 50000, 4, true)) ASSERT_GE(x, law.t_min_ps);
}

TEST(Sampling, SurvivalFormMatchesClosedForm) {
  for (const auto& law : {TruncatedPowerLaw{1.34, 0.25e12, 5e9}, TruncatedPowerLaw{0.83, 0.15e12, 5e9}}) {
    const auto xs = draw(law, 100000, 5, true);
    const double d = oracle::ks_statistic(xs, [&](double t) {
      if (t <= law.t_min_ps) return 0.0;
      return 1.0 - std::pow(t / law.t_min_ps, -law.m) * std::exp(-(t - law.t_min_ps) / law.tau_c_ps);
    });
    EXPECT_LT(d, 0.01) << "m=" << law.m;
  }
}

TEST(Sampling, LawValidation) {
  EXPECT_THROW((TruncatedPowerLaw{0.0, 1e12, 1e9}.validate()), ValidationError);
  EXPECT_THROW((TruncatedPowerLaw{1.0, 1e9, 1e9}.validate()), ValidationError);
  EXPECT_THROW((TruncatedPowerLaw{1.0, 1e12, 0.0}.validate()), ValidationError);
  EXPECT_NO_THROW((TruncatedPowerLaw{1.0, 1e12, 1e9}.validate()));
}

TEST(Simulate, DeterministicAndValid) {
  EmitterModel m;
  m.biexciton_leak = 0.2;
  m.bleach_tau_ps = 30e12;
  m.dead_time_ps = 50000.0;
  const auto a = sim::simulate(m, 5 * kSecond, 42);
  const auto b = sim::simulate(m, 5 * kSecond, 42);
  const auto c = sim::simulate(m, 5 * kSecond, 43);
  EXPECT_EQ(a.records, b.records);
  EXPECT_NE(a.records, c.records);
  EXPECT_NO_THROW(validate(a));
  EXPECT_EQ(a.rep_period_ps, m.rep_period_ps);
  EXPECT_EQ(a.duration_ps, 5 * kSecond);
}

TEST(Simulate, ModelValidation) {
  EmitterModel m;
  m.qy_dim = 0.9;
  EXPECT_THROW(sim::simulate(m, kSecond, 1), ValidationError);
  m = EmitterModel{};
  m.biexciton_leak = 1.5;
  EXPECT_THROW(sim::simulate(m, kSecond, 1), ValidationError);
  m = EmitterModel{};
  EXPECT_THROW(sim::simulate(m, 1000, 1), ValidationError);  // shorter than one period
  m.lifetime_dim_ps = 0.0;
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(Simulate, NoLeakMeansNoPairs) {
  auto m = steady_model();
  m.detect_efficiency = 0.2;
  m.mean_excitons_per_pulse = 3.0;
  sim::SimulationTruth truth;
  const auto s = sim::simulate(m, 2 * kSecond, 7, &truth);
  EXPECT_EQ(truth.pair_pulses, 0u);
  EXPECT_EQ(truth.dark_counts, 0u);
  // Delays and jitter are far below half a period, so rounding t / period
  // recovers the pulse a photon came from.
  std::map<std::uint64_t, int> per_pulse;
  for (const auto& r : s.records) ++per_pulse[(r.t_abs + m.rep_period_ps / 2) / m.rep_period_ps];
  for (const auto& [pulse, n] : per_pulse) ASSERT_LE(n, 1) << "pulse " << pulse;
}

TEST(Simulate, SaturatedRateIsQyTimesEfficiency) {
  auto m = steady_model();
  m.mean_excitons_per_pulse = 30.0;
  const double seconds = 10.0;
  const auto s = sim::simulate(m, static_cast<TimePs>(s_to_ps(seconds)), 8);
  const double expected = m.qy_bright * m.detect_efficiency * 2.5e6 * seconds;
  EXPECT_NEAR(static_cast<double>(s.size()), expected, 4.0 * std::sqrt(expected));
}

TEST(Simulate, PairFrequencyMatchesLeakModel) {
  auto m = steady_model();
  m.biexciton_leak = 1.0;
  m.detect_efficiency = 0.1;
  sim::SimulationTruth truth;
  sim::simulate(m, 10 * kSecond, 9, &truth);
  const auto occ = sim::ExcitonOccupancy::from_mean(m.mean_excitons_per_pulse);
  const double p = m.biexciton_leak * m.qy_bright * m.qy_bright * occ.multiple * m.detect_efficiency * m.detect_efficiency;
  const double n = static_cast<double>(truth.pulses);
  EXPECT_EQ(truth.pulses, 25000000u);
  EXPECT_NEAR(static_cast<double>(truth.pair_pulses), n * p, 4.0 * std::sqrt(n * p * (1.0 - p)));
}

TEST(Simulate, TimelineTilesDurationAndAlternates) {
  EmitterModel m;
  sim::SimulationTruth truth;
  sim::simulate(m, 30 * kSecond, 10, &truth);
  ASSERT_FALSE(truth.timeline.empty());
  EXPECT_EQ(truth.timeline.front().start_ps, 0u);
  EXPECT_EQ(truth.timeline.back().end_ps, 30 * kSecond);
  for (std::size_t i = 1; i < truth.timeline.size(); ++i) {
    EXPECT_EQ(truth.timeline[i].start_ps, truth.timeline[i - 1].end_ps);
    EXPECT_NE(truth.timeline[i].state, truth.timeline[i - 1].state);
  }
}

TEST(Simulate, BleachingLowersLateIntensity) {
  auto m = steady_model();
  m.bleach_tau_ps = 5e12;
  const auto s = sim::simulate(m, 10 * kSecond, 11);
  const auto tr = bin_intensity(s, kSecond);
  const double early = tr.counts[0], late = tr.counts[9];
  EXPECT_NEAR(late / early, std::exp(-9.0 / 5.0), 0.05);
}

TEST(Simulate, DeadTimeSpacesRecordsPerChannel) {
  auto m = steady_model();
  m.detect_efficiency = 0.3;
  m.dead_time_ps = 1e6;  // 1 us
  const auto s = sim::simulate(m, kSecond, 12);
  std::array<std::optional<TimePs>, 2> last;
  for (const auto& r : s.records) {
    if (last[r.channel]) {
      ASSERT_GE(r.t_abs - *last[r.channel], 1000000u);
    }
    last[r.channel] = r.t_abs;
  }
}

TEST(SweepPower, FollowsSaturationWithoutLeak) {
  auto m = steady_model();
  const std::vector<double> powers{0.01, 0.1, 0.3, 1.0, 3.0, 10.0};
  const auto pts = sim::sweep_power(m, powers, 2 * kSecond, 13);
  const double a = 2.5e6 * m.qy_bright * m.detect_efficiency;
  for (const auto& p : pts) {
    const double expected = a * -std::expm1(-p.power);
    EXPECT_NEAR(p.mean_count_rate, expected, 4.0 * std::sqrt(expected / 2.0) + 1.0) << "P=" << p.power;
  }
  EXPECT_LT(sim::sweep_power(m, {1e-6}, kSecond, 1).front().mean_count_rate, 5.0);
  EXPECT_THROW(sim::sweep_power(m, {0.0}, kSecond, 1), ValidationError);
}

TEST(SweepPower, LeakRaisesThePlateau) {
  // The second photon saturates with P(n >= 2), so the excess shows as a
  // higher plateau, not as an unbounded linear term.
  auto m = steady_model();
  m.biexciton_leak = 0.8;
  const auto pts = sim::sweep_power(m, {20.0}, 4 * kSecond, 14);
  const double single = 2.5e6 * m.qy_bright * m.detect_efficiency;
  const double expected = single * (1.0 + m.biexciton_leak);
  EXPECT_NEAR(pts.front().mean_count_rate, expected, 4.0 * std::sqrt(expected / 4.0));
  EXPECT_GT(pts.front().mean_count_rate, single + 10.0 * std::sqrt(single / 4.0));
}

TEST(EmitterModelJson, RoundTripAndDefaults) {
  EmitterModel m;
  m.biexciton_leak = 0.123;
  m.bleach_tau_ps = 7e14;
  m.dwell_off.form = sim::DwellForm::density;
  const nlohmann::json j = m;
  const auto back = j.get<EmitterModel>();
  EXPECT_EQ(nlohmann::json(back), j);

  const nlohmann::json inf = EmitterModel{};
  EXPECT_TRUE(inf.at("bleach_tau_ps").is_null());
  EXPECT_TRUE(std::isinf(inf.get<EmitterModel>().bleach_tau_ps));

  const auto partial = nlohmann::json::parse(R"({"qy_bright": 0.5})").get<EmitterModel>();
  EXPECT_EQ(partial.qy_bright, 0.5);
  EXPECT_EQ(partial.rep_period_ps, EmitterModel{}.rep_period_ps);
  EXPECT_THROW(nlohmann::json::parse(R"({"dwell_on": {"m": 1, "tau_c_ps": 1e12, "t_min_ps": 1e9, "form": "x"}})")
                   .get<EmitterModel>(),
               ValidationError);
}

TEST(ExpectedG2, CalibrationInvertsTheory) {
  EmitterModel m;
  for (double target : {0.013, 0.05, 0.2, 0.45}) {
    m.biexciton_leak = sim::calibrate_leak(m, 600 * kSecond, target);
    EXPECT_NEAR(sim::expected_g2_zero(m, 600 * kSecond), target, 1e-9);
  }
  m.biexciton_leak = 0.0;
  EXPECT_EQ(sim::expected_g2_zero(m, kSecond), 0.0);
}
