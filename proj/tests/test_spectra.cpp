#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "photonstat/random.hpp"
#include "photonstat/spectra.hpp"

using namespace photonstat;
using spectra::PeakMethod;
using spectra::PeakMetrics;
using spectra::Spectrum;

namespace {

constexpr double kFwhmPerSigma = 2.3548200450309493;

Spectrum gaussian(double center, double fwhm, double amplitude = 1000.0, double base = 0.0, double lo = 420.0,
                  double hi = 620.0, double step = 0.5) {
  Spectrum s;
  const double sigma = fwhm / kFwhmPerSigma;
  for (double w = lo; w <= hi + 1e-9; w += step) {
    const double z = (w - center) / sigma;
    s.wavelengths_nm.push_back(w);
    s.counts.push_back(amplitude * std::exp(-0.5 * z * z) + base);
  }
  return s;
}

Spectrum with_noise(Spectrum s, double sigma, Rng& rng) {
  for (double& c : s.counts) c = std::max(0.0, c + rng.normal(0.0, sigma));
  return s;
}

PeakMetrics metrics(double cew, double fwhm) {
  PeakMetrics m;
  m.cew_nm = cew;
  m.fwhm_nm = fwhm;
  return m;
}

}  // namespace

TEST(PeakMetrics, GaussianAtEnsembleValues) {
  const auto m = spectra::peak_metrics(gaussian(511.0, 19.0));
  EXPECT_EQ(m.method, PeakMethod::gaussian_fit);
  EXPECT_TRUE(m.converged);
  EXPECT_NEAR(m.cew_nm, 511.0, 1e-6);
  EXPECT_NEAR(m.fwhm_nm, 19.0, 1e-6);

  const auto h = spectra::peak_metrics(gaussian(511.0, 19.0), PeakMethod::half_max_interpolation);
  EXPECT_NEAR(h.cew_nm, 511.0, 0.01);
  EXPECT_NEAR(h.fwhm_nm, 19.0, 0.05);
}

TEST(PeakMetrics, TriangleIsExactForHalfMax) {
  Spectrum s;
  for (int w = 480; w <= 560; ++w) {
    s.wavelengths_nm.push_back(w);
    s.counts.push_back(std::max(0.0, 100.0 - 10.0 * std::abs(w - 520.0)));  // zero at +-10, half max at +-5
  }
  const auto m = spectra::peak_metrics(s, PeakMethod::half_max_interpolation);
  EXPECT_DOUBLE_EQ(m.cew_nm, 520.0);
  EXPECT_DOUBLE_EQ(m.fwhm_nm, 10.0);
}

TEST(PeakMetrics, ParabolicRefinementBetweenSamples) {
  // Off-grid Gaussian: the vertex lands between samples, closer than the grid step.
  const auto m = spectra::peak_metrics(gaussian(511.3, 19.0, 1000.0, 0.0, 420.0, 620.0, 2.0),
                                       PeakMethod::half_max_interpolation);
  EXPECT_NEAR(m.cew_nm, 511.3, 0.05);
}

TEST(PeakMetrics, NoisyCenterSpread) {
  Rng rng(17);
  std::vector<double> cew;
  for (int trial = 0; trial < 100; ++trial)
    cew.push_back(spectra::peak_metrics(with_noise(gaussian(511.0, 19.0), 50.0, rng)).cew_nm);
  double mean = 0.0, var = 0.0;
  for (double c : cew) mean += c / 100.0;
  for (double c : cew) var += (c - mean) * (c - mean) / 99.0;
  EXPECT_LT(std::sqrt(var), 0.2);
  EXPECT_NEAR(mean, 511.0, 0.1);
}

TEST(PeakMetrics, InvariantUnderScalingAndBaseline) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = with_noise(gaussian(505.0 + trial, 18.0 + 0.3 * trial), 30.0, rng);
    const auto ref = spectra::peak_metrics(s);
    for (double k : {1e-3, 7.0, 1e4}) {
      auto scaled = s;
      for (double& c : scaled.counts) c *= k;
      const auto m = spectra::peak_metrics(scaled);
      EXPECT_NEAR(m.cew_nm, ref.cew_nm, 1e-6);
      EXPECT_NEAR(m.fwhm_nm, ref.fwhm_nm, 1e-6);
    }
    for (double b : {10.0, 500.0}) {
      auto lifted = s;
      for (double& c : lifted.counts) c += b;
      const auto m = spectra::peak_metrics(lifted);
      EXPECT_NEAR(m.cew_nm, ref.cew_nm, 1e-6);
      EXPECT_NEAR(m.fwhm_nm, ref.fwhm_nm, 1e-6);
    }
  }
}

TEST(PeakMetrics, ShiftMovesCenterOnly) {
  Rng rng(4);
  const auto s = with_noise(gaussian(511.0, 19.0), 30.0, rng);
  for (auto method : {PeakMethod::gaussian_fit, PeakMethod::half_max_interpolation}) {
    const auto ref = spectra::peak_metrics(s, method);
    for (double d : {-12.5, 0.25, 40.0}) {
      auto shifted = s;
      for (double& w : shifted.wavelengths_nm) w += d;
      const auto m = spectra::peak_metrics(shifted, method);
      EXPECT_NEAR(m.cew_nm - ref.cew_nm, d, 1e-6);
      EXPECT_NEAR(m.fwhm_nm, ref.fwhm_nm, 1e-6);
    }
  }
}

TEST(PeakMetrics, ShapeErrors) {
  Spectrum flat = gaussian(511.0, 19.0);
  std::fill(flat.counts.begin(), flat.counts.end(), 5.0);
  EXPECT_THROW(spectra::peak_metrics(flat), ShapeError);

  Spectrum twin = gaussian(480.0, 10.0);
  const auto other = gaussian(560.0, 10.0, 900.0);
  for (std::size_t i = 0; i < twin.size(); ++i) twin.counts[i] += other.counts[i];
  EXPECT_THROW(spectra::peak_metrics(twin), ShapeError);

  // Wider than the window: the maximum is not 3x the median.
  EXPECT_THROW(spectra::peak_metrics(gaussian(520.0, 400.0)), ShapeError);

  // A shoulder below 60% of the peak is not a second peak.
  Spectrum shoulder = gaussian(500.0, 10.0);
  const auto small = gaussian(560.0, 10.0, 400.0);
  for (std::size_t i = 0; i < shoulder.size(); ++i) shoulder.counts[i] += small.counts[i];
  EXPECT_NO_THROW(spectra::peak_metrics(shoulder));
}

TEST(PeakMetrics, ValidationErrors) {
  Spectrum s = gaussian(511.0, 19.0, 1000.0, 0.0, 500.0, 503.0, 0.5);  // 7 samples
  EXPECT_THROW(spectra::peak_metrics(s), ValidationError);
  s = gaussian(511.0, 19.0);
  s.wavelengths_nm[10] = s.wavelengths_nm[9];
  EXPECT_THROW(spectra::peak_metrics(s), ValidationError);
  s = gaussian(511.0, 19.0);
  s.counts[3] = -1.0;
  EXPECT_THROW(spectra::peak_metrics(s), ValidationError);
  s = gaussian(511.0, 19.0);
  s.counts.pop_back();
  EXPECT_THROW(spectra::peak_metrics(s), ValidationError);
  EXPECT_THROW(spectra::peak_method_from_string("lorentz"), ValidationError);
}

TEST(GaussianModel, GradientMatchesCentralDifferences) {
  using G = fit::Gaussian;
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    std::array<double, 4> p{rng.uniform() * 1e3 + 1.0, 480.0 + 60.0 * rng.uniform(), 2.0 + 15.0 * rng.uniform(),
                            rng.uniform() * 50.0};
    const double x = p[G::Center] + (rng.uniform() - 0.5) * 4.0 * p[G::Sigma];
    std::array<double, 4> g{};
    G::gradient(x, std::span<const double, 4>(p), std::span<double, 4>(g));
    const auto num = oracle::numeric_gradient<4>(G::value, x, p);
    for (std::size_t i = 0; i < 4; ++i)
      EXPECT_NEAR(g[i], num[i], 1e-4 * std::max(1.0, std::abs(num[i]))) << i;
  }
}

TEST(CohortStats, Examples) {
  const auto same = spectra::cohort_stats({metrics(511, 19), metrics(511, 19), metrics(511, 19)});
  EXPECT_EQ(same.std_cew_nm, 0.0);
  EXPECT_EQ(same.std_fwhm_nm, 0.0);

  const auto pair = spectra::cohort_stats({metrics(10, 1), metrics(20, 3)});
  EXPECT_DOUBLE_EQ(pair.mean_cew_nm, 15.0);
  EXPECT_DOUBLE_EQ(pair.std_cew_nm, std::sqrt(50.0));
  EXPECT_DOUBLE_EQ(pair.mean_fwhm_nm, 2.0);
  EXPECT_DOUBLE_EQ(pair.std_fwhm_nm, std::sqrt(2.0));
  ASSERT_EQ(pair.scatter.size(), 2u);
  EXPECT_EQ(pair.scatter[1], (std::pair<double, double>{20.0, 3.0}));

  EXPECT_THROW(spectra::cohort_stats({metrics(1, 1)}), ValidationError);
}

TEST(CohortStats, RecoversSampledMean) {
  int within = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<PeakMetrics> cohort;
    for (int i = 0; i < 20; ++i) cohort.push_back(metrics(rng.normal(505.2, 3.4), 19.0));
    const auto c = spectra::cohort_stats(cohort);
    within += std::abs(c.mean_cew_nm - 505.2) < 3.0 * 3.4 / std::sqrt(20.0);
  }
  EXPECT_GE(within, 19);
}

TEST(SpectrumCsv, ReadsHeaderCommentsAndCrlf) {
  const auto path = std::filesystem::temp_directory_path() / "photonstat_spec_test.csv";
  {
    std::ofstream out(path);
    out << "wavelength_nm,counts\r\n# comment\r\n500,1\r\n501.5,2.5\r\n\r\n502,3\r\n";
  }
  const auto s = spectra::read_spectrum_csv(path.string());
  ASSERT_EQ(s.size(), 3u);
  EXPECT_DOUBLE_EQ(s.wavelengths_nm[1], 501.5);
  EXPECT_DOUBLE_EQ(s.counts[1], 2.5);
  {
    std::ofstream out(path);
    out << "500,1\n501,x\n";
  }
  EXPECT_THROW(spectra::read_spectrum_csv(path.string()), ValidationError);
  std::filesystem::remove(path);
  EXPECT_THROW(spectra::read_spectrum_csv(path.string()), IoError);
}
