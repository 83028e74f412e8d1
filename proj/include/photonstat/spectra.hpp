#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "photonstat/error.hpp"
#include "photonstat/lm.hpp"
#include "photonstat/models.hpp"

namespace photonstat::spectra {

inline constexpr std::size_t kMinSamples = 8;
inline const double kFwhmPerSigma = 2.0 * std::sqrt(2.0 * std::log(2.0));

struct Spectrum {
  std::vector<double> wavelengths_nm;
  std::vector<double> counts;

  std::size_t size() const noexcept { return counts.size(); }

  void validate() const {
    if (wavelengths_nm.size() != counts.size())
      throw ValidationError("wavelength and count columns differ in length");
    if (counts.size() < kMinSamples)
      throw ValidationError("spectrum needs at least " + std::to_string(kMinSamples) + " samples");
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (!std::isfinite(wavelengths_nm[i]) || !std::isfinite(counts[i]))
        throw ValidationError("non-finite spectrum sample", i);
      if (counts[i] < 0.0) throw ValidationError("negative spectrum count", i);
      if (i > 0 && !(wavelengths_nm[i] > wavelengths_nm[i - 1]))
        throw ValidationError("wavelengths must be strictly increasing", i);
    }
  }
};

enum class PeakMethod { gaussian_fit, half_max_interpolation };

inline const char* to_string(PeakMethod m) {
  return m == PeakMethod::gaussian_fit ? "gaussian_fit" : "half_max_interpolation";
}

inline PeakMethod peak_method_from_string(const std::string& s) {
  if (s == "gaussian" || s == "gaussian_fit") return PeakMethod::gaussian_fit;
  if (s == "half_max" || s == "half_max_interpolation" || s == "halfmax") return PeakMethod::half_max_interpolation;
  throw ValidationError("unknown peak method '" + s + "'");
}

struct PeakMetrics {
  double cew_nm = 0.0;
  double fwhm_nm = 0.0;
  PeakMethod method = PeakMethod::gaussian_fit;
  bool converged = true;
  std::string source;  // optional label, e.g. input file name
};

namespace detail {

inline double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  return m;
}

/// Linear interpolation of the wavelength where counts cross `level` between
/// samples i and i+1.
inline double crossing(const Spectrum& s, std::size_t i, double level) {
  const double y0 = s.counts[i], y1 = s.counts[i + 1];
  const double f = (level - y0) / (y1 - y0);
  return s.wavelengths_nm[i] + f * (s.wavelengths_nm[i + 1] - s.wavelengths_nm[i]);
}

struct HalfMax {
  double left;
  double right;
};

/// Half-maximum crossings on either side of `peak`, measured above the
/// spectrum minimum. Missing crossings fall back to the range ends.
inline HalfMax half_max_crossings(const Spectrum& s, std::size_t peak, double base) {
  const double level = base + 0.5 * (s.counts[peak] - base);
  HalfMax h{s.wavelengths_nm.front(), s.wavelengths_nm.back()};
  for (std::size_t i = peak; i > 0; --i)
    if (s.counts[i - 1] <= level) {
      h.left = crossing(s, i - 1, level);
      break;
    }
  for (std::size_t i = peak; i + 1 < s.size(); ++i)
    if (s.counts[i + 1] <= level) {
      h.right = crossing(s, i, level);
      break;
    }
  return h;
}

/// Shape gate: a single dominant peak standing well above the median.
inline std::size_t check_shape(const Spectrum& s) {
  const auto [lo, hi] = std::minmax_element(s.counts.begin(), s.counts.end());
  const double base = *lo;
  const double height = *hi - base;
  if (!(height > 0.0)) throw ShapeError("spectrum is flat");
  if (height < 3.0 * (median(s.counts) - base))
    throw ShapeError("no dominant peak: maximum is less than 3x the median above baseline");

  const auto peak = static_cast<std::size_t>(hi - s.counts.begin());
  // The main peak extends until the signal falls below 20% of its height; any
  // sample beyond that reaching 60% belongs to another peak.
  std::size_t a = peak, b = peak;
  while (a > 0 && s.counts[a - 1] - base >= 0.2 * height) --a;
  while (b + 1 < s.size() && s.counts[b + 1] - base >= 0.2 * height) ++b;
  for (std::size_t i = 0; i < s.size(); ++i)
    if ((i < a || i > b) && s.counts[i] - base >= 0.6 * height)
      throw ShapeError("spectrum has more than one peak");
  return peak;
}

}  // namespace detail

inline PeakMetrics half_max_metrics(const Spectrum& s, std::size_t peak) {
  const double base = *std::min_element(s.counts.begin(), s.counts.end());
  PeakMetrics m;
  m.method = PeakMethod::half_max_interpolation;
  m.cew_nm = s.wavelengths_nm[peak];
  if (peak > 0 && peak + 1 < s.size()) {
    // Vertex of the parabola through the three samples around the maximum.
    const double x0 = s.wavelengths_nm[peak - 1], x1 = s.wavelengths_nm[peak], x2 = s.wavelengths_nm[peak + 1];
    const double y0 = s.counts[peak - 1], y1 = s.counts[peak], y2 = s.counts[peak + 1];
    const double num = (x1 - x0) * (x1 - x0) * (y1 - y2) - (x1 - x2) * (x1 - x2) * (y1 - y0);
    const double den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if (den != 0.0) m.cew_nm = std::clamp(x1 - 0.5 * num / den, x0, x2);
  }
  const auto h = detail::half_max_crossings(s, peak, base);
  m.fwhm_nm = h.right - h.left;
  return m;
}

inline PeakMetrics gaussian_metrics(const Spectrum& s, std::size_t peak, const fit::LmOptions& lm = {}) {
  using G = fit::Gaussian;
  const double base = *std::min_element(s.counts.begin(), s.counts.end());
  const auto h = detail::half_max_crossings(s, peak, base);
  const double range = s.wavelengths_nm.back() - s.wavelengths_nm.front();
  double sigma0 = (h.right - h.left) / kFwhmPerSigma;
  if (!(sigma0 > 0.0)) sigma0 = range / 10.0;

  std::array<double, 4> p0{s.counts[peak] - base, s.wavelengths_nm[peak], sigma0, base};
  fit::CurveProblem<G> problem(s.wavelengths_nm, s.counts, {}, p0, fit::all_parameters<G>());
  fit::Bounds bounds = fit::Bounds::unbounded(4);
  bounds.lower[G::Sigma] = 1e-6 * range;
  const auto r = fit::levenberg_marquardt(problem, problem.pack(p0), bounds, lm);

  PeakMetrics m;
  m.method = PeakMethod::gaussian_fit;
  m.cew_nm = r.params[G::Center];
  m.fwhm_nm = kFwhmPerSigma * std::abs(r.params[G::Sigma]);
  m.converged = r.converged;
  if (m.cew_nm < s.wavelengths_nm.front() || m.cew_nm > s.wavelengths_nm.back())
    throw ShapeError("fitted peak center lies outside the wavelength range");
  return m;
}

inline PeakMetrics peak_metrics(const Spectrum& s, PeakMethod method = PeakMethod::gaussian_fit) {
  s.validate();
  const std::size_t peak = detail::check_shape(s);
  return method == PeakMethod::gaussian_fit ? gaussian_metrics(s, peak) : half_max_metrics(s, peak);
}

struct CohortStats {
  std::size_t n = 0;
  double mean_cew_nm = 0.0;
  double std_cew_nm = 0.0;
  double mean_fwhm_nm = 0.0;
  double std_fwhm_nm = 0.0;
  std::vector<std::pair<double, double>> scatter;  // (CEW, FWHM)
};

/// Sample means and standard deviations with the n - 1 denominator.
inline CohortStats cohort_stats(const std::vector<PeakMetrics>& metrics) {
  if (metrics.size() < 2) throw ValidationError("cohort statistics need at least 2 spectra");
  CohortStats c;
  c.n = metrics.size();
  const double n = static_cast<double>(c.n);
  for (const auto& m : metrics) {
    c.mean_cew_nm += m.cew_nm / n;
    c.mean_fwhm_nm += m.fwhm_nm / n;
    c.scatter.emplace_back(m.cew_nm, m.fwhm_nm);
  }
  for (const auto& m : metrics) {
    c.std_cew_nm += (m.cew_nm - c.mean_cew_nm) * (m.cew_nm - c.mean_cew_nm);
    c.std_fwhm_nm += (m.fwhm_nm - c.mean_fwhm_nm) * (m.fwhm_nm - c.mean_fwhm_nm);
  }
  c.std_cew_nm = std::sqrt(c.std_cew_nm / (n - 1.0));
  c.std_fwhm_nm = std::sqrt(c.std_fwhm_nm / (n - 1.0));
  return c;
}

/// Two numeric columns "wavelength_nm,counts"; a non-numeric first line is
/// taken as a header, '#' lines are comments.
inline Spectrum read_spectrum_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Spectrum s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double w = 0.0, c = 0.0;
    if (!(ss >> w >> c)) {
      if (s.size() == 0 && lineno == 1) continue;
      throw ValidationError(path + ": line " + std::to_string(lineno) + " is not 'wavelength_nm,counts'");
    }
    s.wavelengths_nm.push_back(w);
    s.counts.push_back(c);
  }
  return s;
}

inline void to_json(nlohmann::json& j, const PeakMetrics& m) {
  j = {{"cew_nm", m.cew_nm}, {"fwhm_nm", m.fwhm_nm}, {"method", to_string(m.method)}, {"converged", m.converged}};
  if (!m.source.empty()) j["source"] = m.source;
}

inline void from_json(const nlohmann::json& j, PeakMetrics& m) {
  m.cew_nm = j.at("cew_nm").get<double>();
  m.fwhm_nm = j.at("fwhm_nm").get<double>();
  m.method = peak_method_from_string(j.value("method", std::string("gaussian_fit")));
  m.converged = j.value("converged", true);
  m.source = j.value("source", std::string());
}

}  // namespace photonstat::spectra
