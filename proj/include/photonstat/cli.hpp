#pragma once

#include <glob.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "photonstat/blinking.hpp"
#include "photonstat/corr.hpp"
#include "photonstat/lifetime.hpp"
#include "photonstat/report.hpp"
#include "photonstat/repro.hpp"
#include "photonstat/sim.hpp"
#include "photonstat/spectra.hpp"
#include "photonstat/stream_io.hpp"

namespace photonstat::cli {

using nlohmann::json;

enum ExitCode : int { kOk = 0, kValidation = 1, kNotConverged = 2, kUsage = 64 };

/// Options shared by every subcommand.
struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool quiet = false;

  /// --threads, else PHOTONSTAT_THREADS, else the hardware concurrency.
  unsigned thread_count() const {
    if (threads && *threads > 0) return *threads;
    if (const char* env = std::getenv("PHOTONSTAT_THREADS")) {
      try {
        const long n = std::stol(env);
        if (n > 0) return static_cast<unsigned>(n);
      } catch (const std::exception&) {
      }
    }
    return std::max(1u, std::thread::hardware_concurrency());
  }
};

namespace detail {

/// Duration option validated through parse_duration.
inline CLI::Option* add_duration(CLI::App* app, const std::string& name, std::string& target,
                                 const std::string& help) {
  return app
      ->add_option(name, target, help)
      ->check([](const std::string& s) {
        try {
          parse_duration(s);
          return std::string();
        } catch (const ValidationError& e) {
          return std::string(e.what());
        }
      })
      ->capture_default_str();
}

inline blinking::GridSpec parse_grid(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) {
      const auto n = std::stoul(s);
      return {n, n};
    }
    return {std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw ValidationError("grid must look like 128x128, got '" + s + "'");
  }
}

inline std::vector<lifetime::SaturationPoint> read_power_csv(const std::string& path) {
  // Same two-column layout as spectra, different meaning.
  const auto cols = spectra::read_spectrum_csv(path);
  std::vector<lifetime::SaturationPoint> pts;
  for (std::size_t i = 0; i < cols.size(); ++i) pts.push_back({cols.wavelengths_nm[i], cols.counts[i]});
  return pts;
}

inline std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<std::string> out;
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  if (rc == 0)
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) throw IoError("glob failed for '" + pattern + "'");
  return out;  // glob() returns paths sorted
}

}  // namespace detail

/// Parses argv and runs one subcommand. Returns the process exit status.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Photon statistics of single quantum emitters: simulation, g2, lifetimes, blinking, spectra",
               "photonstat"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "photonstat 0.1.0");

  Globals g;
  app.add_option("--seed", g.seed, "RNG seed for simulating subcommands");
  app.add_option("--threads", g.threads, "Worker threads (fallback: PHOTONSTAT_THREADS)");
  app.add_flag("--quiet,-q", g.quiet, "Suppress the human-readable summary");

  std::ostringstream summary;
  int status = kOk;

  // simulate ---------------------------------------------------------------
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a photon stream from an emitter model");
  std::string model_path, sim_out, sim_duration = "600s", truth_path;
  sim_cmd->add_option("--model", model_path, "EmitterModel JSON (defaults when omitted)")->check(CLI::ExistingFile);
  detail::add_duration(sim_cmd, "--duration", sim_duration, "Acquisition length, e.g. 600s");
  sim_cmd->add_option("--out", sim_out, "Output stream (.psph, or .tsv for text)")->required();
  sim_cmd->add_option("--truth", truth_path, "Write the generator's state timeline and counters as JSON");
  sim_cmd->callback([&] {
    sim::EmitterModel model;
    if (!model_path.empty()) model = json::parse(read_file(model_path)).get<sim::EmitterModel>();
    const std::uint64_t seed = g.seed.value_or(model.seed);
    sim::SimulationTruth truth;
    const auto stream = sim::simulate(model, parse_duration(sim_duration), seed, &truth);
    write_stream(stream, sim_out);
    if (!truth_path.empty()) {
      json tl = json::array();
      for (const auto& s : truth.timeline)
        tl.push_back({{"state", s.state == sim::EmitterState::on ? "on" : "off"}, {"start_ps", s.start_ps}, {"end_ps", s.end_ps}});
      report::write_json(truth_path, {{"seed", seed},
                                      {"pulses", truth.pulses},
                                      {"signal_photons", truth.signal_photons},
                                      {"dark_counts", truth.dark_counts},
                                      {"pair_pulses", truth.pair_pulses},
                                      {"timeline", std::move(tl)}});
    }
    summary << "simulated " << stream.size() << " photons over " << sim_duration << " (seed " << seed << ") -> "
            << sim_out << "\n";
  });

  // g2 ---------------------------------------------------------------------
  auto* g2_cmd = app.add_subcommand("g2", "Second-order correlation and g2(0)");
  std::string g2_in, g2_json, g2_csv, g2_bin = "1ns", g2_max, g2_ref, bg_lo, bg_hi;
  bool g2_clean = false;
  std::size_t side_peaks = 0;
  g2_cmd->add_option("--in", g2_in, "Input stream")->required()->check(CLI::ExistingFile);
  detail::add_duration(g2_cmd, "--bin", g2_bin, "Histogram bin width");
  detail::add_duration(g2_cmd, "--max-delay", g2_max, "Delay range (default 25 periods)");
  detail::add_duration(g2_cmd, "--reference-delay", g2_ref, "Peaks at or beyond this delay normalize (default 10 periods)");
  g2_cmd->add_flag("--clean", g2_clean, "Subtract the background before normalizing");
  detail::add_duration(g2_cmd, "--background-lo", bg_lo, "Background window start (positive delay)");
  detail::add_duration(g2_cmd, "--background-hi", bg_hi, "Background window end");
  g2_cmd->add_option("--side-peaks", side_peaks, "Reference peaks used for g2(0); 0 = all")->capture_default_str();
  g2_cmd->add_option("--json", g2_json, "Write histogram and result as JSON");
  g2_cmd->add_option("--csv", g2_csv, "Write the histogram as CSV");
  g2_cmd->callback([&] {
    const auto stream = read_stream(g2_in);
    if (!stream.pulsed()) throw UnsupportedModeError("g2 normalization needs pulsed data");
    const auto rep = static_cast<std::int64_t>(stream.rep_period_ps);
    const auto bin = static_cast<std::int64_t>(parse_duration(g2_bin));
    const std::int64_t max = g2_max.empty() ? corr::kDefaultMaxDelayPeriods * rep
                                            : static_cast<std::int64_t>(parse_duration(g2_max));
    const std::int64_t ref = g2_ref.empty() ? corr::kDefaultReferencePeriods * rep
                                            : static_cast<std::int64_t>(parse_duration(g2_ref));
    auto h = corr::correlate(stream, bin, max, g.thread_count());
    if (g2_clean) {
      std::optional<corr::DelayWindow> window;
      if (!bg_lo.empty() || !bg_hi.empty()) {
        if (bg_lo.empty() || bg_hi.empty()) throw ValidationError("give both --background-lo and --background-hi");
        window = corr::DelayWindow{static_cast<std::int64_t>(parse_duration(bg_lo)),
                                   static_cast<std::int64_t>(parse_duration(bg_hi))};
      }
      h = corr::clean_background(h, window);
    }
    const auto n = corr::normalize_peaks(h, rep, ref);
    const auto r = corr::g2_zero(n, side_peaks);
    if (!g2_json.empty()) report::write_json(g2_json, report::g2_json(n, r));
    if (!g2_csv.empty()) write_file(g2_csv, report::g2_csv(n));
    summary << "g2(0) = " << r.g2_zero << " (center " << r.center_area << ", side mean " << r.mean_side_area << ", "
            << r.n_side_peaks_used << " side peaks" << (r.background_cleaned ? ", background cleaned" : "") << ")\n";
  });

  // decay ------------------------------------------------------------------
  auto* decay_cmd = app.add_subcommand("decay", "Micro-time histogram and tri-exponential fit");
  std::string decay_in, decay_json, decay_csv, decay_bin = "100ps", decay_fit = "triexp";
  bool unweighted = false, peak_norm = false;
  decay_cmd->add_option("--in", decay_in, "Input stream")->required()->check(CLI::ExistingFile);
  detail::add_duration(decay_cmd, "--bin", decay_bin, "Histogram bin width");
  decay_cmd->add_option("--fit", decay_fit, "Model to fit: triexp or none")
      ->check(CLI::IsMember({"triexp", "none"}))
      ->capture_default_str();
  decay_cmd->add_flag("--unweighted", unweighted, "Fit without Poisson weights");
  decay_cmd->add_flag("--peak-normalize", peak_norm, "Divide the histogram by its maximum");
  decay_cmd->add_option("--json", decay_json, "Write histogram and fit as JSON");
  decay_cmd->add_option("--csv", decay_csv, "Write histogram (and model) as CSV");
  decay_cmd->callback([&] {
    const auto stream = read_stream(decay_in);
    const auto h = lifetime::decay_histogram(stream, parse_duration(decay_bin),
                                             peak_norm ? lifetime::Normalization::peak : lifetime::Normalization::raw);
    std::optional<lifetime::TriExpFit> fit;
    if (decay_fit == "triexp") {
      lifetime::TriExpOptions opt;
      opt.poisson_weights = !unweighted;
      fit = lifetime::fit_triexp(h, {}, opt);
      if (!fit->converged) status = kNotConverged;
    }
    const lifetime::TriExpFit* fp = fit ? &*fit : nullptr;
    if (!decay_json.empty()) report::write_json(decay_json, report::decay_json(h, fp));
    if (!decay_csv.empty()) write_file(decay_csv, report::decay_csv(h, fp));
    if (fit) {
      summary << "tri-exponential fit" << (fit->converged ? "" : " (NOT CONVERGED)") << ":";
      for (int k = 0; k < 3; ++k) summary << " A" << k + 1 << "=" << fit->amplitudes[k] << " tau" << k + 1 << "=" << fit->lifetimes_ns[k] << "ns";
      summary << " B=" << fit->baseline << "\n";
      try {
        summary << "average lifetime " << lifetime::average_lifetime(*fit) << " ns (amplitude weighted), "
                << lifetime::average_lifetime(*fit, lifetime::LifetimeConvention::intensity_weighted)
                << " ns (intensity weighted)\n";
      } catch (const DegenerateDataError&) {
      }
    } else {
      summary << "decay histogram with " << h.size() << " bins\n";
    }
  });

  // satfit -----------------------------------------------------------------
  auto* sat_cmd = app.add_subcommand("satfit", "Fit the saturation curve I(P)");
  std::string sat_csv, sat_json;
  sat_cmd->add_option("--csv", sat_csv, "Input CSV 'power,intensity'")->required()->check(CLI::ExistingFile);
  sat_cmd->add_option("--json", sat_json, "Write the fit as JSON");
  sat_cmd->callback([&] {
    const auto f = lifetime::fit_saturation(detail::read_power_csv(sat_csv));
    if (!f.converged) status = kNotConverged;
    if (!sat_json.empty()) report::write_json(sat_json, report::saturation_json(f));
    summary << "saturation fit" << (f.converged ? "" : " (NOT CONVERGED)") << ": A=" << f.a << " B=" << f.b
            << " Psat=" << f.p_sat << "\n";
  });

  // blink ------------------------------------------------------------------
  auto* blink_cmd = app.add_subcommand("blink", "ON/OFF segmentation and OFF-time statistics");
  std::string blink_in, blink_json, blink_csv, blink_bin = "10ms";
  double threshold = kDefaultOffThreshold;
  blink_cmd->add_option("--in", blink_in, "Input stream")->required()->check(CLI::ExistingFile);
  detail::add_duration(blink_cmd, "--bin", blink_bin, "Intensity trace bin width");
  blink_cmd->add_option("--threshold", threshold, "OFF when counts per bin fall below this")->capture_default_str();
  blink_cmd->add_option("--json", blink_json, "Write segmentation, OFF CDF and fit as JSON");
  blink_cmd->add_option("--csv", blink_csv, "Write the intensity trace as CSV");
  blink_cmd->callback([&] {
    const auto stream = read_stream(blink_in);
    const auto trace = bin_intensity(stream, parse_duration(blink_bin));
    const auto seg = blinking::segment(trace, threshold);
    if (!blink_csv.empty()) write_file(blink_csv, report::trace_csv(trace, threshold));
    const auto cdf = blinking::off_cdf(seg);
    const auto f = blinking::fit_off_cdf(cdf);
    if (!f.converged) status = kNotConverged;
    if (!blink_json.empty()) report::write_json(blink_json, report::blink_json(trace, seg, &cdf, &f));
    summary << cdf.n_events << " OFF events; m_off=" << f.m_off << " tau_c=" << f.tau_c_s << " s"
            << (f.levy_like() ? " (Levy-like, m < 1)" : "") << (f.converged ? "" : " (NOT CONVERGED)") << "\n";
  });

  // flid -------------------------------------------------------------------
  auto* flid_cmd = app.add_subcommand("flid", "Fluorescence lifetime-intensity distribution");
  std::string flid_in, flid_json, flid_csv, flid_bin = "10ms", grid = "128x128";
  flid_cmd->add_option("--in", flid_in, "Input stream")->required()->check(CLI::ExistingFile);
  detail::add_duration(flid_cmd, "--bin", flid_bin, "Intensity bin width");
  flid_cmd->add_option("--grid", grid, "Grid size, intensity x lifetime")->capture_default_str();
  flid_cmd->add_option("--json", flid_json, "Write bandwidths, grid and modes as JSON");
  flid_cmd->add_option("--csv", flid_csv, "Write density rows 'intensity,lifetime,density'");
  flid_cmd->callback([&] {
    const auto stream = read_stream(flid_in);
    const auto map = blinking::flid(stream, parse_duration(flid_bin), detail::parse_grid(grid), g.thread_count());
    const auto modes = blinking::flid_modes(map);
    if (!flid_json.empty()) report::write_json(flid_json, report::flid_json(map, modes));
    if (!flid_csv.empty()) write_file(flid_csv, report::flid_csv(map));
    summary << map.points.size() << " FLID points, " << modes.size() << " modes";
    for (std::size_t k = 0; k < std::min<std::size_t>(modes.size(), 3); ++k)
      summary << (k ? ", " : ": ") << "(" << modes[k].intensity << " counts, " << modes[k].lifetime_ns << " ns)";
    summary << "\n";
  });

  // spectrum ---------------------------------------------------------------
  auto* spec_cmd = app.add_subcommand("spectrum", "Central emission wavelength and FWHM of a PL spectrum");
  std::string spec_csv, spec_json, method = "gaussian";
  spec_cmd->add_option("--csv", spec_csv, "Input CSV 'wavelength_nm,counts'")->required()->check(CLI::ExistingFile);
  spec_cmd->add_option("--method", method, "gaussian or half_max")
      ->check(CLI::IsMember({"gaussian", "gaussian_fit", "half_max", "half_max_interpolation"}))
      ->capture_default_str();
  spec_cmd->add_option("--json", spec_json, "Write PeakMetrics as JSON");
  spec_cmd->callback([&] {
    auto m = spectra::peak_metrics(spectra::read_spectrum_csv(spec_csv), spectra::peak_method_from_string(method));
    m.source = std::filesystem::path(spec_csv).filename().string();
    if (!m.converged) status = kNotConverged;
    if (!spec_json.empty()) report::write_json(spec_json, json(m));
    summary << "CEW " << m.cew_nm << " nm, FWHM " << m.fwhm_nm << " nm (" << spectra::to_string(m.method) << ")\n";
  });

  // cohort -----------------------------------------------------------------
  auto* cohort_cmd = app.add_subcommand("cohort", "Mean and spread of CEW and FWHM over PeakMetrics files");
  std::string pattern, cohort_json, cohort_csv;
  cohort_cmd->add_option("--glob", pattern, "Pattern for PeakMetrics JSON files, e.g. 'dots/*.json'")->required();
  cohort_cmd->add_option("--json", cohort_json, "Write statistics and scatter table as JSON");
  cohort_cmd->add_option("--csv", cohort_csv, "Write the (CEW, FWHM) scatter table as CSV");
  cohort_cmd->callback([&] {
    std::vector<spectra::PeakMetrics> metrics;
    for (const auto& path : detail::expand_glob(pattern)) {
      auto m = json::parse(read_file(path)).get<spectra::PeakMetrics>();
      if (m.source.empty()) m.source = std::filesystem::path(path).filename().string();
      metrics.push_back(std::move(m));
    }
    const auto c = spectra::cohort_stats(metrics);
    if (!cohort_json.empty()) report::write_json(cohort_json, report::cohort_json(c, metrics));
    if (!cohort_csv.empty()) {
      std::string s = "cew_nm,fwhm_nm\n";
      for (const auto& [cew, fwhm] : c.scatter) s += report::fmt(cew) + "," + report::fmt(fwhm) + "\n";
      write_file(cohort_csv, s);
    }
    summary << c.n << " spectra: CEW " << c.mean_cew_nm << " +- " << c.std_cew_nm << " nm, FWHM " << c.mean_fwhm_nm
            << " +- " << c.std_fwhm_nm << " nm\n";
  });

  // repro ------------------------------------------------------------------
  auto* repro_cmd = app.add_subcommand("repro", "Simulate a bundled profile and run every analysis");
  std::string profile_name = "x0", profile_file, repro_out = "repro_out", repro_duration;
  repro_cmd->add_option("--profile", profile_name, "Bundled profile: x0, x08 or x1")
      ->check(CLI::IsMember(repro::profile_names()))
      ->capture_default_str();
  repro_cmd->add_option("--profile-file", profile_file, "Profile JSON instead of a bundled one")->check(CLI::ExistingFile);
  repro_cmd->add_option("--out-dir", repro_out, "Directory for artifacts")->capture_default_str();
  detail::add_duration(repro_cmd, "--duration", repro_duration, "Override the profile's acquisition length");
  repro_cmd->callback([&] {
    auto profile = repro::parse_profile(profile_file.empty() ? repro::builtin_profile_json(profile_name)
                                                             : json::parse(read_file(profile_file)));
    if (!repro_duration.empty()) profile.duration_ps = parse_duration(repro_duration);
    const std::uint64_t seed = g.seed.value_or(profile.model.seed);
    const auto outcome = repro::run_pipeline(profile, seed, repro_out, g.thread_count());
    if (!outcome.converged) status = kNotConverged;
    repro::print_summary(summary, outcome.summary);
    summary << "artifacts in " << repro_out << "\n";
  });

  // convert ----------------------------------------------------------------
  auto* conv_cmd = app.add_subcommand("convert", "Convert between .psph and .tsv streams");
  std::string conv_in, conv_out;
  conv_cmd->add_option("--in", conv_in, "Input stream")->required()->check(CLI::ExistingFile);
  conv_cmd->add_option("--out", conv_out, "Output stream; the extension picks the format")->required();
  conv_cmd->callback([&] {
    const auto stream = read_stream(conv_in);
    write_stream(stream, conv_out);
    summary << "converted " << stream.size() << " records -> " << conv_out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "photonstat: " << e.what() << "\n\n" << app.help();
    return kUsage;
  } catch (const Error& e) {
    err << "photonstat: " << e.what() << "\n";
    return kValidation;
  } catch (const json::exception& e) {
    err << "photonstat: malformed JSON: " << e.what() << "\n";
    return kValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "photonstat: " << e.what() << "\n";
    return kValidation;
  }
  if (!g.quiet) out << summary.str();
  return status;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"photonstat"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace photonstat::cli
