#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "photonstat/error.hpp"

namespace photonstat {

/// Integer picoseconds. 600 s is 6e14 ps, well inside 64 bits.
using TimePs = std::uint64_t;

inline constexpr TimePs kPicosecond = 1;
inline constexpr TimePs kNanosecond = 1'000;
inline constexpr TimePs kMicrosecond = 1'000'000;
inline constexpr TimePs kMillisecond = 1'000'000'000;
inline constexpr TimePs kSecond = 1'000'000'000'000;

/// Defaults taken from the reference experiment.
inline constexpr TimePs kDefaultRepPeriodPs = 400'000;       // 2.5 MHz
inline constexpr TimePs kDefaultTraceBinPs = 10 * kMillisecond;
inline constexpr TimePs kDefaultTraceLengthPs = 600 * kSecond;
inline constexpr double kDefaultOffThreshold = 15.0;       // counts per bin

inline constexpr double ps_to_ns(double ps) { return ps * 1e-3; }
inline constexpr double ps_to_s(double ps) { return ps * 1e-12; }
inline constexpr double ns_to_ps(double ns) { return ns * 1e3; }
inline constexpr double s_to_ps(double s) { return s * 1e12; }

/// Parses "600s", "10ms", "10us", "1ns", "100ps" or a bare number of
/// picoseconds. Fractional values are rounded to the nearest picosecond.
inline TimePs parse_duration(std::string_view text) {
  auto fail = [&]() -> TimePs {
    throw ValidationError("invalid duration '" + std::string(text) + "'");
  };
  if (text.empty()) return fail();

  std::size_t split = text.size();
  while (split > 0 && std::isalpha(static_cast<unsigned char>(text[split - 1])))
    --split;
  const std::string number(text.substr(0, split));
  const std::string_view unit = text.substr(split);

  double scale = 1.0;
  if (unit.empty() || unit == "ps") scale = 1.0;
  else if (unit == "ns") scale = 1e3;
  else if (unit == "us") scale = 1e6;
  else if (unit == "ms") scale = 1e9;
  else if (unit == "s") scale = 1e12;
  else return fail();

  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(number, &used);
  } catch (const std::exception&) {
    return fail();
  }
  if (used != number.size() || !std::isfinite(value) || value < 0.0) return fail();
  return static_cast<TimePs>(std::llround(value * scale));
}

}  // namespace photonstat
