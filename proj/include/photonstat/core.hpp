#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "photonstat/error.hpp"
#include "photonstat/units.hpp"

namespace photonstat {

/// One detection event. Channel 0/1 are the two arms of the HBT setup.
struct PhotonRecord {
  std::uint8_t channel = 0;
  TimePs t_abs = 0;

  friend bool operator==(const PhotonRecord&, const PhotonRecord&) = default;
};

/// Time-ordered detection records of one acquisition.
struct PhotonStream {
  std::vector<PhotonRecord> records;
  TimePs rep_period_ps = 0;  // 0 means continuous-wave excitation
  TimePs duration_ps = 0;
  std::map<std::string, std::string> meta;

  bool pulsed() const noexcept { return rep_period_ps > 0; }
  std::size_t size() const noexcept { return records.size(); }
};

inline constexpr std::uint8_t kMaxChannels = 2;

/// Throws ValidationError naming the first record that breaks ordering,
/// channel range or the duration bound.
inline void validate(const PhotonStream& stream) {
  const auto& rec = stream.records;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (rec[i].channel >= kMaxChannels)
      throw ValidationError("unknown channel " + std::to_string(rec[i].channel), i);
    if (i > 0 && rec[i].t_abs < rec[i - 1].t_abs)
      throw ValidationError("timestamps not monotonic", i);
    if (rec[i].t_abs > stream.duration_ps)
      throw ValidationError("timestamp beyond stream duration", i);
  }
}

/// Photon counts in consecutive fixed-width bins.
struct IntensityTrace {
  TimePs bin_width_ps = kDefaultTraceBinPs;
  TimePs start_ps = 0;
  std::vector<std::uint32_t> counts;

  std::size_t size() const noexcept { return counts.size(); }
  TimePs end_ps() const noexcept { return start_ps + bin_width_ps * counts.size(); }
};

/// Bins records over [start, duration). The trailing partial bin is dropped so
/// every bin has the same exposure.
inline IntensityTrace bin_intensity(const PhotonStream& stream, TimePs bin_width_ps,
                                    std::optional<std::uint8_t> channel_filter = {},
                                    TimePs start_ps = 0) {
  if (bin_width_ps == 0) throw ValidationError("bin width must be positive");
  IntensityTrace trace;
  trace.bin_width_ps = bin_width_ps;
  trace.start_ps = start_ps;
  const TimePs span = stream.duration_ps > start_ps ? stream.duration_ps - start_ps : 0;
  trace.counts.assign(span / bin_width_ps, 0);
  const TimePs end = trace.end_ps();

  auto first = std::lower_bound(
      stream.records.begin(), stream.records.end(), start_ps,
      [](const PhotonRecord& r, TimePs t) { return r.t_abs < t; });
  for (auto it = first; it != stream.records.end() && it->t_abs < end; ++it) {
    if (channel_filter && it->channel != *channel_filter) continue;
    ++trace.counts[(it->t_abs - start_ps) / bin_width_ps];
  }
  return trace;
}

/// Photon delay after the most recent excitation pulse. The pulse phase is
/// zero at t_abs = 0.
struct MicroTime {
  TimePs value = 0;

  friend auto operator<=>(const MicroTime&, const MicroTime&) = default;
};

inline MicroTime micro_time(TimePs t_abs, TimePs rep_period_ps) {
  return MicroTime{t_abs % rep_period_ps};
}

inline std::vector<MicroTime> micro_times(const PhotonStream& stream) {
  if (!stream.pulsed())
    throw UnsupportedModeError("micro times need a pulsed stream (rep_period_ps > 0)");
  std::vector<MicroTime> out;
  out.reserve(stream.size());
  for (const auto& r : stream.records) out.push_back(micro_time(r.t_abs, stream.rep_period_ps));
  return out;
}

}  // namespace photonstat
