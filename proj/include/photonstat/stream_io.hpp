#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "photonstat/core.hpp"
#include "photonstat/error.hpp"

namespace photonstat {

enum class StreamFormat { binary, tsv };

/// Picks the format from the file extension: ".tsv"/".txt" are text, anything
/// else is the binary ".psph" layout.
inline StreamFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".tsv" || ext == ".txt") ? StreamFormat::tsv : StreamFormat::binary;
}

namespace psph {

// 24-byte header: "PSPH", u16 version, u16 channel count, u64 rep period,
// u64 record count; then 9-byte records (u8 channel, u64 t_abs). All
// little-endian.
inline constexpr std::array<char, 4> kMagic{'P', 'S', 'P', 'H'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 24;
inline constexpr std::size_t kRecordSize = 9;

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace detail

inline std::string encode(const PhotonStream& stream) {
  std::uint16_t channels = 1;
  for (const auto& r : stream.records)
    channels = std::max<std::uint16_t>(channels, static_cast<std::uint16_t>(r.channel + 1));

  std::string out;
  out.reserve(kHeaderSize + kRecordSize * stream.size());
  out.append(kMagic.data(), kMagic.size());
  detail::put_le<std::uint16_t>(out, kVersion);
  detail::put_le<std::uint16_t>(out, channels);
  detail::put_le<std::uint64_t>(out, stream.rep_period_ps);
  detail::put_le<std::uint64_t>(out, stream.size());
  for (const auto& r : stream.records) {
    out.push_back(static_cast<char>(r.channel));
    detail::put_le<std::uint64_t>(out, r.t_abs);
  }
  return out;
}

/// The binary layout carries no duration; it is set to the last timestamp.
inline PhotonStream decode(std::string_view bytes) {
  using detail::get_le;
  if (bytes.size() < kHeaderSize) throw FormatError("truncated header", bytes.size());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(p, kMagic.data(), kMagic.size()) != 0) throw FormatError("bad magic", 0);
  const auto version = get_le<std::uint16_t>(p + 4);
  if (version != kVersion)
    throw FormatError("unsupported format version " + std::to_string(version), 4);
  const auto channels = get_le<std::uint16_t>(p + 6);
  if (channels == 0 || channels > kMaxChannels)
    throw FormatError("unsupported channel count " + std::to_string(channels), 6);

  PhotonStream stream;
  stream.rep_period_ps = get_le<std::uint64_t>(p + 8);
  const auto count = get_le<std::uint64_t>(p + 16);
  const std::uint64_t body = bytes.size() - kHeaderSize;
  if (count > body / kRecordSize)
    throw FormatError("record count " + std::to_string(count) + " exceeds file size",
                      kHeaderSize + (body / kRecordSize) * kRecordSize);
  if (body != count * kRecordSize)
    throw FormatError("trailing bytes after last record", kHeaderSize + count * kRecordSize);

  stream.records.resize(count);
  const unsigned char* rec = p + kHeaderSize;
  for (std::uint64_t i = 0; i < count; ++i, rec += kRecordSize) {
    stream.records[i].channel = rec[0];
    if (rec[0] >= channels)
      throw ValidationError("unknown channel " + std::to_string(rec[0]), i);
    stream.records[i].t_abs = get_le<std::uint64_t>(rec + 1);
  }
  for (const auto& r : stream.records) stream.duration_ps = std::max(stream.duration_ps, r.t_abs);
  validate(stream);
  return stream;
}

}  // namespace psph

namespace tsv {

inline std::string encode(const PhotonStream& stream) {
  std::ostringstream os;
  os << "# rep_period_ps=" << stream.rep_period_ps << '\n';
  os << "# duration_ps=" << stream.duration_ps << '\n';
  for (const auto& [key, value] : stream.meta)
    if (key != "rep_period_ps" && key != "duration_ps") os << "# " << key << '=' << value << '\n';
  for (const auto& r : stream.records) os << static_cast<unsigned>(r.channel) << '\t' << r.t_abs << '\n';
  return os.str();
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_u64(std::string_view s, std::uint64_t& out) {
  if (s.empty()) return false;
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    const std::uint64_t digit = static_cast<std::uint64_t>(c - '0');
    if (v > (UINT64_MAX - digit) / 10) return false;
    v = v * 10 + digit;
  }
  out = v;
  return true;
}

}  // namespace detail

/// Without a "duration_ps" metadata line the duration is the last timestamp.
inline PhotonStream decode(std::string_view text) {
  using detail::parse_u64;
  using detail::trim;
  PhotonStream stream;
  bool have_duration = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string_view line = trim(text.substr(pos, eol - pos));
    const std::size_t line_start = pos;
    pos = eol + 1;
    if (line.empty()) continue;

    if (line.front() == '#') {
      const auto body = trim(line.substr(1));
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) continue;  // plain comment
      const std::string key(trim(body.substr(0, eq)));
      const auto value = trim(body.substr(eq + 1));
      if (key == "rep_period_ps" || key == "duration_ps") {
        std::uint64_t v = 0;
        if (!parse_u64(value, v)) throw FormatError("bad value for " + key, line_start);
        (key == "rep_period_ps" ? stream.rep_period_ps : stream.duration_ps) = v;
        have_duration = have_duration || key == "duration_ps";
      } else {
        stream.meta[key] = std::string(value);
      }
      continue;
    }

    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw FormatError("expected channel<TAB>t_abs_ps", line_start);
    std::uint64_t channel = 0;
    std::uint64_t t = 0;
    if (!parse_u64(trim(line.substr(0, tab)), channel) || !parse_u64(trim(line.substr(tab + 1)), t))
      throw FormatError("non-numeric record field", line_start);
    if (channel >= kMaxChannels)
      throw ValidationError("unknown channel " + std::to_string(channel), stream.records.size());
    stream.records.push_back({static_cast<std::uint8_t>(channel), t});
  }
  if (!have_duration)
    for (const auto& r : stream.records) stream.duration_ps = std::max(stream.duration_ps, r.t_abs);
  validate(stream);
  return stream;
}

}  // namespace tsv

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline PhotonStream read_stream(const std::filesystem::path& path, StreamFormat format) {
  const std::string bytes = read_file(path);
  return format == StreamFormat::binary ? psph::decode(bytes) : tsv::decode(bytes);
}

inline PhotonStream read_stream(const std::filesystem::path& path) {
  return read_stream(path, format_from_path(path));
}

inline void write_stream(const PhotonStream& stream, const std::filesystem::path& path,
                         StreamFormat format) {
  validate(stream);
  write_file(path, format == StreamFormat::binary ? psph::encode(stream) : tsv::encode(stream));
}

inline void write_stream(const PhotonStream& stream, const std::filesystem::path& path) {
  write_stream(stream, path, format_from_path(path));
}

}  // namespace photonstat
