#pragma once

// Locale-independent number formatting shared by the CSV/JSON/SVG writers.

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <system_error>

namespace nashevt::io {

/// Shortest decimal representation that round-trips (std::to_chars), with '.'
/// as decimal separator regardless of the global locale.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

/// Fixed-precision variant for human-facing output such as SVG labels.
inline std::string format_fixed(double v, int precision) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

}  // namespace nashevt::io
