#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gms/metric.hpp"

namespace gms {

/// Shortest round-trip decimal ("%.17g"); NaN and absent values print empty.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_double(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

/// Quotes a CSV field when it contains a separator, quote or newline.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// FNV-1a, 64 bit.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Grid field as CSV: a comment line describing the grid, then one
/// "ix,iy,x,y,value" line per node in row-major order.
inline void write_field_csv(std::ostream& os, const GridSpec& g, const std::vector<double>& values) {
  if (values.size() != g.size()) throw ShapeError("field size does not match grid");
  os << "# grid x0=" << format_double(g.x0) << " x1=" << format_double(g.x1) << " y0=" << format_double(g.y0)
     << " y1=" << format_double(g.y1) << " nx=" << g.nx << " ny=" << g.ny << " order=row-major(ix*ny+iy)\n";
  os << "ix,iy,x,y,value\n";
  for (std::size_t ix = 0; ix < g.nx; ++ix)
    for (std::size_t iy = 0; iy < g.ny; ++iy)
      os << ix << ',' << iy << ',' << format_double(g.x_center(ix)) << ',' << format_double(g.y_center(iy)) << ','
         << format_double(values[g.index(ix, iy)]) << '\n';
}

}  // namespace gms
