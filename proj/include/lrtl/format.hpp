#pragma once

#include <cstdio>
#include <string>

namespace lrtl {

/// Nine significant digits, as used in every CSV and JSON export.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace lrtl
