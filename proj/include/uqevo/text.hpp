#pragma once

#include <cstdio>
#include <string>

namespace uqevo {

// 17 significant digits: enough for exact double roundtrip in reports.
inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace uqevo
