#pragma once

#include <cstdio>
#include <string>

namespace cream {

// 17 significant digits: enough for binary64 round-trip fidelity.
inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace cream
