#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

namespace plmpc::csv {

/// Shortest round-trippable decimal form; identical inputs give identical text.
inline std::string num(double v)
{
  if (std::isnan(v)) { return "nan"; }
  if (std::isinf(v)) { return v > 0 ? "inf" : "-inf"; }
  char buf[32];
  for (int prec = 15; prec < 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) { return buf; }
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace plmpc::csv
