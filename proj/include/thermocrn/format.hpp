#pragma once

#include <cstdio>
#include <string>

namespace thermocrn {

/// Formats a double with 17 significant digits so that re-parsing
/// reproduces the value bit for bit.
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace thermocrn
