#pragma once

#include <cstdio>
#include <string>

namespace momentum::detail {

/// Real with 9 significant digits, the precision used by every CSV output.
inline std::string real9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace momentum::detail
