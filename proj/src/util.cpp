#include "zefoz/util.hpp"

#include <cstdio>

namespace zefoz {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace zefoz
