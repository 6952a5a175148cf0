#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ganpr {

// All library errors are reported through this type so callers can
// distinguish contract violations from std:: failures.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void msg_append(std::ostringstream&) {}
template <typename T, typename... Rest>
void msg_append(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    msg_append(os, rest...);
}
}  // namespace detail

template <typename... Parts>
std::string strcat_msg(const Parts&... parts) {
    std::ostringstream os;
    os.precision(17);
    detail::msg_append(os, parts...);
    return os.str();
}

template <typename... Parts>
[[noreturn]] void fail(const Parts&... parts) {
    throw Error(strcat_msg(parts...));
}

template <typename... Parts>
void check(bool cond, const Parts&... parts) {
    if (!cond) fail(parts...);
}

inline bool is_finite(double v) { return std::isfinite(v); }

}  // namespace ganpr
