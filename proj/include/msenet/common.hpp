#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace msenet {

// Thrown when a caller violates an operation's contract (bad shapes, bad
// arguments, double backward, ...). The CLI maps this to exit code 1.
class contract_error : public std::runtime_error {
 public:
  explicit contract_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown on filesystem / parse failures. The CLI maps this to exit code 2.
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline void format_into(std::ostringstream&) {}

template <class T, class... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}

template <class... Args>
std::string format_msg(const Args&... args) {
  std::ostringstream os;
  format_into(os, args...);
  return os.str();
}

}  // namespace detail

template <class... Args>
[[noreturn]] void fail_contract(const Args&... args) {
  throw contract_error(detail::format_msg(args...));
}

template <class... Args>
[[noreturn]] void fail_io(const Args&... args) {
  throw io_error(detail::format_msg(args...));
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

}  // namespace msenet

// Builds the failure message lazily; hot paths pay only for the branch.
#define MSENET_REQUIRE(cond, ...)                \
  do {                                           \
    if (!(cond)) ::msenet::fail_contract(__VA_ARGS__); \
  } while (0)
