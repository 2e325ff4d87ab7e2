#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace tbsim {

// Violated precondition or shape contract inside the library.
struct ContractViolation : std::logic_error {
  explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// Malformed input file (scenario, rollout, config, checkpoint).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (diverged loss etc.).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void check_failed(const char* expr, const char* file, int line, const std::string& msg) {
  std::ostringstream os;
  os << file << ":" << line << ": contract violation (" << expr << ")";
  if (!msg.empty()) os << ": " << msg;
  throw ContractViolation(os.str());
}
}  // namespace detail

}  // namespace tbsim

#define TBSIM_CHECK(cond, msg)                                             \
  do {                                                                     \
    if (!(cond)) ::tbsim::detail::check_failed(#cond, __FILE__, __LINE__, (msg)); \
  } while (0)
