#pragma once

#include <stdexcept>
#include <string>

namespace swp {

// Failure classes map 1:1 onto the CLI / C API status codes.
enum class ErrorKind {
  Config = 1,      // bad config file, bad arguments, mismatched checkpoint
  Diverged = 2,    // non-finite loss during training
  Io = 3,          // filesystem problems
  Infeasible = 4,  // budget below the feasible floor
  Shape = 5,       // internal shape/contract violation
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace swp
