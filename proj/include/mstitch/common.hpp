#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>

namespace mstitch {

#ifdef MSTITCH_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

/// Tensor shapes disagree with what an operation requires.
class DimensionError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition (bad step, empty set, ...).
class ContractError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration values.
class ConfigError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed or unsupported input file.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Keeps the first exception thrown by an OpenMP loop body so it can be
/// rethrown once the loop is over (exceptions must not leave the region).
class FirstException {
 public:
  template <class F>
  void run(F&& body) noexcept {
    try {
      body();
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!error_) error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mutex_;
  std::exception_ptr error_;
};

}  // namespace mstitch
