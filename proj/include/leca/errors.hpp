#pragma once

#include <stdexcept>
#include <string>

namespace leca {

/// Non-positive or out-of-domain quantity handed to a market function.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Reference equilibria or calibration searches could not be located.
class CalibrationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// The extortion equation has no real root for the given rival quantity.
class NoRealResponse : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A response root exists but lies outside the algorithm's quantity interval.
class OutOfBounds : public std::out_of_range {
public:
  OutOfBounds(const std::string& what, double raw_root)
      : std::out_of_range(what), raw_root_(raw_root) {}

  double raw_root() const noexcept { return raw_root_; }

private:
  double raw_root_;
};

class Unsupported : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Configuration, override or input file failed validation.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class SessionClosed : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A decision that does not consume a round (e.g. quantity outside the slider range).
class RejectedDecision : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class NotFound : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace leca
