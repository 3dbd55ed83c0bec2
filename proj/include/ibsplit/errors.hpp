#pragma once

#include <stdexcept>
#include <string>

namespace ibsplit {

// A field carried NaN/Inf, or exceeded the blow-up cap.
class BlownUpFieldError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GridMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The mean of a field is too large for a periodic antiderivative to exist.
class NonzeroMeanError : public std::domain_error {
 public:
  NonzeroMeanError(const std::string& what, double mean)
      : std::domain_error(what), mean_(mean) {}
  double mean() const noexcept { return mean_; }

 private:
  double mean_;
};

// A time integration aborted because the state left the finite regime.
class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(const std::string& what, double time)
      : std::runtime_error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

// E_s^2 came out negative: the state is outside the small-epsilon regime.
class RegimeViolationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Snapshot file or sidecar is malformed, truncated, or fails its checksum.
class SnapshotFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ibsplit
