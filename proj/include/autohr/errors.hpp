#pragma once

#include <stdexcept>
#include <string>

namespace autohr {

// One exception type per failure mode so callers can discriminate without
// parsing messages.

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValueError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidBandError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// estimate_hr on a spectrum with no mass anywhere in the band.
struct NoPeakError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A signal (or channel) whose variance is zero where a correlation or a
// normalization divides by it.
struct DegenerateVarianceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidLabelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TooShortError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optimization step saw a non-finite loss; carries the offending value.
struct AbortStepError : std::runtime_error {
  double loss;
  AbortStepError(const std::string& msg, double loss_value)
      : std::runtime_error(msg), loss(loss_value) {}
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace autohr
