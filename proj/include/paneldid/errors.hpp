#pragma once

#include <stdexcept>
#include <string>

namespace paneldid {

// Malformed inputs: bad files, specs referencing unknown variables, violated
// preconditions. The CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Estimation failures: rank deficiency, separation, non-convergence,
// degenerate samples. The CLI maps this to exit code 3.
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace paneldid
