#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace gfdm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Raised on every documented contract violation. The message carries enough
// context (point index, file line, ...) to locate the offending input.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gfdm
