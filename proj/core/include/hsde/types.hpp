#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace hsde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// std::visit helper.
template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

/// Numerical failure that is not a caller mistake (degenerate filter,
/// incompatible bin size, divergent optimizer). Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Orderliness cannot be enforced: the bin width swallows the waiting-time
/// distribution.
class IncompatibleBinSize : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateFilterError : public NumericalError {
 public:
  DegenerateFilterError(int step, const std::string& what)
      : NumericalError(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace hsde
