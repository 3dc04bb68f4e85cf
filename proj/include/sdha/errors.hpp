#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sdha {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidParameter : Error {
  using Error::Error;
};

struct UnsupportedConfiguration : Error {
  using Error::Error;
};

struct SingularMatrix : Error {
  using Error::Error;
};

// error below the floor where a log-log fit means anything
struct PrecisionFloor : Error {
  using Error::Error;
};

struct QuadratureError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct SolverFailure : Error {
  SolverFailure(const std::string& what, std::vector<double> last, double norm, int iters)
      : Error(what), last_iterate(std::move(last)), residual_norm(norm), iterations(iters) {}
  std::vector<double> last_iterate;
  double residual_norm;
  int iterations;
};

}  // namespace sdha
