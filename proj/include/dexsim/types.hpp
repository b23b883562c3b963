#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dexsim {

using cplx = std::complex<double>;

inline constexpr int kDim = 7;

using Mat7 = Eigen::Matrix<cplx, kDim, kDim>;
using Vec7 = Eigen::Matrix<cplx, kDim, 1>;

inline constexpr double kPi = 3.14159265358979323846;

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid physical parameters, pulse definitions or sequences.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during time evolution (step underflow, norm underflow,
/// invariant violation).
class SimulationError : public Error {
 public:
  using Error::Error;
};

/// Fitting failure that cannot be reported through FitResult::converged.
class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace dexsim
