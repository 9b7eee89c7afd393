#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace drhmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A set of observations, one d_y-dimensional observation per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// A single observation (a row of Points).
using PointRef = Eigen::Ref<const Eigen::RowVectorXd>;

/// State indices are zero-based inside the library; files use 1-based states.
using StateSequence = std::vector<int>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument value (grid empty, non-positive bandwidth, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Training data does not support the request (missing class, unlabeled sequence).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Dimension or shape mismatch between inputs.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (CSV or model JSON).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Solver failure or non-finite intermediate values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

inline void require_shape(bool condition, const std::string& message) {
  if (!condition) throw ShapeError(message);
}

}  // namespace detail

}  // namespace drhmm
