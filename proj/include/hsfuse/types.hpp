#ifndef HSFUSE_TYPES_HPP
#define HSFUSE_TYPES_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace hsfuse {

// All training math runs in double precision; files store single precision.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

// Dimension mismatch between operands; message names both shapes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input outside a primitive's domain (e.g. log of a nonpositive value).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// API misuse (e.g. backward on a non-scalar).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Invalid configuration or input files; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value during training; the CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or truncated file payloads.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

inline std::string shape_str(const Mat& m) { return shape_str(m.rows(), m.cols()); }

}  // namespace hsfuse

#endif
