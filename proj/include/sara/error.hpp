#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sara {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// SVD did not converge; carries the offending shape.
class SvdError : public Error {
 public:
  SvdError(std::ptrdiff_t rows, std::ptrdiff_t cols)
      : Error("svd failed to converge on " + std::to_string(rows) + "x" + std::to_string(cols) +
              " matrix"),
        rows_(rows),
        cols_(cols) {}

  std::ptrdiff_t rows() const noexcept { return rows_; }
  std::ptrdiff_t cols() const noexcept { return cols_; }

 private:
  std::ptrdiff_t rows_;
  std::ptrdiff_t cols_;
};

/// QR input did not have full column rank.
class RankDeficientError : public Error {
 public:
  explicit RankDeficientError(std::ptrdiff_t column)
      : Error("rank-deficient input: column " + std::to_string(column) +
              " is linearly dependent on the preceding columns"),
        column_(column) {}

  std::ptrdiff_t column() const noexcept { return column_; }

 private:
  std::ptrdiff_t column_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sara
