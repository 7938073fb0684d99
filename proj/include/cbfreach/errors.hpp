// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cbfreach {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The safety-filter QP has no primal-feasible point.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Every candidate active set is rank deficient, or a constraint row has a
/// vanishing normal with a positive right-hand side.
class DegenerateConstraintsError : public Error {
 public:
  using Error::Error;
};

/// Lower and upper tube bounds crossed during integration.
class OrderViolation : public Error {
 public:
  OrderViolation(const std::string& what, std::size_t step, std::size_t coord)
      : Error(what), step_(step), coord_(coord) {}
  std::size_t step() const { return step_; }
  std::size_t coord() const { return coord_; }

 private:
  std::size_t step_;
  std::size_t coord_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Radius profile overflowed; the closeness bound is unusable.
class DivergentProfile : public Error {
 public:
  using Error::Error;
};

}  // namespace cbfreach
