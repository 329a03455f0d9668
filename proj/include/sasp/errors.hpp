/*
 * sasp: cycle-level systolic array simulator with structured tile pruning
 *
 * This software is distributed under the terms of the Apache License 2.0.
 * See LICENSE file for details.
 */

#ifndef SASP_ERRORS_HPP_
#define SASP_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace sasp {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or tile-grid mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Numeric domain violation: NaN/infinity/subnormal operand, rate outside
// [0,1], zero reference norm and the like.
class ValueError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A prune mask marked a tile as skippable but the weight region is not
// all-zero. Skipping it would silently change results, so this is fatal.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Ill-formed instruction sequence fed to the array model.
class ProgramError : public Error {
 public:
  using Error::Error;
};

}  // namespace sasp

#endif  // SASP_ERRORS_HPP_
