// Copyright 2026 The trigen-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace trigen {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the domain an operation accepts (LUT ranges, representable values).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes or dtypes that an opcode cannot consume.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// No tile plan fits the on-chip buffer.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class SramOverflowError : public Error {
 public:
  using Error::Error;
};

class DeadlockError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace trigen
