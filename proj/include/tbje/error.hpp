/* Copyright 2026 The TBJE Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <stdexcept>
#include <string>

namespace tbje {

// Base of every exception thrown by the library. The CLI maps subclasses to
// distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite values are required, or a diverging run.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid or mutually incompatible configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Unreadable/unwritable files and malformed on-disk formats.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace tbje
