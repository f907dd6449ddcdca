// Copyright 2026 The fedbat Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDBAT_ERRORS_HPP
#define FEDBAT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fedbat {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or length mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid argument value (negative sigma, zero vector where forbidden, ...).
struct ArgumentError : Error {
  using Error::Error;
};

// Violation of a call contract (stale cache, mismatched record, missing state).
struct ContractError : Error {
  using Error::Error;
};

// Malformed serialized payload or file.
struct FormatError : Error {
  using Error::Error;
};

// Invalid or incomplete run configuration. Carries the offending field name.
struct ConfigError : Error {
  explicit ConfigError(const std::string& field, const std::string& what)
      : Error("config field '" + field + "': " + what), field(field) {}
  std::string field;
};

}  // namespace fedbat

#endif  // FEDBAT_ERRORS_HPP
