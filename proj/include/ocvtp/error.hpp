// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ocvtp {

/// Broad failure classes; the CLI maps them onto exit codes.
enum class ErrorKind {
  kConfig,     // bad flags, invalid specs, impossible requests
  kShape,      // mismatched matrix shapes
  kBounds,     // index out of range
  kValidation, // data violating a type invariant
  kFormat,     // malformed or wrong-version file
  kStorage,    // filesystem failure
  kCapacity,   // input larger than a model can hold
  kNumerical,  // non-finite intermediate or diverged training
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define OCVTP_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

OCVTP_DEFINE_ERROR(ConfigError, kConfig)
OCVTP_DEFINE_ERROR(ShapeError, kShape)
OCVTP_DEFINE_ERROR(BoundsError, kBounds)
OCVTP_DEFINE_ERROR(ValidationError, kValidation)
OCVTP_DEFINE_ERROR(FormatError, kFormat)
OCVTP_DEFINE_ERROR(StorageError, kStorage)
OCVTP_DEFINE_ERROR(CapacityError, kCapacity)
OCVTP_DEFINE_ERROR(NumericalError, kNumerical)

#undef OCVTP_DEFINE_ERROR

}  // namespace ocvtp
