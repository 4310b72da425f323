// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace softlockstep {

enum class ErrorCode {
  kInvalidArgument,
  kOverflow,
  kCounterUnavailable,
  kStaleHandle,
  kSpawnFailure,
  kPinningFailure,
  kReplicaFailure,
  kIncomplete,
  kShapeMismatch,
  kInvalidCoordinates,
  kEmptyTrace,
  kSearchSpaceTooLarge,
  kParseError,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// All recoverable failures in the library surface as this exception type.
// The code is stable and is what callers (and the CLI exit-code mapping)
// dispatch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace softlockstep
