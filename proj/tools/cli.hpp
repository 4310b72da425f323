// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "softlockstep/core.hpp"
#include "softlockstep/error.hpp"

namespace softlockstep::cli {

// Process exit codes. Verdicts map 1:1; setup errors start at 64
// (sysexits.h numbering).
enum ExitCode : int {
  kExitMatch = 0,
  kExitCounterexample = 1,  // simulate only
  kExitMismatch = 2,
  kExitReplicaFailure = 3,
  kExitTimeout = 4,
  kExitDiversityLoss = 5,
  kExitUsage = 64,
  kExitDataError = 65,
  kExitCounterUnavailable = 69,
  kExitSetupFailure = 70,
  kExitIoError = 74,
};

int exit_code_for(const Verdict& verdict);
int exit_code_for(ErrorCode code);

// Entry point shared by the binary and the tests. `args` excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace softlockstep::cli
