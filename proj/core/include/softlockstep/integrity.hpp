// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "softlockstep/core.hpp"
#include "softlockstep/fault.hpp"
#include "softlockstep/replication.hpp"

namespace softlockstep {

// Byte-exact comparison. Returns Match or a Mismatch holding the first
// differing offset of every differing output. Throws Error(kShapeMismatch)
// when either side disagrees with `sizes`.
Verdict compare_outputs(std::span<const std::vector<std::byte>> a,
                        std::span<const std::vector<std::byte>> b,
                        std::span<const std::size_t> sizes);

// Validates `fault` against the session's declared outputs and registers
// it. Throws Error(kInvalidCoordinates).
void inject_fault(ReplicaSession& session, const FaultSpec& fault);

}  // namespace softlockstep
