// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "softlockstep/core.hpp"

namespace softlockstep {

// Corrupts one bit of the target's output region after it terminates.
struct BitFlip {
  std::size_t output_index = 0;
  std::size_t byte_offset = 0;
  unsigned bit_index = 0;
  friend bool operator==(const BitFlip&, const BitFlip&) = default;
};

// Stops the target out-of-band for `duration`. It fires at the first check
// that finds the trail running, since a stall while the trail is held back
// exercises nothing.
struct Freeze {
  std::chrono::microseconds duration{0};
  friend bool operator==(const Freeze&, const Freeze&) = default;
};

// Kills the target at the first check where its count has reached
// `after_instructions` (so the crash point is approximate).
struct Crash {
  InstructionCount after_instructions = 0;
  friend bool operator==(const Crash&, const Crash&) = default;
};

struct FaultSpec {
  Role target = Role::kTrail;
  std::variant<BitFlip, Freeze, Crash> kind;
  std::uint64_t seed = 0;
  friend bool operator==(const FaultSpec&, const FaultSpec&) = default;
};

// CLI spelling: "bitflip:<role>:<output>:<byte>:<bit>",
// "freeze:<role>:<duration>" (duration suffix us, ms or s) and
// "crash:<role>[:<instructions>]".
FaultSpec parse_fault(std::string_view text);
std::string to_string(const FaultSpec& fault);

}  // namespace softlockstep
