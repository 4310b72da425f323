// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

// Shared domain types and the staggering arithmetic.
//
// Staggering is the head replica's retired-instruction count minus the
// trail's. The monitor keeps it at or above a threshold by suspending the
// trail whenever it falls below, and resuming it once the gap is restored.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace softlockstep {

using InstructionCount = std::uint64_t;
using Staggering = std::int64_t;

enum class Role { kHead, kTrail };
std::string_view to_string(Role role);

enum class StartupPolicy { kTrailSuspendedUntilThreshold };
enum class DiversityLossPolicy { kRecordAndContinue, kAbortRun };

// Logical core index used for affinity pinning.
struct CoreId {
  int value = 0;
  friend bool operator==(CoreId, CoreId) = default;
};

struct MonitorConfig {
  InstructionCount threshold_instructions = 0;  // no default, see calibration
  std::chrono::microseconds check_period{1000};
  StartupPolicy startup_policy = StartupPolicy::kTrailSuspendedUntilThreshold;
  DiversityLossPolicy diversity_loss_policy =
      DiversityLossPolicy::kRecordAndContinue;
  std::optional<std::chrono::microseconds> run_timeout;
  std::optional<CoreId> head_core;
  std::optional<CoreId> trail_core;
  std::optional<CoreId> monitor_core;
};

// Returns one message per violated invariant; empty means valid.
std::vector<std::string> validate_config(const MonitorConfig& config);

struct InputItem {
  std::span<const std::byte> data;
  std::size_t length = 0;  // declared length, must equal data.size()
};

// The unit of replication: what goes into each replica and how large each
// output region is.
struct PayloadSpec {
  std::vector<InputItem> inputs;
  std::vector<std::size_t> output_sizes;
};

std::vector<std::string> validate_payload(const PayloadSpec& payload);

enum class Action {
  kNone,
  kSuspend,
  kResume,
  kHeadDone,
  kTrailDone,
  kDiversityLoss,
};

// Trace CSV spelling, e.g. "HEAD_DONE".
std::string_view to_string(Action action);
std::optional<Action> parse_action(std::string_view text);

struct StaggeringSample {
  std::uint64_t interval_index = 0;
  std::int64_t timestamp_ns = 0;
  InstructionCount head_count = 0;
  InstructionCount trail_count = 0;
  Staggering staggering = 0;
  Action action = Action::kNone;

  friend bool operator==(const StaggeringSample&,
                         const StaggeringSample&) = default;
};

enum class ReplicaFailureCause { kCrash, kNonzeroExit };

struct Match {
  friend bool operator==(const Match&, const Match&) = default;
};

struct MismatchLocation {
  std::size_t output_index = 0;
  std::size_t byte_offset = 0;
  friend bool operator==(const MismatchLocation&,
                         const MismatchLocation&) = default;
};

struct Mismatch {
  std::vector<MismatchLocation> locations;  // never empty
  friend bool operator==(const Mismatch&, const Mismatch&) = default;
};

struct ReplicaFailure {
  Role role = Role::kHead;
  ReplicaFailureCause cause = ReplicaFailureCause::kCrash;
  friend bool operator==(const ReplicaFailure&,
                         const ReplicaFailure&) = default;
};

struct DiversityLoss {
  StaggeringSample sample;
  friend bool operator==(const DiversityLoss&, const DiversityLoss&) = default;
};

struct Timeout {
  friend bool operator==(const Timeout&, const Timeout&) = default;
};

using Verdict = std::variant<Match, Mismatch, ReplicaFailure, DiversityLoss,
                             Timeout>;

std::string describe(const Verdict& verdict);

// head_count - trail_count as a signed value. Throws Error(kOverflow) when
// the difference is not representable in 64 signed bits.
Staggering staggering(InstructionCount head_count,
                      InstructionCount trail_count);

enum class TrailState { kRunning, kSuspended };

// Suspend when below threshold (strictly) and running; resume when at or
// above threshold and suspended; otherwise nothing.
Action decide(Staggering staggering, InstructionCount threshold,
              TrailState trail_state);

}  // namespace softlockstep
