// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

// Discrete-time model of the staggering protocol.
//
// Time advances in ticks. In each tick a running replica consumes the next
// entry of its delta stream; a suspended one does not. Every period_ticks
// the monitor samples and acts exactly as enforcement_loop does. A Suspend
// decided at tick k freezes the trail from tick k + latency + 1 onward.
// Unlike the sampled trace, the model also records staggering after every
// tick while the head is alive, so minima between checks are visible.
//
// If the trail never retires more than r_max per tick, a threshold of
// r_max * (period_ticks + suspend_latency_ticks) keeps staggering >= 0:
// after any check that leaves the trail running the gap is >= threshold,
// the trail can close at most r_max * period_ticks of it before the next
// check, and at most r_max * latency more before the stop takes effect.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "softlockstep/core.hpp"
#include "softlockstep/monitor.hpp"
#include "softlockstep/progress.hpp"

namespace softlockstep::sim {

struct Schedule {
  std::uint64_t ticks = 0;  // horizon
  std::vector<InstructionCount> head_deltas;
  std::vector<InstructionCount> trail_deltas;
  std::uint64_t period_ticks = 1;
  std::uint64_t suspend_latency_ticks = 0;
  std::optional<InstructionCount> head_length;
  std::optional<InstructionCount> trail_length;

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

struct SimTrace {
  Trace trace;  // sampled instants, same shape as the monitor's trace
  // head - trail after each tick during which the head was alive.
  std::vector<Staggering> instants;
};

// Throws Error(kInvalidArgument) if period_ticks == 0.
SimTrace simulate(const Schedule& schedule, InstructionCount threshold,
                  DiversityLossPolicy policy =
                      DiversityLossPolicy::kRecordAndContinue);

// Minimum over modeled instants (not just samples). Throws
// Error(kEmptyTrace) when nothing was modeled.
Staggering min_staggering(const SimTrace& trace);
// Minimum over sampled staggering values.
Staggering min_staggering(const Trace& trace);
Staggering min_staggering(std::span<const Staggering> values);

struct SafetyResult {
  bool safe = true;
  std::optional<Schedule> counterexample;
  std::optional<Staggering> counterexample_min;
  std::uint64_t schedules_checked = 0;
};

inline constexpr std::uint64_t kDefaultSearchLimit = 10'000'000;

// Enumerates every head and trail stream of length `ticks` over `alphabet`
// and returns the first schedule whose minimum staggering is negative.
// Throws Error(kSearchSpaceTooLarge) if |alphabet|^(2*ticks) > limit.
SafetyResult exhaustive_check(std::span<const InstructionCount> alphabet,
                              std::uint64_t ticks, std::uint64_t period_ticks,
                              std::uint64_t latency_ticks,
                              InstructionCount threshold,
                              std::uint64_t limit = kDefaultSearchLimit);

// Schedule <-> scripted scenario (streams, latency and lengths carry over;
// the period is a monitor setting and tick length is 1 us).
ScriptedScenario to_scenario(const Schedule& schedule);
Schedule from_scenario(const ScriptedScenario& scenario,
                       std::uint64_t period_ticks, std::uint64_t horizon);

// Counterexample CSV (`tick,head_delta,trail_delta`).
void write_schedule(std::ostream& out, const Schedule& schedule);

}  // namespace softlockstep::sim
