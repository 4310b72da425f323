// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include "softlockstep/sim.hpp"

#include <algorithm>
#include <limits>
#include <ostream>

#include "softlockstep/error.hpp"

namespace softlockstep::sim {

namespace {

struct Stream {
  std::span<const InstructionCount> deltas;
  std::optional<InstructionCount> length;
  std::size_t next = 0;
  InstructionCount count = 0;
  bool done = false;

  void settle() {
    if (next >= deltas.size() || (length && count >= *length)) done = true;
  }
  void step() {
    count += deltas[next++];
    if (length) count = std::min(count, *length);
    settle();
  }
};

// Core of the model. `on_instant` sees staggering after each tick in which
// the head was alive; `on_sample` sees every monitor sample. Either may
// return false to stop early.
template <typename OnInstant, typename OnSample>
void run_model(const Schedule& s, InstructionCount threshold,
               DiversityLossPolicy policy, OnInstant&& on_instant,
               OnSample&& on_sample) {
  Stream head{s.head_deltas, s.head_length};
  Stream trail{s.trail_deltas, s.trail_length};
  head.settle();
  trail.settle();

  bool trail_logically_running = false;
  // While `frozen`, the trail consumes only ticks <= frozen_after. It
  // starts frozen.
  bool frozen = true;
  std::uint64_t frozen_after = 0;
  bool head_reported = false;
  bool trail_reported = false;
  std::uint64_t interval = 0;

  for (std::uint64_t tick = 1; tick <= s.ticks; ++tick) {
    const bool head_alive = !head.done;
    if (!head.done) head.step();
    if (!trail.done && !(frozen && tick > frozen_after)) trail.step();
    const Staggering now = staggering(head.count, trail.count);
    if (head_alive && !on_instant(now)) return;

    if (tick % s.period_ticks != 0) continue;

    StaggeringSample sample{.interval_index = ++interval,
                            .timestamp_ns = static_cast<std::int64_t>(tick) * 1000,
                            .head_count = head.count,
                            .trail_count = trail.count,
                            .staggering = now,
                            .action = Action::kNone};
    bool stop = false;
    if (!head_reported && head.done) {
      head_reported = true;
      sample.action = Action::kHeadDone;
      trail_logically_running = true;
      frozen = false;
    } else if (!trail_reported && trail.done) {
      trail_reported = true;
      sample.action = Action::kTrailDone;
    } else if (head_reported || trail_reported) {
      // released; nothing to enforce
    } else if (now < 0) {
      sample.action = Action::kDiversityLoss;
      if (trail_logically_running) {
        trail_logically_running = false;
        frozen = true;
        frozen_after = tick + s.suspend_latency_ticks;
      }
      stop = policy == DiversityLossPolicy::kAbortRun;
    } else {
      const bool below = static_cast<InstructionCount>(now) < threshold;
      if (below && trail_logically_running) {
        sample.action = Action::kSuspend;
        trail_logically_running = false;
        frozen = true;
        frozen_after = tick + s.suspend_latency_ticks;
      } else if (!below && !trail_logically_running) {
        sample.action = Action::kResume;
        trail_logically_running = true;
        frozen = false;
      }
    }
    if (!on_sample(sample)) return;
    if (stop || (head_reported && trail_reported)) return;
  }
}

}  // namespace

SimTrace simulate(const Schedule& schedule, InstructionCount threshold,
                  DiversityLossPolicy policy) {
  if (schedule.period_ticks == 0) {
    throw Error(ErrorCode::kInvalidArgument, "period_ticks must be >= 1");
  }
  SimTrace out;
  out.trace.metadata.backend = "sim";
  out.trace.metadata.config.threshold_instructions = threshold;
  out.trace.metadata.config.check_period =
      std::chrono::microseconds(schedule.period_ticks);
  out.trace.metadata.config.diversity_loss_policy = policy;
  run_model(
      schedule, threshold, policy,
      [&](Staggering s) {
        out.instants.push_back(s);
        return true;
      },
      [&](const StaggeringSample& sample) {
        out.trace.samples.push_back(sample);
        return true;
      });
  return out;
}

Staggering min_staggering(std::span<const Staggering> values) {
  if (values.empty()) {
    throw Error(ErrorCode::kEmptyTrace, "no staggering values to minimise");
  }
  return *std::min_element(values.begin(), values.end());
}

Staggering min_staggering(const SimTrace& trace) {
  return min_staggering(std::span<const Staggering>(trace.instants));
}

Staggering min_staggering(const Trace& trace) {
  std::vector<Staggering> values;
  values.reserve(trace.samples.size());
  for (const auto& s : trace.samples) values.push_back(s.staggering);
  return min_staggering(std::span<const Staggering>(values));
}

SafetyResult exhaustive_check(std::span<const InstructionCount> alphabet,
                              std::uint64_t ticks, std::uint64_t period_ticks,
                              std::uint64_t latency_ticks,
                              InstructionCount threshold, std::uint64_t limit) {
  if (alphabet.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "alphabet must not be empty");
  }
  if (period_ticks == 0) {
    throw Error(ErrorCode::kInvalidArgument, "period_ticks must be >= 1");
  }
  // |alphabet|^ticks per replica, squared; guard each multiplication.
  std::uint64_t per_replica = 1;
  std::uint64_t total = 1;
  for (std::uint64_t i = 0; i < ticks; ++i) {
    if (per_replica > limit / alphabet.size()) {
      throw Error(ErrorCode::kSearchSpaceTooLarge,
                  "search space exceeds " + std::to_string(limit));
    }
    per_replica *= alphabet.size();
  }
  if (per_replica != 0 && per_replica > limit / per_replica) {
    throw Error(ErrorCode::kSearchSpaceTooLarge,
                "search space exceeds " + std::to_string(limit));
  }
  total = per_replica * per_replica;

  Schedule schedule;
  schedule.ticks = ticks;
  schedule.period_ticks = period_ticks;
  schedule.suspend_latency_ticks = latency_ticks;
  schedule.head_deltas.assign(ticks, alphabet[0]);
  schedule.trail_deltas.assign(ticks, alphabet[0]);
  std::vector<std::size_t> head_digits(ticks, 0);
  std::vector<std::size_t> trail_digits(ticks, 0);

  auto increment = [&](std::vector<std::size_t>& digits,
                       std::vector<InstructionCount>& deltas) {
    for (std::size_t i = digits.size(); i-- > 0;) {
      if (++digits[i] < alphabet.size()) {
        deltas[i] = alphabet[digits[i]];
        return true;
      }
      digits[i] = 0;
      deltas[i] = alphabet[0];
    }
    return false;
  };

  SafetyResult result;
  for (std::uint64_t n = 0; n < total; ++n) {
    Staggering minimum = std::numeric_limits<Staggering>::max();
    run_model(
        schedule, threshold, DiversityLossPolicy::kRecordAndContinue,
        [&](Staggering s) {
          minimum = std::min(minimum, s);
          return minimum >= 0;
        },
        [](const StaggeringSample&) { return true; });
    ++result.schedules_checked;
    if (minimum < 0) {
      result.safe = false;
      result.counterexample = schedule;
      result.counterexample_min = minimum;
      return result;
    }
    if (!increment(trail_digits, schedule.trail_deltas)) {
      increment(head_digits, schedule.head_deltas);
    }
  }
  return result;
}

ScriptedScenario to_scenario(const Schedule& schedule) {
  return ScriptedScenario{.head_deltas = schedule.head_deltas,
                          .trail_deltas = schedule.trail_deltas,
                          .head_length = schedule.head_length,
                          .trail_length = schedule.trail_length,
                          .suspend_latency_ticks =
                              schedule.suspend_latency_ticks,
                          .tick_us = 1};
}

Schedule from_scenario(const ScriptedScenario& scenario,
                       std::uint64_t period_ticks, std::uint64_t horizon) {
  return Schedule{.ticks = horizon,
                  .head_deltas = scenario.head_deltas,
                  .trail_deltas = scenario.trail_deltas,
                  .period_ticks = period_ticks,
                  .suspend_latency_ticks = scenario.suspend_latency_ticks,
                  .head_length = scenario.head_length,
                  .trail_length = scenario.trail_length};
}

void write_schedule(std::ostream& out, const Schedule& schedule) {
  write_scenario(out, to_scenario(schedule));
}

}  // namespace softlockstep::sim
