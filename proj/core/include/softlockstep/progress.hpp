// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

// Per-replica progress counting and suspension control.
//
// A ProgressSource answers "how many instructions has this replica retired"
// and can stop or continue a replica. The monitor loop is written against
// this interface only; the OS-backed implementation lives with the process
// session in replication.hpp, and ScriptedSource below is a deterministic
// discrete-time double used for protocol tests and the CLI test mode.

#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "softlockstep/core.hpp"

namespace softlockstep {

struct ReplicaHandle {
  std::uint64_t replica_id = 0;
  Role role = Role::kHead;
  // Process id for the OS backend, replica index for the scripted one.
  std::int64_t native_id = -1;

  friend bool operator==(const ReplicaHandle&, const ReplicaHandle&) = default;
};

enum class ExitKind { kSuccess, kNonzeroExit, kCrash };

struct ExitStatus {
  ExitKind kind = ExitKind::kSuccess;
  int detail = 0;  // exit code or terminating signal

  bool ok() const { return kind == ExitKind::kSuccess; }
  friend bool operator==(const ExitStatus&, const ExitStatus&) = default;
};

class ProgressSource {
 public:
  virtual ~ProgressSource() = default;

  // Cumulative retired instructions since spawn. Non-decreasing per handle.
  virtual InstructionCount read_count(const ReplicaHandle& handle) = 0;
  // Idempotent. After a backend-specific latency the replica retires no
  // further instructions until resumed.
  virtual void suspend(const ReplicaHandle& handle) = 0;
  virtual void resume(const ReplicaHandle& handle) = 0;
  // nullopt while the replica is still running (or stopped).
  virtual std::optional<ExitStatus> is_terminated(
      const ReplicaHandle& handle) = 0;
  // Fail-stop the replica. Used by fault injection.
  virtual void kill(const ReplicaHandle& handle) = 0;

  virtual std::string_view backend_name() const = 0;
};

// Time base for the monitor loop: real time for the OS backend, virtual
// ticks for the scripted one.
class Ticker {
 public:
  virtual ~Ticker() = default;
  virtual std::int64_t now_ns() = 0;
  virtual void wait(std::chrono::microseconds period) = 0;
};

class SteadyTicker final : public Ticker {
 public:
  std::int64_t now_ns() override;
  // Sleeps until the next multiple of `period` after the previous wake-up,
  // so loop overhead does not stretch the check interval.
  void wait(std::chrono::microseconds period) override;

 private:
  std::optional<std::chrono::steady_clock::time_point> next_wake_;
};

// Deterministic per-tick instruction streams for both replicas.
//
// Each replica consumes one delta per tick in which it is effectively
// running; a suspended replica does not consume its stream. A replica
// terminates successfully when its stream is exhausted or when its count
// reaches its optional length.
struct ScriptedScenario {
  std::vector<InstructionCount> head_deltas;
  std::vector<InstructionCount> trail_deltas;
  std::optional<InstructionCount> head_length;
  std::optional<InstructionCount> trail_length;
  std::uint64_t suspend_latency_ticks = 0;
  std::uint64_t tick_us = 1;

  friend bool operator==(const ScriptedScenario&,
                         const ScriptedScenario&) = default;
};

// Scenario CSV: header `tick,head_delta,trail_delta`, then one row per tick.
// An empty cell ends that replica's stream (only trailing empties allowed).
// Optional `# key=value` lines carry suspend_latency_ticks, tick_us,
// head_length and trail_length.
ScriptedScenario read_scenario(std::istream& in);
ScriptedScenario load_scenario(const std::string& path);
void write_scenario(std::ostream& out, const ScriptedScenario& scenario);

class ScriptedSource final : public ProgressSource, public Ticker {
 public:
  ScriptedSource() = default;
  explicit ScriptedSource(std::uint64_t tick_us) : tick_us_(tick_us) {}

  // Replicas start suspended when `start_suspended` is set; the suspension
  // is effective immediately regardless of latency.
  ReplicaHandle add_replica(Role role, std::vector<InstructionCount> deltas,
                            std::optional<InstructionCount> length = {},
                            std::uint64_t suspend_latency_ticks = 0,
                            bool start_suspended = false);

  // Creates head (running) and trail (suspended) from a scenario.
  static std::pair<ReplicaHandle, ReplicaHandle> populate(
      ScriptedSource& source, const ScriptedScenario& scenario);

  InstructionCount read_count(const ReplicaHandle& handle) override;
  void suspend(const ReplicaHandle& handle) override;
  void resume(const ReplicaHandle& handle) override;
  std::optional<ExitStatus> is_terminated(const ReplicaHandle& handle) override;
  void kill(const ReplicaHandle& handle) override;
  std::string_view backend_name() const override { return "scripted"; }

  std::int64_t now_ns() override;
  // Advances period / tick_us ticks (at least one).
  void wait(std::chrono::microseconds period) override;

  void advance(std::uint64_t ticks = 1);
  std::uint64_t current_tick() const { return tick_; }
  std::uint64_t tick_us() const { return tick_us_; }
  bool effectively_suspended(const ReplicaHandle& handle) const;

 private:
  struct Replica {
    Role role;
    std::vector<InstructionCount> deltas;
    std::optional<InstructionCount> length;
    std::uint64_t latency = 0;
    std::size_t next = 0;
    InstructionCount count = 0;
    // Tick after which the replica stops consuming its stream.
    std::optional<std::uint64_t> frozen_after;
    std::optional<ExitStatus> exit;
  };

  Replica& lookup(const ReplicaHandle& handle);
  const Replica& lookup(const ReplicaHandle& handle) const;
  static void finish_if_done(Replica& r);

  std::vector<Replica> replicas_;
  std::uint64_t tick_ = 0;
  std::uint64_t tick_us_ = 1;
};

}  // namespace softlockstep
