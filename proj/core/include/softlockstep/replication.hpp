// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

// Redundant execution of a wrapped computation.
//
// Each replica gets a private copy of every input and a private,
// zero-initialized region per output. The OS session forks two child
// processes of the current image; both stop themselves before entering the
// wrapper, the parent attaches counters, then continues only the head. The
// trail stays stopped until the monitor's first resume.

#pragma once

#include <sys/types.h>

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "softlockstep/core.hpp"
#include "softlockstep/fault.hpp"
#include "softlockstep/perf_counter.hpp"
#include "softlockstep/progress.hpp"

namespace softlockstep {

using ConstBuffer = std::span<const std::byte>;
using MutableBuffer = std::span<std::byte>;

// Wrapper contract: deterministic, single-threaded, reads only `inputs`,
// writes only `outputs`, spawns no processes. Returns false on failure.
using WrappedComputation = std::function<bool(
    std::span<const ConstBuffer> inputs, std::span<const MutableBuffer> outputs)>;

using OutputSet = std::vector<std::vector<std::byte>>;

// Runs the wrapper once in the calling process on fresh zeroed outputs.
// This is the unprotected reference execution.
OutputSet run_direct(const WrappedComputation& computation,
                     const PayloadSpec& payload);

class ReplicaSession {
 public:
  virtual ~ReplicaSession() = default;
  ReplicaSession(const ReplicaSession&) = delete;
  ReplicaSession& operator=(const ReplicaSession&) = delete;

  virtual const ReplicaHandle& head() const = 0;
  virtual const ReplicaHandle& trail() const = 0;
  virtual ProgressSource& progress() = 0;
  virtual Ticker& ticker() = 0;

  // Bitwise copies of the role's output regions. Requires the replica to
  // have terminated successfully: throws Error(kIncomplete) while running
  // and Error(kReplicaFailure) after a crash or nonzero exit.
  OutputSet collect_outputs(Role role);

  // Reaps both replicas (killing live ones) and frees their regions.
  // Idempotent; never throws.
  virtual void release() noexcept = 0;
  virtual bool released() const = 0;

  // Faults registered through inject_fault().
  void add_fault(const FaultSpec& fault) { faults_.push_back(fault); }
  std::span<const FaultSpec> faults() const { return faults_; }

  const std::vector<std::size_t>& output_sizes() const { return output_sizes_; }

 protected:
  explicit ReplicaSession(std::vector<std::size_t> output_sizes)
      : output_sizes_(std::move(output_sizes)) {}

  // Mutable views of the role's output regions, valid after successful
  // termination.
  virtual std::vector<MutableBuffer> output_regions(Role role) = 0;

 private:
  std::vector<std::size_t> output_sizes_;
  std::vector<FaultSpec> faults_;
  bool flipped_[2] = {false, false};
};

// OS-backed session: two forked processes with shared-memory regions, a
// perf_event counter each, and SIGSTOP/SIGCONT for suspension.
class ProcessSession final : public ReplicaSession, private ProgressSource {
 public:
  ~ProcessSession() override;

  const ReplicaHandle& head() const override { return handles_[0]; }
  const ReplicaHandle& trail() const override { return handles_[1]; }
  ProgressSource& progress() override { return *this; }
  Ticker& ticker() override { return ticker_; }
  void release() noexcept override;
  bool released() const override { return released_; }

  pid_t pid(Role role) const { return replicas_[index(role)].pid; }
  CounterEvent counter_event() const { return event_; }

 private:
  friend std::unique_ptr<ProcessSession> spawn_replicas(
      const WrappedComputation&, const PayloadSpec&, const MonitorConfig&,
      CounterEvent);

  struct Region {
    std::byte* base = nullptr;
    std::size_t size = 0;
  };
  struct Replica {
    pid_t pid = -1;
    Region region;
    std::optional<PerfCounter> counter;
    std::optional<ExitStatus> exit;
    bool reaped = false;
  };

  ProcessSession(std::vector<std::size_t> output_sizes, CounterEvent event);

  static std::size_t index(Role role) { return role == Role::kHead ? 0 : 1; }
  Replica& replica(const ReplicaHandle& handle);

  std::vector<MutableBuffer> output_regions(Role role) override;

  InstructionCount read_count(const ReplicaHandle& handle) override;
  void suspend(const ReplicaHandle& handle) override;
  void resume(const ReplicaHandle& handle) override;
  std::optional<ExitStatus> is_terminated(const ReplicaHandle& handle) override;
  void kill(const ReplicaHandle& handle) override;
  std::string_view backend_name() const override;

  CounterEvent event_;
  Replica replicas_[2];
  ReplicaHandle handles_[2];
  // Byte offsets of each input/output inside a region (identical layout).
  std::vector<std::size_t> input_offsets_;
  std::vector<std::size_t> input_sizes_;
  std::vector<std::size_t> output_offsets_;
  SteadyTicker ticker_;
  bool released_ = false;
};

// Deterministic session: progress follows a ScriptedScenario and the wrapper
// runs in-process on each replica's private copies when that replica's
// outputs are first collected.
class ScriptedSession final : public ReplicaSession {
 public:
  ScriptedSession(WrappedComputation computation, const PayloadSpec& payload,
                  const ScriptedScenario& scenario);

  const ReplicaHandle& head() const override { return head_; }
  const ReplicaHandle& trail() const override { return trail_; }
  ProgressSource& progress() override { return source_; }
  Ticker& ticker() override { return source_; }
  void release() noexcept override { released_ = true; }
  bool released() const override { return released_; }

  ScriptedSource& source() { return source_; }

 private:
  struct Copies {
    std::vector<std::vector<std::byte>> inputs;
    std::vector<std::vector<std::byte>> outputs;
    bool ran = false;
    bool ok = false;
  };

  std::vector<MutableBuffer> output_regions(Role role) override;

  WrappedComputation computation_;
  ScriptedSource source_;
  ReplicaHandle head_;
  ReplicaHandle trail_;
  Copies copies_[2];
  bool released_ = false;
};

// Forks head and trail. Throws Error with kSpawnFailure, kCounterUnavailable
// or kPinningFailure; on any failure no child outlives the call.
std::unique_ptr<ProcessSession> spawn_replicas(
    const WrappedComputation& computation, const PayloadSpec& payload,
    const MonitorConfig& config,
    CounterEvent event = CounterEvent::kRetiredInstructions);

OutputSet collect_outputs(ReplicaSession& session, Role role);
void release_session(ReplicaSession& session) noexcept;

// Pins the calling thread for the lifetime of the object, restoring the
// previous mask afterwards.
class ScopedThreadAffinity {
 public:
  explicit ScopedThreadAffinity(std::optional<CoreId> core);
  ~ScopedThreadAffinity();
  ScopedThreadAffinity(const ScopedThreadAffinity&) = delete;
  ScopedThreadAffinity& operator=(const ScopedThreadAffinity&) = delete;

 private:
  struct Saved;
  std::unique_ptr<Saved> saved_;
};

}  // namespace softlockstep
