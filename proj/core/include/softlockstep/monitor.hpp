// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

// The staggering enforcement loop and the protect() entry point.
//
// Every check period the loop reads the head count, then the trail count,
// records a sample and applies decide() to the trail. Once the head has
// terminated the trail is released for good. protect() wraps a full run:
// replicate, enforce, compare, deliver.

#pragma once

#include <chrono>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "softlockstep/core.hpp"
#include "softlockstep/fault.hpp"
#include "softlockstep/perf_counter.hpp"
#include "softlockstep/progress.hpp"
#include "softlockstep/replication.hpp"

namespace softlockstep {

struct TraceMetadata {
  MonitorConfig config;
  std::string backend;
  std::chrono::system_clock::time_point started;
  std::chrono::system_clock::time_point finished;
};

struct Trace {
  std::vector<StaggeringSample> samples;
  TraceMetadata metadata;
};

// CSV with header `interval,timestamp_ns,head_instr,trail_instr,staggering,
// action`. Throws Error(kIoError) if the stream fails.
void write_trace(const Trace& trace, std::ostream& sink);
void write_trace_file(const Trace& trace, const std::string& path);
// Inverse of write_trace (samples only). Throws Error(kParseError).
Trace read_trace(std::istream& source);

// Structural checks: index/timestamp ordering, staggering arithmetic, legal
// SUSPEND/RESUME alternation, HEAD_DONE/TRAIL_DONE multiplicity and no
// SUSPEND after HEAD_DONE. Returns one message per violation.
std::vector<std::string> check_trace(const Trace& trace);

enum class LoopEnd {
  kCompleted,
  kDiversityLoss,
  kTimeout,
  kReplicaFailure,
  kCounterFailure,
};

struct LoopResult {
  Trace trace;
  LoopEnd end = LoopEnd::kCompleted;
  std::optional<StaggeringSample> first_diversity_loss;
  std::optional<ExitStatus> head_exit;
  std::optional<ExitStatus> trail_exit;
  // Set for kCounterFailure.
  std::optional<Role> failed_role;
  std::string detail;
};

// Precondition: the trail is suspended. Freeze and Crash entries of
// `live_faults` are applied at checks; other kinds are ignored here.
LoopResult enforcement_loop(const ReplicaHandle& head,
                            const ReplicaHandle& trail, ProgressSource& source,
                            Ticker& ticker, const MonitorConfig& config,
                            std::span<const FaultSpec> live_faults = {});

struct OsBackend {
  CounterEvent event = CounterEvent::kRetiredInstructions;
};

struct ScriptedBackend {
  ScriptedScenario scenario;
};

struct ProtectOptions {
  std::variant<OsBackend, ScriptedBackend> backend;
  std::vector<FaultSpec> faults;
};

struct ProtectResult {
  Verdict verdict;
  Trace trace;
};

// Runs `computation` redundantly. On Match the caller's outputs receive the
// head's results; otherwise they are left untouched. Setup failures
// (invalid arguments, spawn, counters, pinning) throw Error.
ProtectResult protect(const WrappedComputation& computation,
                      const PayloadSpec& payload,
                      std::span<const MutableBuffer> outputs,
                      const MonitorConfig& config,
                      const ProtectOptions& options = {});

// Five-argument form mirroring a C-style wrapper interface: parallel lists
// of input pointers and sizes, output pointers and sizes.
ProtectResult protect(const WrappedComputation& computation,
                      std::span<const void* const> argv_input,
                      std::span<const std::size_t> input_size,
                      std::span<void* const> argv_output,
                      std::span<const std::size_t> output_size,
                      const MonitorConfig& config,
                      const ProtectOptions& options = {});

// Enforce, collect and compare on an already spawned session (faults
// registered via inject_fault are honoured). Releases the session.
ProtectResult run_session(ReplicaSession& session,
                          std::span<const MutableBuffer> outputs,
                          const MonitorConfig& config);

}  // namespace softlockstep
