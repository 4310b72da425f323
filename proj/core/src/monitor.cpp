// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include "softlockstep/monitor.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "softlockstep/error.hpp"
#include "softlockstep/integrity.hpp"

namespace softlockstep {

namespace {

constexpr std::string_view kTraceHeader =
    "interval,timestamp_ns,head_instr,trail_instr,staggering,action";

template <typename T>
T parse_number(std::string_view text, std::size_t line) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end) {
    throw Error(ErrorCode::kParseError, "trace line " + std::to_string(line) +
                                            ": bad number '" +
                                            std::string(text) + "'");
  }
  return value;
}

struct LiveFault {
  FaultSpec spec;
  bool fired = false;
  bool active = false;  // freeze in progress
  std::int64_t until_ns = 0;
};

}  // namespace

void write_trace(const Trace& trace, std::ostream& sink) {
  sink << kTraceHeader << '\n';
  for (const auto& s : trace.samples) {
    sink << s.interval_index << ',' << s.timestamp_ns << ',' << s.head_count
         << ',' << s.trail_count << ',' << s.staggering << ','
         << to_string(s.action) << '\n';
  }
  sink.flush();
  if (!sink) throw Error(ErrorCode::kIoError, "trace sink write failed");
}

void write_trace_file(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path);
  write_trace(trace, out);
}

Trace read_trace(std::istream& source) {
  Trace trace;
  std::string line;
  if (!std::getline(source, line) || line != kTraceHeader) {
    throw Error(ErrorCode::kParseError, "trace header missing or malformed");
  }
  std::size_t line_no = 1;
  while (std::getline(source, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest = line;
    for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos;) {
      cells.push_back(rest.substr(0, pos));
      rest.remove_prefix(pos + 1);
    }
    cells.push_back(rest);
    if (cells.size() != 6) {
      throw Error(ErrorCode::kParseError,
                  "trace line " + std::to_string(line_no) + ": need 6 fields");
    }
    const auto action = parse_action(cells[5]);
    if (!action) {
      throw Error(ErrorCode::kParseError, "trace line " +
                                              std::to_string(line_no) +
                                              ": unknown action");
    }
    trace.samples.push_back(StaggeringSample{
        .interval_index = parse_number<std::uint64_t>(cells[0], line_no),
        .timestamp_ns = parse_number<std::int64_t>(cells[1], line_no),
        .head_count = parse_number<std::uint64_t>(cells[2], line_no),
        .trail_count = parse_number<std::uint64_t>(cells[3], line_no),
        .staggering = parse_number<std::int64_t>(cells[4], line_no),
        .action = *action});
  }
  return trace;
}

std::vector<std::string> check_trace(const Trace& trace) {
  std::vector<std::string> problems;
  auto report = [&](std::size_t i, const std::string& what) {
    problems.push_back("sample " + std::to_string(i) + ": " + what);
  };
  TrailState state = TrailState::kSuspended;
  int head_done = 0;
  int trail_done = 0;
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    const auto& s = trace.samples[i];
    if (i > 0) {
      const auto& prev = trace.samples[i - 1];
      if (s.interval_index <= prev.interval_index) {
        report(i, "interval index not strictly increasing");
      }
      if (s.timestamp_ns < prev.timestamp_ns) report(i, "timestamp decreased");
    }
    try {
      if (staggering(s.head_count, s.trail_count) != s.staggering) {
        report(i, "staggering != head - trail");
      }
    } catch (const Error&) {
      report(i, "staggering overflows");
    }
    switch (s.action) {
      case Action::kSuspend:
        if (state == TrailState::kSuspended) report(i, "SUSPEND while suspended");
        if (head_done > 0) report(i, "SUSPEND after HEAD_DONE");
        state = TrailState::kSuspended;
        break;
      case Action::kResume:
        if (state == TrailState::kRunning) report(i, "RESUME while running");
        state = TrailState::kRunning;
        break;
      case Action::kDiversityLoss:
        if (head_done > 0) report(i, "DIVERSITY_LOSS after HEAD_DONE");
        state = TrailState::kSuspended;
        break;
      case Action::kHeadDone:
        ++head_done;
        state = TrailState::kRunning;
        break;
      case Action::kTrailDone:
        ++trail_done;
        break;
      case Action::kNone:
        break;
    }
  }
  if (head_done > 1) problems.emplace_back("more than one HEAD_DONE");
  if (trail_done > 1) problems.emplace_back("more than one TRAIL_DONE");
  return problems;
}

LoopResult enforcement_loop(const ReplicaHandle& head,
                            const ReplicaHandle& trail, ProgressSource& source,
                            Ticker& ticker, const MonitorConfig& config,
                            std::span<const FaultSpec> live_faults) {
  LoopResult result;
  result.trace.metadata.config = config;
  result.trace.metadata.backend = std::string(source.backend_name());
  result.trace.metadata.started = std::chrono::system_clock::now();

  std::vector<LiveFault> faults;
  for (const auto& f : live_faults) {
    if (!std::holds_alternative<BitFlip>(f.kind)) faults.push_back({f});
  }
  auto trail_frozen = [&] {
    return std::any_of(faults.begin(), faults.end(), [](const LiveFault& f) {
      return f.active && f.spec.target == Role::kTrail;
    });
  };

  TrailState trail_state = TrailState::kSuspended;
  bool head_reported = false;
  bool trail_reported = false;
  const std::int64_t start_ns = ticker.now_ns();
  const std::int64_t timeout_ns =
      config.run_timeout
          ? std::chrono::duration_cast<std::chrono::nanoseconds>(
                *config.run_timeout)
                .count()
          : 0;

  for (std::uint64_t interval = 1;; ++interval) {
    ticker.wait(config.check_period);
    const std::int64_t now = ticker.now_ns() - start_ns;
    if (config.run_timeout && now >= timeout_ns) {
      result.end = LoopEnd::kTimeout;
      break;
    }

    InstructionCount head_count = 0;
    InstructionCount trail_count = 0;
    try {
      head_count = source.read_count(head);
    } catch (const Error& e) {
      result.end = LoopEnd::kCounterFailure;
      result.failed_role = Role::kHead;
      result.detail = e.what();
      break;
    }
    try {
      trail_count = source.read_count(trail);
    } catch (const Error& e) {
      result.end = LoopEnd::kCounterFailure;
      result.failed_role = Role::kTrail;
      result.detail = e.what();
      break;
    }

    for (auto& f : faults) {
      const auto& target = f.spec.target == Role::kHead ? head : trail;
      if (const auto* crash = std::get_if<Crash>(&f.spec.kind)) {
        const auto count = f.spec.target == Role::kHead ? head_count : trail_count;
        if (!f.fired && count >= crash->after_instructions) {
          source.kill(target);
          f.fired = true;
        }
      } else if (const auto* freeze = std::get_if<Freeze>(&f.spec.kind)) {
        if (!f.fired && trail_state == TrailState::kRunning) {
          source.suspend(target);
          f.fired = true;
          f.active = true;
          f.until_ns =
              now + std::chrono::duration_cast<std::chrono::nanoseconds>(
                        freeze->duration)
                        .count();
        } else if (f.active && now >= f.until_ns) {
          f.active = false;
          if (f.spec.target == Role::kHead ||
              trail_state == TrailState::kRunning) {
            source.resume(target);
          }
        }
      }
    }

    const auto head_exit = source.is_terminated(head);
    const auto trail_exit = source.is_terminated(trail);

    StaggeringSample sample{.interval_index = interval,
                            .timestamp_ns = now,
                            .head_count = head_count,
                            .trail_count = trail_count,
                            .staggering = staggering(head_count, trail_count),
                            .action = Action::kNone};

    if (!head_reported && head_exit) {
      head_reported = true;
      result.head_exit = head_exit;
      sample.action = Action::kHeadDone;
      if (trail_state == TrailState::kSuspended) {
        trail_state = TrailState::kRunning;
        if (!trail_frozen()) source.resume(trail);
      }
      result.trace.samples.push_back(sample);
      if (!head_exit->ok()) {
        result.end = LoopEnd::kReplicaFailure;
        break;
      }
    } else if (!trail_reported && trail_exit) {
      trail_reported = true;
      result.trail_exit = trail_exit;
      sample.action = Action::kTrailDone;
      result.trace.samples.push_back(sample);
      if (!trail_exit->ok()) {
        result.end = LoopEnd::kReplicaFailure;
        break;
      }
    } else if (head_reported || trail_reported) {
      result.trace.samples.push_back(sample);
    } else if (sample.staggering < 0) {
      sample.action = Action::kDiversityLoss;
      if (!result.first_diversity_loss) result.first_diversity_loss = sample;
      if (trail_state == TrailState::kRunning) {
        source.suspend(trail);
        trail_state = TrailState::kSuspended;
      }
      result.trace.samples.push_back(sample);
      if (config.diversity_loss_policy == DiversityLossPolicy::kAbortRun) {
        result.end = LoopEnd::kDiversityLoss;
        break;
      }
    } else {
      sample.action =
          decide(sample.staggering, config.threshold_instructions, trail_state);
      if (sample.action == Action::kSuspend) {
        source.suspend(trail);
        trail_state = TrailState::kSuspended;
      } else if (sample.action == Action::kResume) {
        trail_state = TrailState::kRunning;
        if (!trail_frozen()) source.resume(trail);
      }
      result.trace.samples.push_back(sample);
    }

    if (head_reported && trail_reported) {
      result.end = LoopEnd::kCompleted;
      break;
    }
  }
  result.trace.metadata.finished = std::chrono::system_clock::now();
  return result;
}

namespace {

ReplicaFailure failure_from_exit(Role role, const ExitStatus& exit) {
  return ReplicaFailure{role, exit.kind == ExitKind::kCrash
                                  ? ReplicaFailureCause::kCrash
                                  : ReplicaFailureCause::kNonzeroExit};
}

Verdict verdict_from_loop(const LoopResult& loop) {
  switch (loop.end) {
    case LoopEnd::kTimeout:
      return Timeout{};
    case LoopEnd::kDiversityLoss:
      return DiversityLoss{*loop.first_diversity_loss};
    case LoopEnd::kCounterFailure:
      return ReplicaFailure{*loop.failed_role, ReplicaFailureCause::kCrash};
    case LoopEnd::kReplicaFailure:
    case LoopEnd::kCompleted:
      break;
  }
  if (loop.head_exit && !loop.head_exit->ok()) {
    return failure_from_exit(Role::kHead, *loop.head_exit);
  }
  if (loop.trail_exit && !loop.trail_exit->ok()) {
    return failure_from_exit(Role::kTrail, *loop.trail_exit);
  }
  return Match{};
}

}  // namespace

ProtectResult run_session(ReplicaSession& session,
                          std::span<const MutableBuffer> outputs,
                          const MonitorConfig& config) {
  const auto& sizes = session.output_sizes();
  if (outputs.size() != sizes.size()) {
    session.release();
    throw Error(ErrorCode::kInvalidArgument,
                "caller output list disagrees with declared outputs");
  }
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (outputs[i].size() != sizes[i]) {
      session.release();
      throw Error(ErrorCode::kInvalidArgument,
                  "caller output " + std::to_string(i) +
                      " disagrees with its declared size");
    }
  }

  LoopResult loop;
  {
    ScopedThreadAffinity pin(config.monitor_core);
    loop = enforcement_loop(session.head(), session.trail(), session.progress(),
                            session.ticker(), config, session.faults());
  }
  ProtectResult result{verdict_from_loop(loop), std::move(loop.trace)};

  if (std::holds_alternative<Match>(result.verdict)) {
    OutputSet head_out;
    OutputSet trail_out;
    Role current = Role::kHead;
    try {
      head_out = session.collect_outputs(Role::kHead);
      current = Role::kTrail;
      trail_out = session.collect_outputs(Role::kTrail);
      result.verdict = compare_outputs(head_out, trail_out, sizes);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kReplicaFailure &&
          e.code() != ErrorCode::kIncomplete) {
        session.release();
        throw;
      }
      result.verdict =
          ReplicaFailure{current, ReplicaFailureCause::kNonzeroExit};
    }
    if (std::holds_alternative<Match>(result.verdict)) {
      for (std::size_t i = 0; i < outputs.size(); ++i) {
        std::copy(head_out[i].begin(), head_out[i].end(), outputs[i].begin());
      }
    }
  }
  session.release();
  return result;
}

ProtectResult protect(const WrappedComputation& computation,
                      const PayloadSpec& payload,
                      std::span<const MutableBuffer> outputs,
                      const MonitorConfig& config,
                      const ProtectOptions& options) {
  if (auto errors = validate_config(config); !errors.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "invalid config: " + errors[0]);
  }
  std::unique_ptr<ReplicaSession> session;
  if (const auto* os = std::get_if<OsBackend>(&options.backend)) {
    session = spawn_replicas(computation, payload, config, os->event);
  } else {
    session = std::make_unique<ScriptedSession>(
        computation, payload, std::get<ScriptedBackend>(options.backend).scenario);
  }
  for (const auto& fault : options.faults) inject_fault(*session, fault);
  return run_session(*session, outputs, config);
}

ProtectResult protect(const WrappedComputation& computation,
                      std::span<const void* const> argv_input,
                      std::span<const std::size_t> input_size,
                      std::span<void* const> argv_output,
                      std::span<const std::size_t> output_size,
                      const MonitorConfig& config,
                      const ProtectOptions& options) {
  if (argv_input.size() != input_size.size() ||
      argv_output.size() != output_size.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "pointer and size lists must have equal length");
  }
  PayloadSpec payload;
  for (std::size_t i = 0; i < argv_input.size(); ++i) {
    const auto* p = static_cast<const std::byte*>(argv_input[i]);
    payload.inputs.push_back({ConstBuffer(p, input_size[i]), input_size[i]});
  }
  payload.output_sizes.assign(output_size.begin(), output_size.end());
  std::vector<MutableBuffer> outputs;
  for (std::size_t i = 0; i < argv_output.size(); ++i) {
    outputs.emplace_back(static_cast<std::byte*>(argv_output[i]),
                         output_size[i]);
  }
  return protect(computation, payload, outputs, config, options);
}

}  // namespace softlockstep
