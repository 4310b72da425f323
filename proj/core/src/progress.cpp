// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include "softlockstep/progress.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "softlockstep/error.hpp"

namespace softlockstep {

std::int64_t SteadyTicker::now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void SteadyTicker::wait(std::chrono::microseconds period) {
  const auto now = std::chrono::steady_clock::now();
  if (!next_wake_ || *next_wake_ + period < now) {
    // First wait, or we fell more than a period behind: re-anchor.
    next_wake_ = now + period;
  } else {
    *next_wake_ += period;
  }
  std::this_thread::sleep_until(*next_wake_);
}

ReplicaHandle ScriptedSource::add_replica(
    Role role, std::vector<InstructionCount> deltas,
    std::optional<InstructionCount> length, std::uint64_t suspend_latency_ticks,
    bool start_suspended) {
  Replica r;
  r.role = role;
  r.deltas = std::move(deltas);
  r.length = length;
  r.latency = suspend_latency_ticks;
  if (start_suspended) r.frozen_after = tick_;
  finish_if_done(r);
  replicas_.push_back(std::move(r));
  const auto index = replicas_.size() - 1;
  return ReplicaHandle{.replica_id = index + 1,
                       .role = role,
                       .native_id = static_cast<std::int64_t>(index)};
}

std::pair<ReplicaHandle, ReplicaHandle> ScriptedSource::populate(
    ScriptedSource& source, const ScriptedScenario& scenario) {
  auto head = source.add_replica(Role::kHead, scenario.head_deltas,
                                 scenario.head_length,
                                 scenario.suspend_latency_ticks, false);
  auto trail = source.add_replica(Role::kTrail, scenario.trail_deltas,
                                  scenario.trail_length,
                                  scenario.suspend_latency_ticks, true);
  return {head, trail};
}

ScriptedSource::Replica& ScriptedSource::lookup(const ReplicaHandle& handle) {
  if (handle.native_id < 0 ||
      static_cast<std::size_t>(handle.native_id) >= replicas_.size()) {
    throw Error(ErrorCode::kStaleHandle, "unknown scripted replica");
  }
  return replicas_[static_cast<std::size_t>(handle.native_id)];
}

const ScriptedSource::Replica& ScriptedSource::lookup(
    const ReplicaHandle& handle) const {
  return const_cast<ScriptedSource*>(this)->lookup(handle);
}

void ScriptedSource::finish_if_done(Replica& r) {
  if (r.exit) return;
  const bool exhausted = r.next >= r.deltas.size();
  const bool reached = r.length && r.count >= *r.length;
  if (exhausted || reached) r.exit = ExitStatus{ExitKind::kSuccess, 0};
}

InstructionCount ScriptedSource::read_count(const ReplicaHandle& handle) {
  return lookup(handle).count;
}

void ScriptedSource::suspend(const ReplicaHandle& handle) {
  auto& r = lookup(handle);
  if (r.exit || r.frozen_after) return;
  r.frozen_after = tick_ + r.latency;
}

void ScriptedSource::resume(const ReplicaHandle& handle) {
  auto& r = lookup(handle);
  if (r.exit) return;
  r.frozen_after.reset();
}

std::optional<ExitStatus> ScriptedSource::is_terminated(
    const ReplicaHandle& handle) {
  return lookup(handle).exit;
}

void ScriptedSource::kill(const ReplicaHandle& handle) {
  auto& r = lookup(handle);
  if (!r.exit) r.exit = ExitStatus{ExitKind::kCrash, 9};
}

bool ScriptedSource::effectively_suspended(const ReplicaHandle& handle) const {
  const auto& r = lookup(handle);
  return r.frozen_after && tick_ >= *r.frozen_after;
}

std::int64_t ScriptedSource::now_ns() {
  return static_cast<std::int64_t>(tick_ * tick_us_ * 1000);
}

void ScriptedSource::wait(std::chrono::microseconds period) {
  const auto us = static_cast<std::uint64_t>(std::max<std::int64_t>(
      period.count(), 0));
  advance(std::max<std::uint64_t>(1, us / tick_us_));
}

void ScriptedSource::advance(std::uint64_t ticks) {
  for (std::uint64_t i = 0; i < ticks; ++i) {
    const std::uint64_t tick = tick_ + 1;
    for (auto& r : replicas_) {
      if (r.exit) continue;
      if (r.frozen_after && tick > *r.frozen_after) continue;
      InstructionCount next = r.count + r.deltas[r.next++];
      if (r.length) next = std::min(next, *r.length);
      r.count = next;
      finish_if_done(r);
    }
    tick_ = tick;
  }
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::uint64_t parse_u64(std::string_view text, std::size_t line) {
  text = trim(text);
  std::uint64_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end) {
    throw Error(ErrorCode::kParseError,
                "scenario line " + std::to_string(line) +
                    ": expected unsigned integer, got '" + std::string(text) +
                    "'");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

ScriptedScenario read_scenario(std::istream& in) {
  ScriptedScenario scenario;
  std::string raw;
  std::size_t line_no = 0;
  bool header_seen = false;
  bool head_ended = false;
  bool trail_ended = false;
  std::uint64_t expected_tick = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      line.remove_prefix(1);
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) continue;  // plain comment
      const auto key = trim(line.substr(0, eq));
      const auto value = parse_u64(line.substr(eq + 1), line_no);
      if (key == "suspend_latency_ticks") {
        scenario.suspend_latency_ticks = value;
      } else if (key == "tick_us") {
        if (value == 0) {
          throw Error(ErrorCode::kParseError, "tick_us must be positive");
        }
        scenario.tick_us = value;
      } else if (key == "head_length") {
        scenario.head_length = value;
      } else if (key == "trail_length") {
        scenario.trail_length = value;
      } else {
        throw Error(ErrorCode::kParseError,
                    "scenario line " + std::to_string(line_no) +
                        ": unknown key '" + std::string(key) + "'");
      }
      continue;
    }
    if (!header_seen) {
      if (line != "tick,head_delta,trail_delta") {
        throw Error(ErrorCode::kParseError,
                    "scenario must start with header "
                    "'tick,head_delta,trail_delta'");
      }
      header_seen = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 3) {
      throw Error(ErrorCode::kParseError,
                  "scenario line " + std::to_string(line_no) +
                      ": expected 3 columns");
    }
    if (parse_u64(cells[0], line_no) != expected_tick) {
      throw Error(ErrorCode::kParseError,
                  "scenario line " + std::to_string(line_no) +
                      ": ticks must be consecutive from 0");
    }
    ++expected_tick;
    auto take = [&](std::string_view cell, bool& ended,
                    std::vector<InstructionCount>& dst) {
      if (trim(cell).empty()) {
        ended = true;
        return;
      }
      if (ended) {
        throw Error(ErrorCode::kParseError,
                    "scenario line " + std::to_string(line_no) +
                        ": stream resumes after an empty cell");
      }
      dst.push_back(parse_u64(cell, line_no));
    };
    take(cells[1], head_ended, scenario.head_deltas);
    take(cells[2], trail_ended, scenario.trail_deltas);
  }
  if (!header_seen) {
    throw Error(ErrorCode::kParseError, "scenario is empty");
  }
  return scenario;
}

ScriptedScenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open scenario " + path);
  return read_scenario(in);
}

void write_scenario(std::ostream& out, const ScriptedScenario& scenario) {
  if (scenario.suspend_latency_ticks != 0) {
    out << "# suspend_latency_ticks=" << scenario.suspend_latency_ticks << '\n';
  }
  if (scenario.tick_us != 1) out << "# tick_us=" << scenario.tick_us << '\n';
  if (scenario.head_length) {
    out << "# head_length=" << *scenario.head_length << '\n';
  }
  if (scenario.trail_length) {
    out << "# trail_length=" << *scenario.trail_length << '\n';
  }
  out << "tick,head_delta,trail_delta\n";
  const auto rows =
      std::max(scenario.head_deltas.size(), scenario.trail_deltas.size());
  for (std::size_t i = 0; i < rows; ++i) {
    out << i << ',';
    if (i < scenario.head_deltas.size()) out << scenario.head_deltas[i];
    out << ',';
    if (i < scenario.trail_deltas.size()) out << scenario.trail_deltas[i];
    out << '\n';
  }
}

}  // namespace softlockstep
