// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include "softlockstep/calibration.hpp"

#include <sched.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "softlockstep/error.hpp"

namespace softlockstep {

InstructionCount recommend_threshold(double peak_rate,
                                     std::chrono::nanoseconds check_period,
                                     std::chrono::nanoseconds monitor_latency,
                                     double safety_margin) {
  if (!(peak_rate > 0.0) || check_period.count() <= 0 ||
      monitor_latency.count() < 0 || !(safety_margin >= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "recommend_threshold needs peak_rate > 0, period > 0, "
                "latency >= 0 and margin >= 1");
  }
  // Keep time in integral nanoseconds until the last step so that exact
  // inputs (e.g. 2.6e9/s over 1 ms) give exact products.
  const double window_ns =
      static_cast<double>(check_period.count() + monitor_latency.count());
  const double instructions = peak_rate * window_ns * safety_margin / 1e9;
  return static_cast<InstructionCount>(std::ceil(instructions));
}

namespace {

[[noreturn]] void busy_loop() {
  // Eight independent dependency chains keep every integer port busy.
  std::uint64_t a = 1, b = 2, c = 3, d = 4, e = 5, f = 6, g = 7, h = 8;
  for (;;) {
    a += 1; b += 3; c += 5; d += 7;
    e ^= a; f ^= b; g ^= c; h ^= d;
    asm volatile("" : "+r"(a), "+r"(b), "+r"(c), "+r"(d), "+r"(e), "+r"(f),
                 "+r"(g), "+r"(h));
  }
}

}  // namespace

ProcessProbe::ProcessProbe(CounterEvent event, std::optional<CoreId> core) {
  std::fflush(nullptr);
  pid_ = ::fork();
  if (pid_ < 0) {
    throw Error(ErrorCode::kSpawnFailure,
                std::string("fork: ") + std::strerror(errno));
  }
  if (pid_ == 0) {
    ::raise(SIGSTOP);
    busy_loop();
  }
  int status = 0;
  while (::waitpid(pid_, &status, WUNTRACED) < 0 && errno == EINTR) {
  }
  try {
    if (!WIFSTOPPED(status)) {
      throw Error(ErrorCode::kSpawnFailure, "probe did not reach start barrier");
    }
    counter_.emplace(pid_, event);
    if (core) {
      cpu_set_t set;
      CPU_ZERO(&set);
      CPU_SET(core->value, &set);
      if (::sched_setaffinity(pid_, sizeof set, &set) != 0) {
        throw Error(ErrorCode::kPinningFailure,
                    "cannot pin probe to core " + std::to_string(core->value));
      }
    }
  } catch (...) {
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    throw;
  }
}

ProcessProbe::~ProcessProbe() {
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
}

InstructionCount ProcessProbe::read_count() { return counter_->read(); }

void ProcessProbe::suspend() {
  ::kill(pid_, SIGSTOP);
}

void ProcessProbe::resume() {
  ::kill(pid_, SIGCONT);
  stopped_ = false;
}

void ProcessProbe::await_stopped() {
  if (stopped_) return;
  int status = 0;
  for (;;) {
    const pid_t r = ::waitpid(pid_, &status, WUNTRACED);
    if (r < 0 && errno == EINTR) continue;
    if (r == pid_ && WIFSTOPPED(status)) break;
    throw Error(ErrorCode::kReplicaFailure, "calibration probe died");
  }
  stopped_ = true;
}

std::int64_t ProcessProbe::now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void ProcessProbe::sleep(std::chrono::nanoseconds duration) {
  std::this_thread::sleep_for(duration);
}

ScriptedProbe::ScriptedProbe(std::vector<InstructionCount> deltas,
                             std::uint64_t tick_us,
                             std::uint64_t suspend_latency_ticks)
    : deltas_(std::move(deltas)), tick_us_(tick_us),
      latency_(suspend_latency_ticks) {
  if (deltas_.empty() || tick_us_ == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "scripted probe needs deltas and a positive tick");
  }
}

void ScriptedProbe::suspend() {
  if (!frozen_after_) frozen_after_ = tick_ + latency_;
}

void ScriptedProbe::resume() { frozen_after_.reset(); }

void ScriptedProbe::await_stopped() {
  while (!(frozen_after_ && tick_ >= *frozen_after_)) advance(1);
}

std::int64_t ScriptedProbe::now_ns() {
  return static_cast<std::int64_t>(tick_ * tick_us_ * 1000);
}

void ScriptedProbe::sleep(std::chrono::nanoseconds duration) {
  const auto tick_ns = static_cast<std::int64_t>(tick_us_ * 1000);
  advance(static_cast<std::uint64_t>(
      std::max<std::int64_t>(1, duration.count() / tick_ns)));
}

void ScriptedProbe::advance(std::uint64_t ticks) {
  for (std::uint64_t i = 0; i < ticks; ++i) {
    const auto tick = tick_ + 1;
    if (!(frozen_after_ && tick > *frozen_after_)) {
      count_ += deltas_[next_];
      next_ = (next_ + 1) % deltas_.size();
    }
    tick_ = tick;
  }
}

double measure_peak_rate(CalibrationProbe& probe,
                         std::chrono::milliseconds duration) {
  if (duration < std::chrono::milliseconds(100)) {
    throw Error(ErrorCode::kInvalidArgument,
                "peak-rate measurement needs at least 100 ms");
  }
  constexpr int kWindows = 10;
  const auto window =
      std::chrono::duration_cast<std::chrono::nanoseconds>(duration) / kWindows;
  double peak = 0.0;
  probe.resume();
  for (int w = 0; w < kWindows; ++w) {
    const auto c0 = probe.read_count();
    const auto t0 = probe.now_ns();
    probe.sleep(window);
    const auto c1 = probe.read_count();
    const auto t1 = probe.now_ns();
    if (t1 <= t0) continue;
    const double rate = static_cast<double>(c1 - c0) * 1e9 /
                        static_cast<double>(t1 - t0);
    peak = std::max(peak, rate);
  }
  probe.suspend();
  probe.await_stopped();
  return peak;
}

std::chrono::nanoseconds measure_monitor_latency(CalibrationProbe& probe,
                                                 std::size_t samples) {
  if (samples < 30) {
    throw Error(ErrorCode::kInvalidArgument,
                "latency measurement needs at least 30 samples");
  }
  std::int64_t worst = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    probe.resume();
    probe.sleep(std::chrono::microseconds(200));
    const auto t0 = probe.now_ns();
    const auto head_like = probe.read_count();
    const auto trail_like = probe.read_count();
    (void)head_like;
    (void)trail_like;
    probe.suspend();
    probe.await_stopped();
    // Confirm the freeze; a count still moving means the stop was not yet
    // effective, so keep the clock running until it settles.
    auto before = probe.read_count();
    for (;;) {
      const auto after = probe.read_count();
      if (after == before) break;
      before = after;
      probe.sleep(std::chrono::microseconds(10));
    }
    worst = std::max(worst, probe.now_ns() - t0);
  }
  return std::chrono::nanoseconds(worst);
}

CalibrationReport calibrate(CalibrationProbe& probe,
                            std::chrono::milliseconds duration,
                            std::size_t samples,
                            std::chrono::nanoseconds check_period,
                            double safety_margin) {
  CalibrationReport report;
  report.peak_rate = measure_peak_rate(probe, duration);
  report.monitor_latency = measure_monitor_latency(probe, samples);
  report.check_period = check_period;
  report.safety_margin = safety_margin;
  report.recommended_threshold =
      recommend_threshold(report.peak_rate, check_period,
                          report.monitor_latency, safety_margin);
  return report;
}

namespace {

std::string seconds_text(std::chrono::nanoseconds ns) {
  std::ostringstream out;
  out << ns.count() / 1'000'000'000 << '.' << std::setw(9) << std::setfill('0')
      << ns.count() % 1'000'000'000;
  return out.str();
}

std::chrono::nanoseconds parse_seconds(const std::string& text) {
  const auto dot = text.find('.');
  std::int64_t whole = 0;
  std::int64_t frac = 0;
  try {
    whole = std::stoll(text.substr(0, dot));
    if (dot != std::string::npos) {
      std::string digits = text.substr(dot + 1);
      if (digits.size() > 9 ||
          digits.find_first_not_of("0123456789") != std::string::npos) {
        throw Error(ErrorCode::kParseError, "bad seconds value " + text);
      }
      digits.resize(9, '0');
      frac = std::stoll(digits);
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kParseError, "bad seconds value " + text);
  }
  return std::chrono::nanoseconds(whole * 1'000'000'000 + frac);
}

}  // namespace

void write_report(std::ostream& out, const CalibrationReport& report) {
  char rate[64];
  std::snprintf(rate, sizeof rate, "%.17g", report.peak_rate);
  char margin[64];
  std::snprintf(margin, sizeof margin, "%.17g", report.safety_margin);
  out << "peak_rate=" << rate << '\n'
      << "monitor_latency=" << seconds_text(report.monitor_latency) << '\n'
      << "check_period=" << seconds_text(report.check_period) << '\n'
      << "safety_margin=" << margin << '\n'
      << "recommended_threshold=" << report.recommended_threshold << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "calibration report write failed");
}

CalibrationReport read_report(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kParseError, "calibration line without '='");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw Error(ErrorCode::kParseError,
                  std::string("calibration file lacks ") + key);
    }
    return it->second;
  };
  CalibrationReport report;
  try {
    report.peak_rate = std::stod(get("peak_rate"));
    report.safety_margin = std::stod(get("safety_margin"));
    report.recommended_threshold = std::stoull(get("recommended_threshold"));
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kParseError, "malformed calibration value");
  }
  report.monitor_latency = parse_seconds(get("monitor_latency"));
  report.check_period = parse_seconds(get("check_period"));
  return report;
}

CalibrationReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return read_report(in);
}

std::vector<std::string> check_report(const CalibrationReport& report) {
  std::vector<std::string> problems;
  if (!(report.safety_margin >= 1.0)) {
    problems.emplace_back("safety_margin below 1");
    return problems;
  }
  try {
    const auto expected =
        recommend_threshold(report.peak_rate, report.check_period,
                            report.monitor_latency, report.safety_margin);
    if (expected != report.recommended_threshold) {
      problems.push_back("recommended_threshold " +
                         std::to_string(report.recommended_threshold) +
                         " != formula value " + std::to_string(expected));
    }
  } catch (const Error& e) {
    problems.emplace_back(e.what());
  }
  return problems;
}

}  // namespace softlockstep
