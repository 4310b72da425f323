// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

// Empirical threshold calibration.
//
// The minimum safe staggering is the number of instructions a runaway
// trail can retire between a check that saw enough margin and the moment a
// subsequent suspension takes effect: peak rate times (check period plus
// monitor reaction latency), scaled by a safety margin.

#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "softlockstep/core.hpp"
#include "softlockstep/perf_counter.hpp"

namespace softlockstep {

inline constexpr double kDefaultSafetyMargin = 2.0;

struct CalibrationReport {
  double peak_rate = 0.0;  // instructions per second
  std::chrono::nanoseconds monitor_latency{0};
  std::chrono::nanoseconds check_period{0};
  double safety_margin = kDefaultSafetyMargin;
  InstructionCount recommended_threshold = 0;

  friend bool operator==(const CalibrationReport&,
                         const CalibrationReport&) = default;
};

// ceil(peak_rate * (check_period + monitor_latency) * safety_margin), with
// time in seconds. Throws Error(kInvalidArgument) unless peak_rate > 0,
// check_period > 0, monitor_latency >= 0 and safety_margin >= 1.
InstructionCount recommend_threshold(double peak_rate,
                                     std::chrono::nanoseconds check_period,
                                     std::chrono::nanoseconds monitor_latency,
                                     double safety_margin);

// A busy replica to measure against.
class CalibrationProbe {
 public:
  virtual ~CalibrationProbe() = default;
  virtual InstructionCount read_count() = 0;
  virtual void suspend() = 0;
  virtual void resume() = 0;
  // Blocks until the replica has verifiably stopped retiring instructions.
  virtual void await_stopped() = 0;
  virtual std::int64_t now_ns() = 0;
  virtual void sleep(std::chrono::nanoseconds duration) = 0;
};

// Forks a child running a maximal-IPC loop of independent integer
// operations, created stopped, with a counter attached.
class ProcessProbe final : public CalibrationProbe {
 public:
  explicit ProcessProbe(CounterEvent event = CounterEvent::kRetiredInstructions,
                        std::optional<CoreId> core = std::nullopt);
  ~ProcessProbe() override;
  ProcessProbe(const ProcessProbe&) = delete;
  ProcessProbe& operator=(const ProcessProbe&) = delete;

  InstructionCount read_count() override;
  void suspend() override;
  void resume() override;
  void await_stopped() override;
  std::int64_t now_ns() override;
  void sleep(std::chrono::nanoseconds duration) override;

  pid_t pid() const { return pid_; }

 private:
  pid_t pid_ = -1;
  std::optional<PerfCounter> counter_;
  bool stopped_ = true;
};

// Virtual busy replica cycling through `deltas` once per tick, with a
// fixed suspend latency in ticks.
class ScriptedProbe final : public CalibrationProbe {
 public:
  ScriptedProbe(std::vector<InstructionCount> deltas, std::uint64_t tick_us,
                std::uint64_t suspend_latency_ticks);

  InstructionCount read_count() override { return count_; }
  void suspend() override;
  void resume() override;
  void await_stopped() override;
  std::int64_t now_ns() override;
  void sleep(std::chrono::nanoseconds duration) override;

 private:
  void advance(std::uint64_t ticks);

  std::vector<InstructionCount> deltas_;
  std::uint64_t tick_us_;
  std::uint64_t latency_;
  std::uint64_t tick_ = 0;
  std::size_t next_ = 0;
  InstructionCount count_ = 0;
  std::optional<std::uint64_t> frozen_after_ = 0;
};

// Max over ten equal sub-windows of the observed retirement rate.
// Requires duration >= 100 ms. Leaves the probe suspended.
double measure_peak_rate(CalibrationProbe& probe,
                         std::chrono::milliseconds duration);

// Worst case, over `samples` read-read-suspend cycles, of the time from
// the first read to a verified freeze. Requires samples >= 30.
std::chrono::nanoseconds measure_monitor_latency(CalibrationProbe& probe,
                                                 std::size_t samples);

CalibrationReport calibrate(CalibrationProbe& probe,
                            std::chrono::milliseconds duration,
                            std::size_t samples,
                            std::chrono::nanoseconds check_period,
                            double safety_margin = kDefaultSafetyMargin);

// Flat key=value file.
void write_report(std::ostream& out, const CalibrationReport& report);
CalibrationReport read_report(std::istream& in);
CalibrationReport load_report(const std::string& path);

// Empty when recommended_threshold matches its own formula fields.
std::vector<std::string> check_report(const CalibrationReport& report);

}  // namespace softlockstep
