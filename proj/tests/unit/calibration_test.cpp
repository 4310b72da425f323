// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "softlockstep/calibration.hpp"
#include "softlockstep/error.hpp"
#include "softlockstep/sim.hpp"
#include "test_support.hpp"

namespace softlockstep {
namespace {

using namespace std::chrono_literals;
using std::chrono::nanoseconds;

TEST(RecommendThreshold, OneInstructionPerCycleAt2600MHz) {
  EXPECT_EQ(recommend_threshold(2.6e9, 1ms, 0ns, 1.0), 2'600'000u);
}

TEST(RecommendThreshold, UnitCase) {
  // 1 instruction per second over exactly one second.
  EXPECT_EQ(recommend_threshold(1.0, 1s, 0ns, 1.0), 1u);
}

TEST(RecommendThreshold, ArithmeticCheck) {
  EXPECT_EQ(recommend_threshold(1e9, 100us, 50us, 2.0), 300'000u);
}

TEST(RecommendThreshold, RoundsUp) {
  EXPECT_EQ(recommend_threshold(1e9, 1ns, 0ns, 1.5), 2u);
  EXPECT_EQ(recommend_threshold(3.0, 1s, 0ns, 1.0), 3u);
}

TEST(RecommendThreshold, RejectsBadInputs) {
  EXPECT_THROW(recommend_threshold(0.0, 1ms, 0ns, 1.0), Error);
  EXPECT_THROW(recommend_threshold(1e9, 0ns, 0ns, 1.0), Error);
  EXPECT_THROW(recommend_threshold(1e9, 1ms, -1ns, 1.0), Error);
  EXPECT_THROW(recommend_threshold(1e9, 1ms, 0ns, 0.99), Error);
  EXPECT_THROW(recommend_threshold(std::nan(""), 1ms, 0ns, 1.0), Error);
}

// Monotone in every argument: grid over small values, compare neighbours.
TEST(RecommendThreshold, MonotoneInEachArgument) {
  const double rates[] = {1.0, 7.5, 1e3, 2.6e9, 4e9};
  const nanoseconds periods[] = {1ns, 999ns, 100us, 1ms};
  const nanoseconds latencies[] = {0ns, 1ns, 50us, 2ms};
  const double margins[] = {1.0, 1.25, 2.0, 3.0};
  for (double r : rates) {
    for (auto p : periods) {
      for (auto l : latencies) {
        for (double m : margins) {
          const auto base = recommend_threshold(r, p, l, m);
          EXPECT_GE(recommend_threshold(r * 1.5, p, l, m), base);
          EXPECT_GE(recommend_threshold(r, p + 1ns, l, m), base);
          EXPECT_GE(recommend_threshold(r, p, l + 1ns, m), base);
          EXPECT_GE(recommend_threshold(r, p, l, m + 0.5), base);
        }
      }
    }
  }
}

TEST(ScriptedProbeTest, PeakRateIsDeltaOverTick) {
  ScriptedProbe probe({2600}, /*tick_us=*/1, /*latency=*/0);
  EXPECT_EQ(measure_peak_rate(probe, 100ms), 2.6e9);
  ScriptedProbe slow({3}, 10, 0);
  EXPECT_EQ(measure_peak_rate(slow, 200ms), 300'000.0);
}

TEST(ScriptedProbeTest, PeakRateKeepsTheMax) {
  // An uneven cycle gives windows slightly different totals. The peak is
  // positive and bounded by the largest per-tick delta.
  ScriptedProbe probe({5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 1}, 1, 0);
  const double first = measure_peak_rate(probe, 100ms);
  const double second = measure_peak_rate(probe, 100ms);
  EXPECT_GT(first, 0.0);
  EXPECT_GT(second, 0.0);
  EXPECT_LE(first, 5e6);
}

TEST(ScriptedProbeTest, LatencyIsLTimesTau) {
  for (std::uint64_t latency : {0u, 1u, 3u, 17u}) {
    ScriptedProbe probe({4}, 25, latency);
    EXPECT_EQ(measure_monitor_latency(probe, 30),
              nanoseconds(latency * 25'000))
        << latency;
  }
}

TEST(ScriptedProbeTest, MoreSamplesNeverLowerTheMax) {
  ScriptedProbe a({4}, 5, 2);
  ScriptedProbe b({4}, 5, 2);
  EXPECT_GE(measure_monitor_latency(b, 300), measure_monitor_latency(a, 30));
}

TEST(ScriptedProbeTest, PreconditionsEnforced) {
  ScriptedProbe probe({1}, 1, 0);
  EXPECT_THROW(measure_peak_rate(probe, 99ms), Error);
  EXPECT_THROW(measure_monitor_latency(probe, 29), Error);
  EXPECT_THROW(ScriptedProbe({}, 1, 0), Error);
}

// Scripted calibration: rate = 3 per 10 us = 3e5/s, latency 2 ticks = 20 us,
// period 1 ms, margin 2: ceil(3e5 * 1.02e-3 * 2) = 612.
TEST(Calibrate, ScriptedEndToEnd) {
  ScriptedProbe probe({3}, 10, 2);
  const auto report = calibrate(probe, 100ms, 30, 1ms, 2.0);
  EXPECT_EQ(report.peak_rate, 300'000.0);
  EXPECT_EQ(report.monitor_latency, 20us);
  EXPECT_EQ(report.check_period, 1ms);
  EXPECT_EQ(report.recommended_threshold, 612u);
  EXPECT_TRUE(check_report(report).empty());
}

TEST(Report, RoundTrip) {
  CalibrationReport report{.peak_rate = 2.345678901234e9,
                           .monitor_latency = 123'456ns,
                           .check_period = 1ms,
                           .safety_margin = 2.0,
                           .recommended_threshold = 0};
  report.recommended_threshold =
      recommend_threshold(report.peak_rate, report.check_period,
                          report.monitor_latency, report.safety_margin);
  std::stringstream io;
  write_report(io, report);
  EXPECT_NE(io.str().find("monitor_latency=0.000123456\n"), std::string::npos);
  EXPECT_NE(io.str().find("check_period=0.001000000\n"), std::string::npos);
  EXPECT_EQ(read_report(io), report);
}

TEST(Report, CheckDetectsInconsistency) {
  CalibrationReport report{.peak_rate = 1e9,
                           .monitor_latency = 50us,
                           .check_period = 100us,
                           .safety_margin = 2.0,
                           .recommended_threshold = 300'001};
  EXPECT_EQ(check_report(report).size(), 1u);
  report.recommended_threshold = 300'000;
  EXPECT_TRUE(check_report(report).empty());
  report.safety_margin = 0.5;
  EXPECT_FALSE(check_report(report).empty());
}

TEST(Report, RejectsMalformed) {
  for (const char* text : {"peak_rate=1\n", "garbage\n",
                           "peak_rate=x\nmonitor_latency=0.1\ncheck_period=0.1\n"
                           "safety_margin=1\nrecommended_threshold=1\n",
                           "peak_rate=1\nmonitor_latency=0.1234567890\n"
                           "check_period=0.1\nsafety_margin=1\n"
                           "recommended_threshold=1\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(read_report(in), Error) << text;
  }
  EXPECT_THROW(load_report("/nonexistent/report.txt"), Error);
}

// Sufficiency: take a discretised trail whose per-tick delta never exceeds
// r (tick = 1 us, so peak_rate = r * 1e6 /s) and suspend latency L ticks.
// The recommended threshold at margin 1 must make every schedule safe.
TEST(Sufficiency, RecommendedThresholdIsExhaustivelySafe) {
  struct Case {
    std::vector<InstructionCount> alphabet;
    std::uint64_t ticks, period, latency;
  };
  const Case cases[] = {
      {{0, 1, 2}, 6, 1, 1}, {{0, 2}, 7, 2, 0}, {{0, 1, 3}, 5, 1, 2},
      {{0, 1}, 8, 3, 1},    {{0, 4}, 7, 1, 0},
  };
  for (const auto& c : cases) {
    const double rate =
        static_cast<double>(*std::max_element(c.alphabet.begin(),
                                              c.alphabet.end())) * 1e6;
    const auto threshold = recommend_threshold(
        rate, std::chrono::microseconds(c.period),
        std::chrono::microseconds(c.latency), 1.0);
    const auto result =
        sim::exhaustive_check(c.alphabet, c.ticks, c.period, c.latency, threshold);
    EXPECT_TRUE(result.safe) << "threshold " << threshold;
  }
}

// ---- OS backend -----------------------------------------------------------

TEST(ProcessProbeTest, MeasuresPositiveRateAndLatency) {
  const auto event = testing::os_counter_event();
  if (!event) GTEST_SKIP() << "no per-process counter available";
  ProcessProbe probe(*event);
  EXPECT_GT(measure_peak_rate(probe, 100ms), 0.0);
  EXPECT_GT(measure_monitor_latency(probe, 30).count(), 0);
}

}  // namespace
}  // namespace softlockstep
