// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <signal.h>
#include <unistd.h>

#include <chrono>
#include <sstream>
#include <thread>

#include "softlockstep/error.hpp"
#include "softlockstep/perf_counter.hpp"
#include "softlockstep/progress.hpp"
#include "softlockstep/replication.hpp"
#include "test_support.hpp"

namespace softlockstep {
namespace {

using namespace std::chrono_literals;

TEST(ScriptedSource, SumsDeltas) {
  ScriptedSource source;
  auto h = source.add_replica(Role::kHead, {10, 10, 10});
  source.advance(2);
  EXPECT_EQ(source.read_count(h), 20u);
}

TEST(ScriptedSource, FreshReplicaReadsZero) {
  ScriptedSource source;
  auto h = source.add_replica(Role::kHead, {5, 5});
  EXPECT_EQ(source.read_count(h), 0u);
  EXPECT_FALSE(source.is_terminated(h).has_value());
}

TEST(ScriptedSource, HandlesAreDistinct) {
  ScriptedSource source;
  auto a = source.add_replica(Role::kHead, {1});
  auto b = source.add_replica(Role::kTrail, {1});
  EXPECT_NE(a.replica_id, b.replica_id);
  ReplicaHandle bogus{99, Role::kHead, 42};
  EXPECT_THROW(source.read_count(bogus), Error);
}

TEST(ScriptedSource, SuspendWithLatencyFreezesAfterLTicks) {
  ScriptedSource source;
  auto h = source.add_replica(Role::kTrail, std::vector<InstructionCount>(20, 7),
                              std::nullopt, 2);
  source.advance(3);  // tick 3, count 21
  source.suspend(h);  // k = 3, L = 2: ticks 4 and 5 still run
  source.advance(1);
  EXPECT_EQ(source.read_count(h), 28u);
  source.advance(1);
  EXPECT_EQ(source.read_count(h), 35u);
  EXPECT_TRUE(source.effectively_suspended(h));
  for (int i = 0; i < 5; ++i) {
    source.advance(1);
    EXPECT_EQ(source.read_count(h), 35u);
  }
}

TEST(ScriptedSource, SuspendIsIdempotent) {
  ScriptedSource source;
  auto h = source.add_replica(Role::kTrail, std::vector<InstructionCount>(20, 1),
                              std::nullopt, 3);
  source.advance(2);
  source.suspend(h);
  source.advance(1);
  source.suspend(h);  // must not push the freeze point further out
  source.advance(2);
  EXPECT_EQ(source.read_count(h), 5u);
  source.advance(3);
  EXPECT_EQ(source.read_count(h), 5u);
}

TEST(ScriptedSource, ResumeAppliesFromNextTick) {
  ScriptedSource source;
  auto t = source.add_replica(Role::kTrail, {4, 4, 4, 4}, std::nullopt, 0,
                              /*start_suspended=*/true);
  source.advance(3);
  EXPECT_EQ(source.read_count(t), 0u);
  source.resume(t);  // k = 3
  source.resume(t);  // idempotent
  EXPECT_EQ(source.read_count(t), 0u);
  source.advance(1);
  EXPECT_EQ(source.read_count(t), 4u);
}

TEST(ScriptedSource, ResumeCancelsPendingSuspend) {
  ScriptedSource source;
  auto t = source.add_replica(Role::kTrail, std::vector<InstructionCount>(10, 1),
                              std::nullopt, 2);
  source.suspend(t);
  source.resume(t);
  source.advance(6);
  EXPECT_EQ(source.read_count(t), 6u);
}

TEST(ScriptedSource, ExhaustedStreamTerminates) {
  ScriptedSource source;
  auto h = source.add_replica(Role::kHead, {1, 2});
  source.advance(2);
  auto exit = source.is_terminated(h);
  ASSERT_TRUE(exit.has_value());
  EXPECT_TRUE(exit->ok());
  source.advance(5);
  EXPECT_EQ(source.read_count(h), 3u);
  source.suspend(h);  // terminal: documented no-op
  source.resume(h);
}

TEST(ScriptedSource, LengthCapsCountAndTerminates) {
  ScriptedSource source;
  auto h = source.add_replica(Role::kHead, {4, 4, 4, 4}, InstructionCount{10});
  source.advance(2);
  EXPECT_FALSE(source.is_terminated(h));
  source.advance(1);
  EXPECT_EQ(source.read_count(h), 10u);
  EXPECT_TRUE(source.is_terminated(h));
}

TEST(ScriptedSource, KillIsCrash) {
  ScriptedSource source;
  auto h = source.add_replica(Role::kHead, {1, 1, 1});
  source.kill(h);
  auto exit = source.is_terminated(h);
  ASSERT_TRUE(exit);
  EXPECT_EQ(exit->kind, ExitKind::kCrash);
}

TEST(ScriptedSource, TickerAdvancesPeriodOverTick) {
  ScriptedSource source(10);
  source.add_replica(Role::kHead, std::vector<InstructionCount>(100, 1));
  source.wait(50us);
  EXPECT_EQ(source.current_tick(), 5u);
  EXPECT_EQ(source.now_ns(), 50'000);
  source.wait(1us);  // rounds up to one tick
  EXPECT_EQ(source.current_tick(), 6u);
}

// Property: read_count is non-decreasing under arbitrary interleavings of
// suspend, resume and advance.
TEST(ScriptedSource, MonotonicUnderRandomControl) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    ScriptedSource source;
    std::vector<InstructionCount> deltas(200);
    for (auto& d : deltas) d = rng() % 5;
    auto h = source.add_replica(Role::kTrail, deltas, std::nullopt, rng() % 3,
                                rng() % 2);
    InstructionCount last = 0;
    for (int step = 0; step < 150; ++step) {
      switch (rng() % 3) {
        case 0: source.suspend(h); break;
        case 1: source.resume(h); break;
        default: break;
      }
      source.advance(1);
      const auto now = source.read_count(h);
      ASSERT_GE(now, last);
      last = now;
    }
  }
}

TEST(Scenario, ParsesKeysAndEmptyCells) {
  std::istringstream in(
      "# a plain comment\n"
      "# suspend_latency_ticks=2\n"
      "# tick_us=10\n"
      "# head_length=7\n"
      "tick,head_delta,trail_delta\n"
      "0,3,1\n"
      "1,4,\n"
      "2,,\n");
  const auto s = read_scenario(in);
  EXPECT_EQ(s.head_deltas, (std::vector<InstructionCount>{3, 4}));
  EXPECT_EQ(s.trail_deltas, (std::vector<InstructionCount>{1}));
  EXPECT_EQ(s.suspend_latency_ticks, 2u);
  EXPECT_EQ(s.tick_us, 10u);
  EXPECT_EQ(s.head_length, InstructionCount{7});
  EXPECT_FALSE(s.trail_length.has_value());
}

TEST(Scenario, WriteReadRoundTrip) {
  ScriptedScenario s;
  s.head_deltas = {1, 2, 3, 4};
  s.trail_deltas = {5, 6};
  s.trail_length = 9;
  s.suspend_latency_ticks = 1;
  s.tick_us = 100;
  std::ostringstream out;
  write_scenario(out, s);
  std::istringstream in(out.str());
  EXPECT_EQ(read_scenario(in), s);
}

TEST(Scenario, RejectsMalformedInput) {
  const char* bad[] = {
      "",
      "tick,head,trail\n0,1,1\n",
      "tick,head_delta,trail_delta\n1,1,1\n",
      "tick,head_delta,trail_delta\n0,1\n",
      "tick,head_delta,trail_delta\n0,x,1\n",
      "tick,head_delta,trail_delta\n0,-1,1\n",
      "tick,head_delta,trail_delta\n0,,1\n1,2,1\n",
      "# bogus=1\ntick,head_delta,trail_delta\n",
      "# tick_us=0\ntick,head_delta,trail_delta\n",
  };
  for (const char* text : bad) {
    std::istringstream in(text);
    try {
      read_scenario(in);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kParseError) << text;
    }
  }
  EXPECT_THROW(load_scenario("/nonexistent/scenario.csv"), Error);
}

TEST(PerfCounter, UnavailableReasonCarriesRemediation) {
  const auto reason = counter_unavailable_reason(CounterEvent::kRetiredInstructions);
  if (reason.empty()) GTEST_SKIP() << "hardware counter available";
  const bool mentions_fix =
      reason.find("perf_event_paranoid") != std::string::npos ||
      reason.find("CAP_PERFMON") != std::string::npos ||
      reason.find("task-clock") != std::string::npos;
  EXPECT_TRUE(mentions_fix) << reason;
}

// ---- OS backend, exercised through a real session ------------------------

class OsProgress : public ::testing::Test {
 protected:
  void SetUp() override {
    event_ = testing::os_counter_event();
    if (!event_) GTEST_SKIP() << "no per-process counter available";
  }
  std::unique_ptr<ProcessSession> spawn_busy(std::uint64_t iterations) {
    MonitorConfig config;
    config.threshold_instructions = 1;
    PayloadSpec payload;
    payload.output_sizes = {1};
    return spawn_replicas(testing::busy_wrapper(iterations), payload, config,
                          *event_);
  }
  std::optional<CounterEvent> event_;
};

TEST_F(OsProgress, TrailCreatedStoppedReadsZero) {
  auto session = spawn_busy(1ull << 40);
  auto& p = session->progress();
  std::this_thread::sleep_for(20ms);
  EXPECT_EQ(p.read_count(session->trail()), 0u);
  EXPECT_GT(p.read_count(session->head()), 0u);
  EXPECT_EQ(p.backend_name(),
            *event_ == CounterEvent::kTaskClock ? "os:task-clock" : "os");
}

TEST_F(OsProgress, ReadsAreMonotonicUnderStress) {
  auto session = spawn_busy(1ull << 40);
  auto& p = session->progress();
  InstructionCount last = 0;
  for (int i = 0; i < 10'000; ++i) {
    const auto now = p.read_count(session->head());
    ASSERT_GE(now, last);
    last = now;
  }
}

TEST_F(OsProgress, SuspendedCountDoesNotDrift) {
  auto session = spawn_busy(1ull << 40);
  auto& p = session->progress();
  const auto& h = session->head();
  p.suspend(h);
  p.suspend(h);  // idempotent
  std::this_thread::sleep_for(10ms);
  const auto a = p.read_count(h);
  std::this_thread::sleep_for(10ms);
  const auto b = p.read_count(h);
  EXPECT_EQ(a, b);
}

TEST_F(OsProgress, ResumeRestoresProgress) {
  auto session = spawn_busy(1ull << 40);
  auto& p = session->progress();
  const auto& t = session->trail();
  p.resume(t);
  p.resume(t);  // idempotent
  std::this_thread::sleep_for(5ms);
  p.suspend(t);
  std::this_thread::sleep_for(5ms);
  const auto before = p.read_count(t);
  p.resume(t);
  // One shared CPU under a parallel test run: poll instead of a fixed sleep.
  const auto deadline = std::chrono::steady_clock::now() + 5s;
  while (p.read_count(t) == before && std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(1ms);
  }
  EXPECT_GT(p.read_count(t), before);
}

TEST_F(OsProgress, NormalExitIsSuccess) {
  auto session = spawn_busy(1000);
  auto& p = session->progress();
  p.resume(session->trail());
  for (int i = 0; i < 2000 && !(p.is_terminated(session->trail()) &&
                                 p.is_terminated(session->head()));
       ++i) {
    std::this_thread::sleep_for(1ms);
  }
  auto exit = p.is_terminated(session->head());
  ASSERT_TRUE(exit);
  EXPECT_TRUE(exit->ok());
  ASSERT_TRUE(p.is_terminated(session->trail()));
  // Terminated but not reaped by release: counts are still readable and
  // job-control calls are documented no-ops.
  EXPECT_NO_THROW(p.read_count(session->head()));
  EXPECT_NO_THROW(p.suspend(session->head()));
}

TEST_F(OsProgress, KillIsReportedAsCrash) {
  auto session = spawn_busy(1ull << 40);
  auto& p = session->progress();
  p.kill(session->head());
  std::optional<ExitStatus> exit;
  for (int i = 0; i < 2000 && !exit; ++i) {
    exit = p.is_terminated(session->head());
    if (!exit) std::this_thread::sleep_for(1ms);
  }
  ASSERT_TRUE(exit);
  EXPECT_EQ(exit->kind, ExitKind::kCrash);
  EXPECT_EQ(exit->detail, SIGKILL);
}

TEST_F(OsProgress, ReleasedHandleIsStale) {
  auto session = spawn_busy(1ull << 40);
  const auto head = session->head();
  session->release();
  try {
    session->progress().read_count(head);
    FAIL() << "expected StaleHandle";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStaleHandle);
  }
}

}  // namespace
}  // namespace softlockstep
