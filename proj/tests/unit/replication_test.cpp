// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "softlockstep/error.hpp"
#include "softlockstep/replication.hpp"
#include "test_support.hpp"
#include "workloads.hpp"

namespace softlockstep {
namespace {

using namespace std::chrono_literals;

class Replication : public ::testing::Test {
 protected:
  void SetUp() override {
    event_ = testing::os_counter_event();
    if (!event_) GTEST_SKIP() << "no per-process counter available";
    config_.threshold_instructions = 1;
  }

  std::unique_ptr<ProcessSession> spawn(const WrappedComputation& fn,
                                        const PayloadSpec& payload) {
    return spawn_replicas(fn, payload, config_, *event_);
  }

  // Lets the trail run and waits until both replicas have exited.
  static void finish(ProcessSession& session) {
    auto& p = session.progress();
    p.resume(session.trail());
    for (int i = 0; i < 10'000; ++i) {
      if (p.is_terminated(session.head()) && p.is_terminated(session.trail())) {
        return;
      }
      std::this_thread::sleep_for(1ms);
    }
    FAIL() << "replicas did not terminate";
  }

  std::optional<CounterEvent> event_;
  MonitorConfig config_;
};

TEST_F(Replication, MatmulTrailStaysAtZeroUntilResumed) {
  auto instance =
      workloads::make_instance({workloads::Kind::kMatmul, 64}, /*seed=*/3);
  auto session = spawn(instance.computation, instance.payload());
  auto& p = session->progress();
  for (int i = 0; i < 5; ++i) {
    std::this_thread::sleep_for(2ms);
    EXPECT_EQ(p.read_count(session->trail()), 0u);
  }
  finish(*session);
  EXPECT_EQ(collect_outputs(*session, Role::kHead),
            collect_outputs(*session, Role::kTrail));
}

TEST_F(Replication, EmptyPayload) {
  auto session = spawn([](auto, auto) { return true; }, PayloadSpec{});
  finish(*session);
  EXPECT_TRUE(session->progress().is_terminated(session->head())->ok());
  EXPECT_TRUE(session->progress().is_terminated(session->trail())->ok());
  EXPECT_TRUE(collect_outputs(*session, Role::kHead).empty());
}

TEST_F(Replication, CopyFidelitySingleByte) {
  const auto input = testing::bytes_of({0x5A});
  PayloadSpec payload;
  payload.inputs.push_back({input, 1});
  payload.output_sizes = {1};
  auto session = spawn(testing::copy_wrapper, payload);
  finish(*session);
  for (Role role : {Role::kHead, Role::kTrail}) {
    const auto out = collect_outputs(*session, role);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0], input);
  }
}

TEST_F(Replication, IdentityTimesMatrix) {
  constexpr std::size_t n = 8;
  std::vector<double> identity(n * n, 0.0);
  std::vector<double> m(n * n);
  for (std::size_t i = 0; i < n; ++i) identity[i * n + i] = 1.0;
  for (std::size_t i = 0; i < n * n; ++i) m[i] = 0.25 * static_cast<double>(i) - 3.0;
  const auto as_bytes = [](const std::vector<double>& v) {
    return std::span<const std::byte>(
        reinterpret_cast<const std::byte*>(v.data()), v.size() * sizeof(double));
  };
  PayloadSpec payload;
  payload.inputs.push_back({as_bytes(identity), n * n * sizeof(double)});
  payload.inputs.push_back({as_bytes(m), n * n * sizeof(double)});
  payload.output_sizes = {n * n * sizeof(double)};
  auto session = spawn(workloads::matrix_multiply_wrapper, payload);
  finish(*session);
  const auto out = collect_outputs(*session, Role::kHead);
  const auto expected = as_bytes(m);
  EXPECT_TRUE(std::equal(out[0].begin(), out[0].end(), expected.begin(),
                         expected.end()));
}

TEST_F(Replication, ZeroLengthOutputEntry) {
  const auto input = testing::bytes_of({1, 2, 3});
  PayloadSpec payload;
  payload.inputs.push_back({input, 3});
  payload.output_sizes = {0, 3};
  auto session = spawn(
      [](std::span<const ConstBuffer> in, std::span<const MutableBuffer> out) {
        std::copy(in[0].begin(), in[0].end(), out[1].begin());
        return out[0].empty();
      },
      payload);
  finish(*session);
  const auto out = collect_outputs(*session, Role::kTrail);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_TRUE(out[0].empty());
  EXPECT_EQ(out[1], input);
}

TEST_F(Replication, OutputsAreZeroInitialised) {
  PayloadSpec payload;
  payload.output_sizes = {64};
  auto session = spawn([](auto, auto) { return true; }, payload);
  finish(*session);
  const auto out = collect_outputs(*session, Role::kHead);
  EXPECT_TRUE(std::all_of(out[0].begin(), out[0].end(),
                          [](std::byte b) { return b == std::byte{0}; }));
}

TEST_F(Replication, CallerMutationAfterSpawnIsInvisible) {
  auto input = testing::random_bytes(256, 5);
  const auto original = input;
  PayloadSpec payload;
  payload.inputs.push_back({input, input.size()});
  payload.output_sizes = {input.size()};
  auto session = spawn(testing::copy_wrapper, payload);
  std::fill(input.begin(), input.end(), std::byte{0xEE});
  finish(*session);
  EXPECT_EQ(collect_outputs(*session, Role::kHead)[0], original);
  EXPECT_EQ(collect_outputs(*session, Role::kTrail)[0], original);
}

// Canary: the head stamps its output before the trail starts. If any byte
// of it reached the trail's region the trail would see a non-zero output at
// entry and report failure.
TEST_F(Replication, ReplicaRegionsAreDisjoint) {
  PayloadSpec payload;
  payload.output_sizes = {128};
  auto session = spawn(
      [](auto, std::span<const MutableBuffer> out) {
        const bool clean = std::all_of(out[0].begin(), out[0].end(),
                                       [](std::byte b) { return b == std::byte{0}; });
        std::fill(out[0].begin(), out[0].end(), std::byte{0xC3});
        return clean;
      },
      payload);
  auto& p = session->progress();
  for (int i = 0; i < 5000 && !p.is_terminated(session->head()); ++i) {
    std::this_thread::sleep_for(1ms);
  }
  ASSERT_TRUE(p.is_terminated(session->head()));
  finish(*session);
  EXPECT_NO_THROW(collect_outputs(*session, Role::kTrail));
  EXPECT_EQ(collect_outputs(*session, Role::kTrail)[0],
            std::vector<std::byte>(128, std::byte{0xC3}));
}

TEST_F(Replication, CrashSurfacesAsReplicaFailure) {
  PayloadSpec payload;
  payload.output_sizes = {4};
  auto session = spawn([](auto, auto) -> bool { std::abort(); }, payload);
  finish(*session);
  const auto exit = session->progress().is_terminated(session->head());
  ASSERT_TRUE(exit);
  EXPECT_EQ(exit->kind, ExitKind::kCrash);
  try {
    collect_outputs(*session, Role::kHead);
    FAIL() << "expected ReplicaFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kReplicaFailure);
  }
}

TEST_F(Replication, WrapperFailureIsNonzeroExit) {
  auto session = spawn([](auto, auto) { return false; }, PayloadSpec{});
  finish(*session);
  const auto exit = session->progress().is_terminated(session->trail());
  ASSERT_TRUE(exit);
  EXPECT_EQ(exit->kind, ExitKind::kNonzeroExit);
}

TEST_F(Replication, CollectWhileRunningIsIncomplete) {
  PayloadSpec payload;
  payload.output_sizes = {1};
  auto session = spawn(testing::busy_wrapper(1ull << 40), payload);
  try {
    collect_outputs(*session, Role::kTrail);
    FAIL() << "expected Incomplete";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIncomplete);
  }
}

TEST_F(Replication, ReleaseReapsSuspendedTrailAndIsIdempotent) {
  PayloadSpec payload;
  payload.output_sizes = {1};
  auto session = spawn(testing::busy_wrapper(1ull << 40), payload);
  const pid_t head = session->pid(Role::kHead);
  const pid_t trail = session->pid(Role::kTrail);
  release_session(*session);
  EXPECT_TRUE(session->released());
  release_session(*session);
  // Both children are reaped: they are no longer our children.
  EXPECT_EQ(waitpid(head, nullptr, WNOHANG), -1);
  EXPECT_EQ(waitpid(trail, nullptr, WNOHANG), -1);
}

TEST_F(Replication, ReleaseAfterNormalCompletion) {
  auto session = spawn([](auto, auto) { return true; }, PayloadSpec{});
  finish(*session);
  const pid_t head = session->pid(Role::kHead);
  release_session(*session);
  EXPECT_EQ(waitpid(head, nullptr, WNOHANG), -1);
}

TEST_F(Replication, RejectsBadPayloadAndConfig) {
  std::vector<std::byte> data(4);
  PayloadSpec payload;
  payload.inputs.push_back({data, 3});
  EXPECT_THROW(spawn(testing::copy_wrapper, payload), Error);
  MonitorConfig bad;
  EXPECT_THROW(spawn_replicas(testing::copy_wrapper, PayloadSpec{}, bad, *event_),
               Error);
}

TEST_F(Replication, UnknownCoreIsPinningFailure) {
  config_.head_core = CoreId{100'000};
  try {
    spawn([](auto, auto) { return true; }, PayloadSpec{});
    FAIL() << "expected PinningFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPinningFailure);
  }
}

TEST(RunDirect, ProducesWrapperOutputs) {
  const auto input = testing::bytes_of({9, 8, 7});
  PayloadSpec payload;
  payload.inputs.push_back({input, 3});
  payload.output_sizes = {5};
  const auto out = run_direct(testing::copy_wrapper, payload);
  EXPECT_EQ(out[0], testing::bytes_of({9, 8, 7, 0, 0}));
}

TEST(ScriptedSessionTest, RunsWrapperOnPrivateCopies) {
  auto input = testing::bytes_of({1, 2});
  PayloadSpec payload;
  payload.inputs.push_back({input, 2});
  payload.output_sizes = {2};
  ScriptedScenario scenario;
  scenario.head_deltas = {1};
  scenario.trail_deltas = {1};
  ScriptedSession session(testing::copy_wrapper, payload, scenario);
  input[0] = std::byte{99};
  EXPECT_THROW(session.collect_outputs(Role::kHead), Error);  // not finished
  session.source().advance(1);
  EXPECT_EQ(session.collect_outputs(Role::kHead)[0], testing::bytes_of({1, 2}));
}

}  // namespace
}  // namespace softlockstep
