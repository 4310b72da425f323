// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "softlockstep/core.hpp"
#include "softlockstep/integrity.hpp"
#include "softlockstep/monitor.hpp"
#include "softlockstep/perf_counter.hpp"
#include "softlockstep/sim.hpp"

namespace sl = softlockstep;

namespace {

void BM_CompareOutputs(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<std::byte>> a(1, std::vector<std::byte>(n));
  std::mt19937 rng(7);
  for (auto& b : a[0]) b = static_cast<std::byte>(rng());
  const auto b = a;
  const std::vector<std::size_t> sizes = {n};
  for (auto _ : state) {
    benchmark::DoNotOptimize(sl::compare_outputs(a, b, sizes));
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * n));
}
BENCHMARK(BM_CompareOutputs)->Range(64, 1 << 22);

void BM_Decide(benchmark::State& state) {
  sl::Staggering s = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sl::decide(s, 1000, (s & 1) ? sl::TrailState::kRunning
                                    : sl::TrailState::kSuspended));
    s = (s + 37) % 2000;
  }
}
BENCHMARK(BM_Decide);

sl::sim::Schedule random_schedule(std::uint64_t ticks) {
  std::mt19937_64 rng(11);
  sl::sim::Schedule s;
  s.ticks = ticks;
  s.head_deltas.resize(ticks);
  s.trail_deltas.resize(ticks);
  for (auto& d : s.head_deltas) d = rng() % 100;
  for (auto& d : s.trail_deltas) d = rng() % 100;
  s.period_ticks = 2;
  s.suspend_latency_ticks = 1;
  return s;
}

void BM_Simulate(benchmark::State& state) {
  const auto s = random_schedule(static_cast<std::uint64_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sl::sim::simulate(s, 300));
}
BENCHMARK(BM_Simulate)->Range(64, 1 << 14);

void BM_ExhaustiveCheck(benchmark::State& state) {
  const std::vector<sl::InstructionCount> alphabet = {0, 1, 2};
  for (auto _ : state) {
    benchmark::DoNotOptimize(sl::sim::exhaustive_check(alphabet, 6, 1, 1, 4));
  }
}
BENCHMARK(BM_ExhaustiveCheck)->Unit(benchmark::kMillisecond);

void BM_ScriptedLoop(benchmark::State& state) {
  const auto s = random_schedule(static_cast<std::uint64_t>(state.range(0)));
  const auto scenario = sl::sim::to_scenario(s);
  sl::MonitorConfig config;
  config.threshold_instructions = 300;
  config.check_period = std::chrono::microseconds(s.period_ticks);
  for (auto _ : state) {
    sl::ScriptedSource source;
    auto [head, trail] = sl::ScriptedSource::populate(source, scenario);
    benchmark::DoNotOptimize(
        sl::enforcement_loop(head, trail, source, source, config));
  }
}
BENCHMARK(BM_ScriptedLoop)->Range(64, 1 << 12);

void BM_CounterRead(benchmark::State& state) {
  const auto event = static_cast<sl::CounterEvent>(state.range(0));
  const auto reason = sl::counter_unavailable_reason(event);
  if (!reason.empty()) {
    state.SkipWithError(reason.c_str());
    return;
  }
  sl::PerfCounter counter(0, event);
  for (auto _ : state) benchmark::DoNotOptimize(counter.read());
}
BENCHMARK(BM_CounterRead)
    ->Arg(static_cast<int>(sl::CounterEvent::kRetiredInstructions))
    ->Arg(static_cast<int>(sl::CounterEvent::kTaskClock));

}  // namespace

BENCHMARK_MAIN();
