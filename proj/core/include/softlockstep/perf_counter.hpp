// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sys/types.h>

#include <cstdint>
#include <string>
#include <string_view>

namespace softlockstep {

enum class CounterEvent {
  // User-mode retired instructions (PERF_COUNT_HW_INSTRUCTIONS).
  kRetiredInstructions,
  // Task CPU time in nanoseconds. Only a progress proxy for hosts that do
  // not expose a PMU (most VMs); never selected implicitly.
  kTaskClock,
};

std::string_view to_string(CounterEvent event);

// A perf_event counter attached to one process. Counting starts at open.
class PerfCounter {
 public:
  // Throws Error(kCounterUnavailable) with remediation text on failure.
  PerfCounter(pid_t pid, CounterEvent event);
  ~PerfCounter();

  PerfCounter(PerfCounter&& other) noexcept;
  PerfCounter& operator=(PerfCounter&& other) noexcept;
  PerfCounter(const PerfCounter&) = delete;
  PerfCounter& operator=(const PerfCounter&) = delete;

  std::uint64_t read() const;
  void close();
  bool is_open() const { return fd_ >= 0; }

 private:
  int fd_ = -1;
};

// Probes whether `event` can be opened for the calling process. Returns an
// empty string when available, otherwise the remediation message.
std::string counter_unavailable_reason(CounterEvent event);

}  // namespace softlockstep
