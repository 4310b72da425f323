// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include "softlockstep/perf_counter.hpp"

#include <linux/perf_event.h>
#include <sys/syscall.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <utility>

#include "softlockstep/error.hpp"

namespace softlockstep {

namespace {

int open_counter(pid_t pid, CounterEvent event) {
  perf_event_attr attr;
  std::memset(&attr, 0, sizeof attr);
  attr.size = sizeof attr;
  if (event == CounterEvent::kRetiredInstructions) {
    attr.type = PERF_TYPE_HARDWARE;
    attr.config = PERF_COUNT_HW_INSTRUCTIONS;
  } else {
    attr.type = PERF_TYPE_SOFTWARE;
    attr.config = PERF_COUNT_SW_TASK_CLOCK;
  }
  attr.exclude_kernel = 1;
  attr.exclude_hv = 1;
  return static_cast<int>(
      syscall(SYS_perf_event_open, &attr, pid, -1, -1, PERF_FLAG_FD_CLOEXEC));
}

std::string paranoid_level() {
  std::ifstream in("/proc/sys/kernel/perf_event_paranoid");
  std::string level;
  if (!(in >> level)) return "unknown";
  return level;
}

std::string remediation(CounterEvent event, int err) {
  std::string msg = "cannot open ";
  msg += to_string(event);
  msg += " counter: ";
  msg += std::strerror(err);
  msg += ". ";
  if (err == EACCES || err == EPERM) {
    msg += "Grant CAP_PERFMON (or run as root) or lower "
           "/proc/sys/kernel/perf_event_paranoid (currently " +
           paranoid_level() + ", needs <= 2 for user-mode counting).";
  } else if (err == ENOENT || err == EOPNOTSUPP || err == ENODEV) {
    msg += "The host exposes no hardware PMU for this event (typical inside "
           "virtual machines). Use '--backend os:task-clock' for a CPU-time "
           "proxy or '--backend scripted:<file>' for the deterministic "
           "backend.";
  } else if (err == ENOSYS) {
    msg += "The kernel was built without CONFIG_PERF_EVENTS.";
  } else {
    msg += "Check kernel.perf_event_paranoid and container seccomp policy.";
  }
  return msg;
}

}  // namespace

std::string_view to_string(CounterEvent event) {
  return event == CounterEvent::kRetiredInstructions ? "instructions"
                                                     : "task-clock";
}

PerfCounter::PerfCounter(pid_t pid, CounterEvent event)
    : fd_(open_counter(pid, event)) {
  if (fd_ < 0) {
    throw Error(ErrorCode::kCounterUnavailable, remediation(event, errno));
  }
}

PerfCounter::~PerfCounter() { close(); }

PerfCounter::PerfCounter(PerfCounter&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)) {}

PerfCounter& PerfCounter::operator=(PerfCounter&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

std::uint64_t PerfCounter::read() const {
  if (fd_ < 0) throw Error(ErrorCode::kStaleHandle, "counter is closed");
  std::uint64_t value = 0;
  if (::read(fd_, &value, sizeof value) != sizeof value) {
    throw Error(ErrorCode::kCounterUnavailable,
                std::string("counter read failed: ") + std::strerror(errno));
  }
  return value;
}

void PerfCounter::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

std::string counter_unavailable_reason(CounterEvent event) {
  const int fd = open_counter(0, event);
  if (fd < 0) return remediation(event, errno);
  ::close(fd);
  return {};
}

}  // namespace softlockstep
