// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include "softlockstep/replication.hpp"

#include <sched.h>
#include <signal.h>
#include <sys/mman.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <string>

#include "softlockstep/error.hpp"

namespace softlockstep {

namespace {

constexpr std::size_t kBufferAlignment = 64;

std::size_t align_up(std::size_t value, std::size_t alignment) {
  return (value + alignment - 1) / alignment * alignment;
}

ExitStatus decode_wait_status(int status) {
  if (WIFEXITED(status)) {
    const int code = WEXITSTATUS(status);
    return ExitStatus{code == 0 ? ExitKind::kSuccess : ExitKind::kNonzeroExit,
                      code};
  }
  if (WIFSIGNALED(status)) return ExitStatus{ExitKind::kCrash, WTERMSIG(status)};
  return ExitStatus{ExitKind::kCrash, 0};
}

std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

void reap_blocking(pid_t pid) {
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
}

}  // namespace

OutputSet run_direct(const WrappedComputation& computation,
                     const PayloadSpec& payload) {
  std::vector<ConstBuffer> inputs;
  inputs.reserve(payload.inputs.size());
  for (const auto& item : payload.inputs) inputs.push_back(item.data);
  OutputSet outputs;
  for (auto size : payload.output_sizes) outputs.emplace_back(size);
  std::vector<MutableBuffer> views(outputs.begin(), outputs.end());
  if (!computation(inputs, views)) {
    throw Error(ErrorCode::kReplicaFailure, "wrapper reported failure");
  }
  return outputs;
}

OutputSet ReplicaSession::collect_outputs(Role role) {
  const auto& handle = role == Role::kHead ? head() : trail();
  const auto exit = progress().is_terminated(handle);
  if (!exit) {
    throw Error(ErrorCode::kIncomplete,
                std::string(to_string(role)) + " replica is still running");
  }
  if (!exit->ok()) {
    throw Error(ErrorCode::kReplicaFailure,
                std::string(to_string(role)) +
                    (exit->kind == ExitKind::kCrash ? " replica crashed"
                                                    : " replica exited nonzero"));
  }
  auto regions = output_regions(role);
  bool& flipped = flipped_[role == Role::kHead ? 0 : 1];
  if (!flipped) {
    for (const auto& fault : faults_) {
      const auto* flip = std::get_if<BitFlip>(&fault.kind);
      if (fault.target != role || flip == nullptr) continue;
      regions.at(flip->output_index)[flip->byte_offset] ^=
          std::byte{static_cast<unsigned char>(1u << flip->bit_index)};
    }
    flipped = true;
  }
  OutputSet out;
  out.reserve(regions.size());
  for (const auto& region : regions) out.emplace_back(region.begin(), region.end());
  return out;
}

ProcessSession::ProcessSession(std::vector<std::size_t> output_sizes,
                               CounterEvent event)
    : ReplicaSession(std::move(output_sizes)), event_(event) {}

ProcessSession::~ProcessSession() { release(); }

std::unique_ptr<ProcessSession> spawn_replicas(
    const WrappedComputation& computation, const PayloadSpec& payload,
    const MonitorConfig& config, CounterEvent event) {
  if (auto errors = validate_config(config); !errors.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "invalid config: " + errors[0]);
  }
  if (auto errors = validate_payload(payload); !errors.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "invalid payload: " + errors[0]);
  }

  std::unique_ptr<ProcessSession> session(
      new ProcessSession(payload.output_sizes, event));

  std::size_t cursor = kBufferAlignment;  // room for nothing but alignment
  for (const auto& item : payload.inputs) {
    session->input_offsets_.push_back(cursor);
    session->input_sizes_.push_back(item.length);
    cursor = align_up(cursor + item.length, kBufferAlignment);
  }
  for (auto size : payload.output_sizes) {
    session->output_offsets_.push_back(cursor);
    cursor = align_up(cursor + size, kBufferAlignment);
  }
  const std::size_t page = static_cast<std::size_t>(::sysconf(_SC_PAGESIZE));
  const std::size_t region_size = align_up(cursor, page);

  for (auto& replica : session->replicas_) {
    void* mem = ::mmap(nullptr, region_size, PROT_READ | PROT_WRITE,
                       MAP_SHARED | MAP_ANONYMOUS, -1, 0);
    if (mem == MAP_FAILED) {
      throw Error(ErrorCode::kSpawnFailure, errno_text("mmap"));
    }
    replica.region = ProcessSession::Region{static_cast<std::byte*>(mem), region_size};
    for (std::size_t i = 0; i < payload.inputs.size(); ++i) {
      if (payload.inputs[i].length > 0) {
        std::memcpy(replica.region.base + session->input_offsets_[i],
                    payload.inputs[i].data.data(), payload.inputs[i].length);
      }
    }
  }

  const std::optional<CoreId> cores[2] = {config.head_core, config.trail_core};
  static std::uint64_t next_id = 1;
  for (std::size_t r = 0; r < 2; ++r) {
    auto& self = session->replicas_[r];
    auto& other = session->replicas_[1 - r];
    std::fflush(nullptr);
    const pid_t pid = ::fork();
    if (pid < 0) {
      throw Error(ErrorCode::kSpawnFailure, errno_text("fork"));
    }
    if (pid == 0) {
      // Child: drop the sibling's region, stop, then run the wrapper on
      // our private copies once continued.
      ::munmap(other.region.base, other.region.size);
      if (other.counter) other.counter->close();
      std::vector<ConstBuffer> inputs;
      for (std::size_t i = 0; i < session->input_offsets_.size(); ++i) {
        inputs.emplace_back(self.region.base + session->input_offsets_[i],
                            session->input_sizes_[i]);
      }
      std::vector<MutableBuffer> outputs;
      const auto& sizes = session->output_sizes();
      for (std::size_t i = 0; i < sizes.size(); ++i) {
        outputs.emplace_back(self.region.base + session->output_offsets_[i],
                             sizes[i]);
      }
      ::raise(SIGSTOP);
      bool ok = false;
      try {
        ok = computation(inputs, outputs);
      } catch (...) {
        ok = false;
      }
      ::_exit(ok ? 0 : 1);
    }
    self.pid = pid;
    session->handles_[r] = ReplicaHandle{
        .replica_id = next_id++,
        .role = r == 0 ? Role::kHead : Role::kTrail,
        .native_id = pid};

    int status = 0;
    pid_t waited;
    while ((waited = ::waitpid(pid, &status, WUNTRACED)) < 0 && errno == EINTR) {
    }
    if (waited != pid || !WIFSTOPPED(status)) {
      if (waited == pid) {
        self.exit = decode_wait_status(status);
        self.reaped = true;
      }
      throw Error(ErrorCode::kSpawnFailure,
                  "replica did not reach its start barrier");
    }
    // Counting starts here, with the child parked before the wrapper.
    self.counter.emplace(pid, event);

    if (cores[r]) {
      cpu_set_t set;
      CPU_ZERO(&set);
      CPU_SET(cores[r]->value, &set);
      if (::sched_setaffinity(pid, sizeof set, &set) != 0) {
        throw Error(ErrorCode::kPinningFailure,
                    "cannot pin " + std::string(to_string(session->handles_[r].role)) +
                        " to core " + std::to_string(cores[r]->value) + ": " +
                        std::strerror(errno));
      }
    }
  }

  ::kill(session->replicas_[0].pid, SIGCONT);
  return session;
}

ProcessSession::Replica& ProcessSession::replica(const ReplicaHandle& handle) {
  if (released_) {
    throw Error(ErrorCode::kStaleHandle, "session has been released");
  }
  for (std::size_t i = 0; i < 2; ++i) {
    if (handles_[i] == handle) return replicas_[i];
  }
  throw Error(ErrorCode::kStaleHandle, "handle does not belong to session");
}

std::vector<MutableBuffer> ProcessSession::output_regions(Role role) {
  auto& self = replicas_[index(role)];
  std::vector<MutableBuffer> out;
  const auto& sizes = output_sizes();
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    out.emplace_back(self.region.base + output_offsets_[i], sizes[i]);
  }
  return out;
}

InstructionCount ProcessSession::read_count(const ReplicaHandle& handle) {
  auto& self = replica(handle);
  return self.counter->read();
}

// Signals to a reaped pid are skipped: the pid may already be reused.
void ProcessSession::suspend(const ReplicaHandle& handle) {
  auto& self = replica(handle);
  if (!self.reaped) ::kill(self.pid, SIGSTOP);
}

void ProcessSession::resume(const ReplicaHandle& handle) {
  auto& self = replica(handle);
  if (!self.reaped) ::kill(self.pid, SIGCONT);
}

void ProcessSession::kill(const ReplicaHandle& handle) {
  auto& self = replica(handle);
  if (!self.reaped) ::kill(self.pid, SIGKILL);
}

std::optional<ExitStatus> ProcessSession::is_terminated(
    const ReplicaHandle& handle) {
  auto& self = replica(handle);
  if (self.exit) return self.exit;
  int status = 0;
  const pid_t waited = ::waitpid(self.pid, &status, WNOHANG);
  if (waited == self.pid) {
    self.exit = decode_wait_status(status);
    self.reaped = true;
  }
  return self.exit;
}

std::string_view ProcessSession::backend_name() const {
  return event_ == CounterEvent::kRetiredInstructions ? "os" : "os:task-clock";
}

void ProcessSession::release() noexcept {
  if (released_) return;
  for (auto& self : replicas_) {
    if (self.pid > 0 && !self.reaped) {
      ::kill(self.pid, SIGKILL);
      reap_blocking(self.pid);
      self.reaped = true;
    }
    if (self.counter) self.counter->close();
    if (self.region.base != nullptr) {
      if (::munmap(self.region.base, self.region.size) != 0) {
        std::cerr << "softlockstep: munmap failed: " << std::strerror(errno)
                  << '\n';
      }
      self.region = {};
    }
  }
  released_ = true;
}

ScriptedSession::ScriptedSession(WrappedComputation computation,
                                 const PayloadSpec& payload,
                                 const ScriptedScenario& scenario)
    : ReplicaSession(payload.output_sizes),
      computation_(std::move(computation)),
      source_(scenario.tick_us) {
  if (auto errors = validate_payload(payload); !errors.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "invalid payload: " + errors[0]);
  }
  std::tie(head_, trail_) = ScriptedSource::populate(source_, scenario);
  for (auto& copy : copies_) {
    for (const auto& item : payload.inputs) {
      copy.inputs.emplace_back(item.data.begin(), item.data.end());
    }
    for (auto size : payload.output_sizes) copy.outputs.emplace_back(size);
  }
}

std::vector<MutableBuffer> ScriptedSession::output_regions(Role role) {
  auto& copy = copies_[role == Role::kHead ? 0 : 1];
  if (!copy.ran) {
    std::vector<ConstBuffer> inputs(copy.inputs.begin(), copy.inputs.end());
    std::vector<MutableBuffer> outputs(copy.outputs.begin(),
                                       copy.outputs.end());
    try {
      copy.ok = computation_(inputs, outputs);
    } catch (...) {
      copy.ok = false;
    }
    copy.ran = true;
  }
  if (!copy.ok) {
    throw Error(ErrorCode::kReplicaFailure,
                std::string(to_string(role)) + " wrapper reported failure");
  }
  return {copy.outputs.begin(), copy.outputs.end()};
}

OutputSet collect_outputs(ReplicaSession& session, Role role) {
  return session.collect_outputs(role);
}

void release_session(ReplicaSession& session) noexcept { session.release(); }

struct ScopedThreadAffinity::Saved {
  cpu_set_t mask;
};

ScopedThreadAffinity::ScopedThreadAffinity(std::optional<CoreId> core) {
  if (!core) return;
  auto saved = std::make_unique<Saved>();
  if (::sched_getaffinity(0, sizeof saved->mask, &saved->mask) != 0) {
    throw Error(ErrorCode::kPinningFailure, errno_text("sched_getaffinity"));
  }
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(core->value, &set);
  if (::sched_setaffinity(0, sizeof set, &set) != 0) {
    throw Error(ErrorCode::kPinningFailure,
                "cannot pin monitor to core " + std::to_string(core->value) +
                    ": " + std::strerror(errno));
  }
  saved_ = std::move(saved);
}

ScopedThreadAffinity::~ScopedThreadAffinity() {
  if (saved_) ::sched_setaffinity(0, sizeof saved_->mask, &saved_->mask);
}

}  // namespace softlockstep
