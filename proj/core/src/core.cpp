// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include "softlockstep/core.hpp"

#include <limits>
#include <sstream>

#include "softlockstep/error.hpp"

namespace softlockstep {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kOverflow: return "Overflow";
    case ErrorCode::kCounterUnavailable: return "CounterUnavailable";
    case ErrorCode::kStaleHandle: return "StaleHandle";
    case ErrorCode::kSpawnFailure: return "SpawnFailure";
    case ErrorCode::kPinningFailure: return "PinningFailure";
    case ErrorCode::kReplicaFailure: return "ReplicaFailure";
    case ErrorCode::kIncomplete: return "Incomplete";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kInvalidCoordinates: return "InvalidCoordinates";
    case ErrorCode::kEmptyTrace: return "EmptyTrace";
    case ErrorCode::kSearchSpaceTooLarge: return "SearchSpaceTooLarge";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(Role role) {
  return role == Role::kHead ? "head" : "trail";
}

std::vector<std::string> validate_config(const MonitorConfig& config) {
  std::vector<std::string> errors;
  if (config.threshold_instructions == 0) {
    errors.emplace_back("threshold must be positive");
  }
  if (config.check_period.count() <= 0) {
    errors.emplace_back("check period must be positive");
  }
  if (config.run_timeout && config.run_timeout->count() <= 0) {
    errors.emplace_back("run timeout must be positive when set");
  }
  const auto& h = config.head_core;
  const auto& t = config.trail_core;
  const auto& m = config.monitor_core;
  if ((h && t && *h == *t) || (h && m && *h == *m) || (t && m && *t == *m)) {
    errors.emplace_back("cores must be distinct");
  }
  for (const auto& core : {h, t, m}) {
    if (core && core->value < 0) {
      errors.emplace_back("core ids must be non-negative");
      break;
    }
  }
  return errors;
}

std::vector<std::string> validate_payload(const PayloadSpec& payload) {
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < payload.inputs.size(); ++i) {
    const auto& item = payload.inputs[i];
    if (item.length != item.data.size()) {
      std::ostringstream msg;
      msg << "input " << i << " declares " << item.length
          << " bytes but buffer holds " << item.data.size();
      errors.push_back(msg.str());
    }
  }
  return errors;
}

std::string_view to_string(Action action) {
  switch (action) {
    case Action::kNone: return "NONE";
    case Action::kSuspend: return "SUSPEND";
    case Action::kResume: return "RESUME";
    case Action::kHeadDone: return "HEAD_DONE";
    case Action::kTrailDone: return "TRAIL_DONE";
    case Action::kDiversityLoss: return "DIVERSITY_LOSS";
  }
  return "NONE";
}

std::optional<Action> parse_action(std::string_view text) {
  for (Action a : {Action::kNone, Action::kSuspend, Action::kResume,
                   Action::kHeadDone, Action::kTrailDone,
                   Action::kDiversityLoss}) {
    if (to_string(a) == text) return a;
  }
  return std::nullopt;
}

std::string describe(const Verdict& verdict) {
  struct Describer {
    std::string operator()(const Match&) const { return "MATCH"; }
    std::string operator()(const Mismatch& m) const {
      std::ostringstream out;
      out << "MISMATCH";
      for (const auto& loc : m.locations) {
        out << " (output " << loc.output_index << ", byte " << loc.byte_offset
            << ")";
      }
      return out.str();
    }
    std::string operator()(const ReplicaFailure& f) const {
      std::ostringstream out;
      out << "REPLICA_FAILURE " << to_string(f.role) << ' '
          << (f.cause == ReplicaFailureCause::kCrash ? "crash"
                                                     : "nonzero-exit");
      return out.str();
    }
    std::string operator()(const DiversityLoss& d) const {
      std::ostringstream out;
      out << "DIVERSITY_LOSS at interval " << d.sample.interval_index
          << " (staggering " << d.sample.staggering << ")";
      return out.str();
    }
    std::string operator()(const Timeout&) const { return "TIMEOUT"; }
  };
  return std::visit(Describer{}, verdict);
}

Staggering staggering(InstructionCount head_count,
                      InstructionCount trail_count) {
  constexpr auto kMax =
      static_cast<InstructionCount>(std::numeric_limits<Staggering>::max());
  if (head_count >= trail_count) {
    const InstructionCount diff = head_count - trail_count;
    if (diff > kMax) {
      throw Error(ErrorCode::kOverflow, "staggering exceeds int64 range");
    }
    return static_cast<Staggering>(diff);
  }
  const InstructionCount diff = trail_count - head_count;
  // -2^63 is representable, hence kMax + 1.
  if (diff > kMax + 1) {
    throw Error(ErrorCode::kOverflow, "staggering exceeds int64 range");
  }
  if (diff == kMax + 1) return std::numeric_limits<Staggering>::min();
  return -static_cast<Staggering>(diff);
}

Action decide(Staggering staggering, InstructionCount threshold,
              TrailState trail_state) {
  const bool below =
      staggering < 0 || static_cast<InstructionCount>(staggering) < threshold;
  if (below && trail_state == TrailState::kRunning) return Action::kSuspend;
  if (!below && trail_state == TrailState::kSuspended) return Action::kResume;
  return Action::kNone;
}

}  // namespace softlockstep
