// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include "softlockstep/integrity.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <string>

#include "softlockstep/error.hpp"

namespace softlockstep {

namespace {

std::vector<std::string_view> split_colon(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(':', start);
    parts.push_back(text.substr(start, pos == std::string_view::npos
                                           ? std::string_view::npos
                                           : pos - start));
    if (pos == std::string_view::npos) return parts;
    start = pos + 1;
  }
}

std::uint64_t to_u64(std::string_view text, std::string_view what) {
  std::uint64_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end) {
    throw Error(ErrorCode::kParseError,
                "fault " + std::string(what) + ": bad number '" +
                    std::string(text) + "'");
  }
  return value;
}

Role to_role(std::string_view text) {
  if (text == "head") return Role::kHead;
  if (text == "trail") return Role::kTrail;
  throw Error(ErrorCode::kParseError,
              "fault target must be 'head' or 'trail', got '" +
                  std::string(text) + "'");
}

std::chrono::microseconds to_duration(std::string_view text) {
  std::uint64_t scale = 0;
  if (text.ends_with("us")) {
    scale = 1;
    text.remove_suffix(2);
  } else if (text.ends_with("ms")) {
    scale = 1000;
    text.remove_suffix(2);
  } else if (text.ends_with("s")) {
    scale = 1'000'000;
    text.remove_suffix(1);
  } else {
    throw Error(ErrorCode::kParseError,
                "freeze duration needs a unit (us, ms, s)");
  }
  return std::chrono::microseconds(
      static_cast<std::int64_t>(to_u64(text, "duration") * scale));
}

}  // namespace

FaultSpec parse_fault(std::string_view text) {
  const auto parts = split_colon(text);
  if (parts.size() < 2) {
    throw Error(ErrorCode::kParseError,
                "fault must look like kind:target[:args], got '" +
                    std::string(text) + "'");
  }
  FaultSpec fault;
  fault.target = to_role(parts[1]);
  if (parts[0] == "bitflip") {
    if (parts.size() != 5) {
      throw Error(ErrorCode::kParseError,
                  "bitflip needs bitflip:<role>:<output>:<byte>:<bit>");
    }
    const auto bit = to_u64(parts[4], "bit");
    if (bit > 7) {
      throw Error(ErrorCode::kInvalidCoordinates, "bit index must be 0..7");
    }
    fault.kind = BitFlip{.output_index = to_u64(parts[2], "output"),
                         .byte_offset = to_u64(parts[3], "byte"),
                         .bit_index = static_cast<unsigned>(bit)};
  } else if (parts[0] == "freeze") {
    if (parts.size() != 3) {
      throw Error(ErrorCode::kParseError, "freeze needs freeze:<role>:<duration>");
    }
    fault.kind = Freeze{to_duration(parts[2])};
  } else if (parts[0] == "crash") {
    if (parts.size() > 3) {
      throw Error(ErrorCode::kParseError,
                  "crash takes crash:<role>[:<instructions>]");
    }
    fault.kind = Crash{parts.size() == 3 ? to_u64(parts[2], "instructions") : 0};
  } else {
    throw Error(ErrorCode::kParseError,
                "unknown fault kind '" + std::string(parts[0]) + "'");
  }
  return fault;
}

std::string to_string(const FaultSpec& fault) {
  std::ostringstream out;
  const auto role = to_string(fault.target);
  if (const auto* flip = std::get_if<BitFlip>(&fault.kind)) {
    out << "bitflip:" << role << ':' << flip->output_index << ':'
        << flip->byte_offset << ':' << flip->bit_index;
  } else if (const auto* freeze = std::get_if<Freeze>(&fault.kind)) {
    out << "freeze:" << role << ':' << freeze->duration.count() << "us";
  } else {
    out << "crash:" << role << ':'
        << std::get<Crash>(fault.kind).after_instructions;
  }
  return out.str();
}

Verdict compare_outputs(std::span<const std::vector<std::byte>> a,
                        std::span<const std::vector<std::byte>> b,
                        std::span<const std::size_t> sizes) {
  if (a.size() != sizes.size() || b.size() != sizes.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "output lists disagree with the declared output count");
  }
  Mismatch mismatch;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (a[i].size() != sizes[i] || b[i].size() != sizes[i]) {
      throw Error(ErrorCode::kShapeMismatch,
                  "output " + std::to_string(i) +
                      " length disagrees with its declared size");
    }
    const auto [ia, ib] = std::mismatch(a[i].begin(), a[i].end(), b[i].begin());
    if (ia != a[i].end()) {
      mismatch.locations.push_back(
          {i, static_cast<std::size_t>(ia - a[i].begin())});
    }
  }
  if (mismatch.locations.empty()) return Match{};
  return mismatch;
}

void inject_fault(ReplicaSession& session, const FaultSpec& fault) {
  if (const auto* flip = std::get_if<BitFlip>(&fault.kind)) {
    const auto& sizes = session.output_sizes();
    if (flip->output_index >= sizes.size() ||
        flip->byte_offset >= sizes[flip->output_index] ||
        flip->bit_index > 7) {
      throw Error(ErrorCode::kInvalidCoordinates,
                  "bitflip " + to_string(fault) +
                      " lies outside the declared outputs");
    }
  } else if (const auto* freeze = std::get_if<Freeze>(&fault.kind)) {
    if (freeze->duration.count() <= 0) {
      throw Error(ErrorCode::kInvalidCoordinates,
                  "freeze duration must be positive");
    }
  }
  session.add_fault(fault);
}

}  // namespace softlockstep
