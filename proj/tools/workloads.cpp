// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include "workloads.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <random>
#include <string>

#include "softlockstep/error.hpp"

namespace softlockstep::workloads {

WorkloadId parse_workload(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorCode::kParseError,
                "workload must be kind:parameter, e.g. matmul:400");
  }
  const auto kind = text.substr(0, colon);
  const auto arg = text.substr(colon + 1);
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), value);
  if (arg.empty() || ec != std::errc{} || ptr != arg.data() + arg.size() ||
      value == 0) {
    throw Error(ErrorCode::kParseError,
                "workload parameter must be a positive integer");
  }
  if (kind == "matmul") return {Kind::kMatmul, value};
  if (kind == "checksum") return {Kind::kChecksum, value};
  if (kind == "spin") return {Kind::kSpin, value};
  throw Error(ErrorCode::kParseError,
              "unknown workload '" + std::string(kind) + "'");
}

void matrix_multiply(const double* a, const double* b, double* c,
                     std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a[i * n + k];
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += aik * b[k * n + j];
    }
  }
}

bool matrix_multiply_wrapper(std::span<const ConstBuffer> inputs,
                             std::span<const MutableBuffer> outputs) {
  if (inputs.size() != 2 || outputs.size() != 1) return false;
  const std::size_t elems = inputs[0].size() / sizeof(double);
  const auto n = static_cast<std::size_t>(std::llround(std::sqrt(elems)));
  if (n * n * sizeof(double) != inputs[0].size() ||
      inputs[1].size() != inputs[0].size() ||
      outputs[0].size() != inputs[0].size()) {
    return false;
  }
  matrix_multiply(reinterpret_cast<const double*>(inputs[0].data()),
                  reinterpret_cast<const double*>(inputs[1].data()),
                  reinterpret_cast<double*>(outputs[0].data()), n);
  return true;
}

bool checksum_wrapper(std::span<const ConstBuffer> inputs,
                      std::span<const MutableBuffer> outputs) {
  if (inputs.size() != 1 || outputs.size() != 1 || outputs[0].size() != 16) {
    return false;
  }
  // FNV-1a and a multiplicative rolling hash.
  std::uint64_t fnv = 0xcbf29ce484222325ull;
  std::uint64_t roll = 0;
  for (std::byte b : inputs[0]) {
    const auto v = static_cast<std::uint64_t>(b);
    fnv = (fnv ^ v) * 0x100000001b3ull;
    roll = roll * 0x9e3779b97f4a7c15ull + v + 1;
  }
  std::memcpy(outputs[0].data(), &fnv, 8);
  std::memcpy(outputs[0].data() + 8, &roll, 8);
  return true;
}

bool spin_wrapper(std::span<const ConstBuffer> inputs,
                  std::span<const MutableBuffer> outputs) {
  if (inputs.size() != 1 || inputs[0].size() != 8 || outputs.size() != 1 ||
      outputs[0].size() != 8) {
    return false;
  }
  std::uint64_t iterations = 0;
  std::memcpy(&iterations, inputs[0].data(), 8);
  std::uint64_t acc = 0x12345678;
  for (std::uint64_t i = 0; i < iterations; ++i) {
    acc = acc * 6364136223846793005ull + i;
    asm volatile("" : "+r"(acc));
  }
  std::memcpy(outputs[0].data(), &acc, 8);
  return true;
}

PayloadSpec Instance::payload() const {
  PayloadSpec spec;
  for (const auto& in : inputs) spec.inputs.push_back({in, in.size()});
  spec.output_sizes = output_sizes;
  return spec;
}

Instance make_instance(const WorkloadId& id, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Instance inst;
  switch (id.kind) {
    case Kind::kMatmul: {
      const std::size_t n = id.parameter;
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      for (int m = 0; m < 2; ++m) {
        std::vector<double> values(n * n);
        for (auto& v : values) v = dist(rng);
        std::vector<std::byte> bytes(values.size() * sizeof(double));
        std::memcpy(bytes.data(), values.data(), bytes.size());
        inst.inputs.push_back(std::move(bytes));
      }
      inst.output_sizes = {n * n * sizeof(double)};
      inst.computation = matrix_multiply_wrapper;
      break;
    }
    case Kind::kChecksum: {
      std::vector<std::byte> bytes(id.parameter);
      for (auto& b : bytes) b = static_cast<std::byte>(rng() & 0xff);
      inst.inputs.push_back(std::move(bytes));
      inst.output_sizes = {16};
      inst.computation = checksum_wrapper;
      break;
    }
    case Kind::kSpin: {
      std::vector<std::byte> bytes(8);
      // Roughly four instructions per iteration.
      const std::uint64_t iterations = std::max<std::uint64_t>(1, id.parameter / 4);
      std::memcpy(bytes.data(), &iterations, 8);
      inst.inputs.push_back(std::move(bytes));
      inst.output_sizes = {8};
      inst.computation = spin_wrapper;
      break;
    }
  }
  return inst;
}

}  // namespace softlockstep::workloads
