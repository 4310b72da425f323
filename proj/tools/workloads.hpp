// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

// Demo workloads exposed through the wrapper contract.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "softlockstep/replication.hpp"

namespace softlockstep::workloads {

enum class Kind { kMatmul, kChecksum, kSpin };

struct WorkloadId {
  Kind kind = Kind::kMatmul;
  std::uint64_t parameter = 0;  // matrix dimension, bytes or instructions
};

// "matmul:<n>", "checksum:<bytes>" or "spin:<instructions>".
WorkloadId parse_workload(std::string_view text);

// c = a * b for n x n row-major matrices.
void matrix_multiply(const double* a, const double* b, double* c,
                     std::size_t n);

// Inputs: two n*n double matrices. Output: their n*n product.
bool matrix_multiply_wrapper(std::span<const ConstBuffer> inputs,
                             std::span<const MutableBuffer> outputs);

// Input: arbitrary bytes. Output: 16 bytes, two independent 64-bit hashes.
bool checksum_wrapper(std::span<const ConstBuffer> inputs,
                      std::span<const MutableBuffer> outputs);

// Input: 8-byte iteration count. Output: 8-byte accumulator.
bool spin_wrapper(std::span<const ConstBuffer> inputs,
                  std::span<const MutableBuffer> outputs);

// Concrete inputs, output sizes and wrapper for a workload. Inputs are
// pseudo-random from `seed` and owned by the instance.
struct Instance {
  WrappedComputation computation;
  std::vector<std::vector<std::byte>> inputs;
  std::vector<std::size_t> output_sizes;

  PayloadSpec payload() const;
};

Instance make_instance(const WorkloadId& id, std::uint64_t seed);

}  // namespace softlockstep::workloads
