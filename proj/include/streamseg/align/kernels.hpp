// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "streamseg/align/alignment.hpp"
#include "streamseg/backbone/backbone.hpp"
#include "streamseg/memory/voxel_memory.hpp"

namespace streamseg::align {

/// Per-point work in the inference path is independent, so the parallel
/// kernels are bitwise-identical to the serial references kept for testing.
enum class Execution { serial, parallel };

struct BatchAlignResult {
  std::vector<Point3> positions;
  std::vector<uint8_t> converged;
  std::vector<int32_t> iterations;

  uint32_t converged_count() const {
    uint32_t n = 0;
    for (uint8_t c : converged) n += c;
    return n;
  }
};

/// Inputs for the dynamic-alignment step. `forecast` is the m-frame
/// displacement field; `backward` the source-anchored field used by the
/// backward strategy; `memory` supplies brute-search candidates.
struct DynamicAlignContext {
  const forecast::FlowField* forecast = nullptr;
  const forecast::FlowField* backward = nullptr;
  const memory::VoxelMemory* memory = nullptr;
  AlignmentStrategy strategy;
};

/// Applies the configured strategy to every point. Points that fail to
/// converge (or find no brute candidate) fall back to the single-shot
/// inverse result.
BatchAlignResult dynamic_align_batch(const std::vector<Point3>& points,
                                     const DynamicAlignContext& ctx,
                                     Execution exec = Execution::parallel);
BatchAlignResult dynamic_align_batch_serial(const std::vector<Point3>& points,
                                            const DynamicAlignContext& ctx);

/// Memory lookup for every point.
memory::QueryResult query_batch(const memory::VoxelMemory& memory,
                                const std::vector<Point3>& points,
                                Execution exec = Execution::parallel);
memory::QueryResult query_batch_serial(const memory::VoxelMemory& memory,
                                       const std::vector<Point3>& points);

}  // namespace streamseg::align
