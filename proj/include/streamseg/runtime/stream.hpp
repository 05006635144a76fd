// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "streamseg/align/kernels.hpp"
#include "streamseg/backbone/backbone.hpp"
#include "streamseg/memory/snapshot.hpp"
#include "streamseg/sim/scene.hpp"

namespace streamseg::runtime {

enum class PoseMode { known, unknown };
enum class SystemMode { dual_thread, single_thread };
enum class FallbackMode { requery, label_copy };
enum class ClockMode { virtual_clock, wallclock };

struct InferenceCostModel {
  double fixed_ms = 1.0;
  double per_point_us = 0.5;
};

/// Ablation switches matching the component chains of the experiment tables.
struct Components {
  bool memory = true;
  bool pose = true;
  bool flow = true;
  bool moving_mask = true;
};

struct RunConfig {
  double fps = 10.0;
  PoseMode pose_mode = PoseMode::known;
  SystemMode system = SystemMode::dual_thread;
  ClockMode clock = ClockMode::virtual_clock;
  FallbackMode fallback = FallbackMode::requery;
  align::AlignmentStrategy strategy;
  Components enable;

  backbone::NoiseModel noise;
  backbone::LatencyModel latency;  // backbone latency (virtual: declared)
  InferenceCostModel inference_cost;
  double predictive_overhead_ms = 0.0;
  // Declared virtual cost of pre-aligning the memory per voxel per horizon
  // (forward strategy only).
  double forward_align_voxel_us = 0.3;

  memory::MemoryParams memory_params;
  double pose_alpha = 0.8;
  double flow_alpha = 0.7;
  uint32_t m_max = 10;
  double theta_move = 0.05;  // m/frame; voxel_size / 4 by default
  bool use_gt_flow = false;
  bool gt_moving_mask = false;

  uint32_t embed_dim = 8;
  uint64_t seed = 7;

  void validate() const;
};

struct StreamRecord {
  uint32_t frame_index = 0;
  double emit_time = 0.0;
  uint64_t snapshot_version = 0;  // 0 = no snapshot yet
  uint32_t horizon = 0;           // frame index minus snapshot keyframe, pre-clamp
  bool fallback = false;
  std::vector<uint32_t> semantic_id;
  std::vector<uint32_t> instance_id;
  uint32_t direct_hits = 0;
  uint32_t nn_hits = 0;
  uint32_t aligned_points = 0;    // points sent through dynamic alignment
  uint32_t converged_points = 0;
  double inference_cost_ms = 0.0;
};

struct KeyframeTrace {
  uint32_t frame_index = 0;
  double start_time = 0.0;
  double cost_ms = 0.0;  // backbone latency + pipeline overhead
  double publish_time = 0.0;
  uint64_t version = 0;
};

struct StreamReport {
  double fps = 0.0;
  std::vector<StreamRecord> records;
  std::vector<KeyframeTrace> keyframes;
  double mean_inference_ms = 0.0;
  double mean_predictive_ms = 0.0;
  uint32_t fallback_count = 0;
};

/// Keyframe selection: the latest arrived frame at `now` (frames arrive at
/// i / fps).
uint32_t select_keyframe(double now, double fps, uint32_t n_frames);

StreamReport run_stream(const RunConfig& cfg, const sim::Sequence& seq);

/// Recorded scheduling decisions of a run; replaying them through the
/// deterministic pipeline must reproduce the labels bit-for-bit.
struct Schedule {
  std::vector<uint32_t> keyframes;  // in publish order
  struct FrameDecision {
    uint64_t snapshot_version = 0;
    bool fallback = false;
  };
  std::vector<FrameDecision> frames;
};

Schedule schedule_of(const StreamReport& report);
StreamReport run_replay(const RunConfig& cfg, const sim::Sequence& seq,
                        const Schedule& schedule);

std::string report_to_json(const StreamReport& report, const RunConfig& cfg);

}  // namespace streamseg::runtime
