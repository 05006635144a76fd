// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "streamseg/config/config.hpp"
#include "streamseg/metrics/streaming.hpp"

namespace streamseg::experiment {

struct Cell {
  std::string label;
  runtime::RunConfig config;
  metrics::MetricReport metrics;
  double mean_inference_ms = 0.0;
  double mean_predictive_ms = 0.0;
  uint32_t fallback_count = 0;
};

/// One streaming run plus its evaluation.
Cell run_cell(const std::string& label, const runtime::RunConfig& cfg,
              const sim::Sequence& seq);

/// Deterministic CSV: header plus one row per cell, %.6f formatting.
std::string cells_to_csv(const std::vector<Cell>& cells,
                         const std::vector<std::string>& extra_columns = {},
                         const std::vector<std::vector<double>>& extra_values = {});

std::vector<Cell> cmd_run(const config::ExperimentSpec& spec, const sim::Sequence& seq);

/// Component chains of the ablation table: base, +mem, +mem+pose,
/// +mem+pose+flow, +mem+pose+mflow. `components` selects which additions to
/// include; unknown names throw.
std::vector<Cell> cmd_ablate(const runtime::RunConfig& base, const sim::Sequence& seq,
                             const std::vector<std::string>& components);

/// One cell per flow-alignment strategy, same scene and config.
std::vector<Cell> cmd_flow_ablate(const runtime::RunConfig& base, const sim::Sequence& seq,
                                  const std::vector<align::StrategyKind>& strategies);

/// fps sweep over both systems (dual-thread and blocking single-thread).
std::vector<Cell> cmd_sweep_fps(const runtime::RunConfig& base, const sim::Sequence& seq,
                                const std::vector<double>& fps_values);

struct Calibration {
  double fixed_ms = 0.0;
  double per_point_us = 0.0;
};

/// Micro-benchmark of the query + head path on synthetic memories; fits the
/// linear inference cost model.
Calibration cmd_calibrate(uint32_t n_voxels = 20000, uint32_t repeats = 3);

}  // namespace streamseg::experiment
