// SPDX-License-Identifier: Apache-2.0

#include "streamseg/experiment/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "streamseg/align/kernels.hpp"
#include "streamseg/memory/snapshot.hpp"

namespace streamseg::experiment {

Cell run_cell(const std::string& label, const runtime::RunConfig& cfg,
              const sim::Sequence& seq) {
  Cell cell;
  cell.label = label;
  cell.config = cfg;
  const runtime::StreamReport report = runtime::run_stream(cfg, seq);
  cell.metrics = metrics::streaming_evaluate(report, seq);
  cell.mean_inference_ms = report.mean_inference_ms;
  cell.mean_predictive_ms = report.mean_predictive_ms;
  cell.fallback_count = report.fallback_count;
  return cell;
}

std::string cells_to_csv(const std::vector<Cell>& cells,
                         const std::vector<std::string>& extra_columns,
                         const std::vector<std::vector<double>>& extra_values) {
  std::string out = "label";
  for (const auto& c : metrics::MetricReport::csv_columns()) out += "," + c;
  out += ",mean_inference_ms,mean_predictive_ms,fallbacks";
  for (const auto& c : extra_columns) out += "," + c;
  out += "\n";
  char buf[64];
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& cell = cells[i];
    out += cell.label;
    for (double v : cell.metrics.csv_values()) {
      std::snprintf(buf, sizeof(buf), ",%.6f", v);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%u", cell.mean_inference_ms,
                  cell.mean_predictive_ms, cell.fallback_count);
    out += buf;
    if (i < extra_values.size()) {
      for (double v : extra_values[i]) {
        std::snprintf(buf, sizeof(buf), ",%.6f", v);
        out += buf;
      }
    }
    out += "\n";
  }
  return out;
}

std::vector<Cell> cmd_run(const config::ExperimentSpec& spec, const sim::Sequence& seq) {
  std::vector<Cell> cells;
  switch (spec.sweep) {
    case config::ExperimentSpec::Sweep::none:
      cells.push_back(run_cell("run", spec.base, seq));
      break;
    case config::ExperimentSpec::Sweep::fps: {
      auto values = spec.fps_values;
      std::sort(values.begin(), values.end());
      for (double fps : values) {
        runtime::RunConfig cfg = spec.base;
        cfg.fps = fps;
        char label[32];
        std::snprintf(label, sizeof(label), "fps=%g", fps);
        cells.push_back(run_cell(label, cfg, seq));
      }
      break;
    }
    case config::ExperimentSpec::Sweep::latency: {
      auto values = spec.latency_values;
      std::sort(values.begin(), values.end());
      for (double ms : values) {
        runtime::RunConfig cfg = spec.base;
        cfg.latency.mean_ms = ms;
        char label[32];
        std::snprintf(label, sizeof(label), "latency=%g", ms);
        cells.push_back(run_cell(label, cfg, seq));
      }
      break;
    }
    case config::ExperimentSpec::Sweep::strategy:
      for (auto kind : spec.strategies) {
        runtime::RunConfig cfg = spec.base;
        cfg.strategy.kind = kind;
        cells.push_back(run_cell(align::strategy_name(kind), cfg, seq));
      }
      break;
  }
  return cells;
}

std::vector<Cell> cmd_ablate(const runtime::RunConfig& base, const sim::Sequence& seq,
                             const std::vector<std::string>& components) {
  for (const auto& c : components) {
    if (c != "mem" && c != "pose" && c != "flow" && c != "mflow") {
      throw std::invalid_argument("cmd_ablate: unknown component '" + c + "'");
    }
  }
  auto has = [&](const char* c) {
    return std::find(components.begin(), components.end(), c) != components.end();
  };

  std::vector<Cell> cells;
  runtime::RunConfig cfg = base;
  cfg.enable = {false, false, false, false};
  cells.push_back(run_cell("base", cfg, seq));
  if (has("mem")) {
    cfg.enable.memory = true;
    cells.push_back(run_cell("+mem", cfg, seq));
  }
  if (has("pose")) {
    if (!cfg.enable.memory) {
      throw std::invalid_argument("cmd_ablate: component chain must add 'mem' before 'pose'");
    }
    cfg.enable.pose = true;
    cells.push_back(run_cell("+mem+pose", cfg, seq));
  }
  if (has("flow")) {
    if (!cfg.enable.pose) {
      throw std::invalid_argument("cmd_ablate: component chain must add 'pose' before 'flow'");
    }
    cfg.enable.flow = true;
    cfg.enable.moving_mask = false;
    cells.push_back(run_cell("+mem+pose+flow", cfg, seq));
  }
  if (has("mflow")) {
    if (!cfg.enable.flow) {
      throw std::invalid_argument("cmd_ablate: component chain must add 'flow' before 'mflow'");
    }
    cfg.enable.moving_mask = true;
    cells.push_back(run_cell("+mem+pose+mflow", cfg, seq));
  }
  return cells;
}

std::vector<Cell> cmd_flow_ablate(const runtime::RunConfig& base, const sim::Sequence& seq,
                                  const std::vector<align::StrategyKind>& strategies) {
  std::vector<Cell> cells;
  for (auto kind : strategies) {
    runtime::RunConfig cfg = base;
    cfg.strategy.kind = kind;
    cells.push_back(run_cell(align::strategy_name(kind), cfg, seq));
  }
  return cells;
}

std::vector<Cell> cmd_sweep_fps(const runtime::RunConfig& base, const sim::Sequence& seq,
                                const std::vector<double>& fps_values) {
  auto values = fps_values;
  std::sort(values.begin(), values.end());
  std::vector<Cell> cells;
  for (double fps : values) {
    for (auto system : {runtime::SystemMode::dual_thread, runtime::SystemMode::single_thread}) {
      runtime::RunConfig cfg = base;
      cfg.fps = fps;
      cfg.system = system;
      char label[48];
      std::snprintf(label, sizeof(label), "%s_fps=%g",
                    system == runtime::SystemMode::dual_thread ? "dual" : "single", fps);
      cells.push_back(run_cell(label, cfg, seq));
    }
  }
  return cells;
}

Calibration cmd_calibrate(uint32_t n_voxels, uint32_t repeats) {
  using ClockT = std::chrono::steady_clock;
  backbone::FeatureDims dims{8, 8};
  sim::ClassTable classes = sim::ClassTable::default_table();

  memory::VoxelMemory mem(memory::MemoryParams{});
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  backbone::InstanceCodebook book(dims.embed_dim, 3);
  for (uint32_t i = 0; i < n_voxels; ++i) {
    const Point3 p(u(rng), u(rng), u(rng));
    memory::MemoryCell cell;
    backbone::FeatureVec f = backbone::FeatureVec::Zero(dims.total());
    f[1 + (i % 4)] = 1.0;
    f.tail(dims.embed_dim) = book.centroid(1 + i % 8);
    cell.h = f;
    mem.upsert(voxel_key_of(p, mem.voxel_size()), cell);
  }
  mem.codebook() = book;
  mem.rebuild_index();

  auto time_query = [&](std::size_t n_points) {
    std::vector<Point3> pts(n_points);
    for (auto& p : pts) p = Point3(u(rng), u(rng), u(rng));
    double best = 1e300;
    for (uint32_t r = 0; r < repeats; ++r) {
      const auto t0 = ClockT::now();
      auto q = align::query_batch(mem, pts, align::Execution::serial);
      auto head = backbone::prediction_head(q.features, dims, mem.codebook(), classes);
      (void)head;
      best = std::min(best,
                      std::chrono::duration<double, std::milli>(ClockT::now() - t0).count());
    }
    return best;
  };

  const double t_small = time_query(1000);
  const double t_large = time_query(10000);
  Calibration cal;
  cal.per_point_us = (t_large - t_small) / 9000.0 * 1000.0;
  cal.fixed_ms = std::max(0.0, t_small - cal.per_point_us * 1e-3 * 1000.0);
  return cal;
}

}  // namespace streamseg::experiment
