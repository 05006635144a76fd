// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "streamseg/experiment/experiment.hpp"
#include "streamseg/io/native.hpp"
#include "streamseg/metrics/streaming.hpp"
#include "streamseg/runtime/stream.hpp"

namespace fs = std::filesystem;
using namespace streamseg;

namespace {

struct CommonArgs {
  std::string run_config_path;
  std::string scene_config_path;
  std::string scene_native_path;
  std::string out;
};

runtime::RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return runtime::RunConfig{};
  return config::run_config_from_json(config::load_json_file(path));
}

sim::Sequence load_scene(const CommonArgs& args) {
  if (!args.scene_native_path.empty()) {
    return io::load_native(args.scene_native_path).sequence;
  }
  if (args.scene_config_path.empty()) {
    throw config::ConfigError("no scene given: pass --scene or --scene-native");
  }
  const auto cfg =
      config::scene_config_from_json(config::load_json_file(args.scene_config_path));
  return sim::generate_scene(cfg);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void write_cells(const std::vector<experiment::Cell>& cells, const std::string& out_dir,
                 const std::string& csv_name) {
  fs::create_directories(out_dir);
  for (const auto& cell : cells) {
    write_text(out_dir + "/" + cell.label + ".json",
               metrics::metric_report_to_json(cell.metrics));
  }
  write_text(out_dir + "/" + csv_name, experiment::cells_to_csv(cells));
  std::printf("wrote %zu cells to %s/%s\n", cells.size(), out_dir.c_str(),
              csv_name.c_str());
}

std::vector<uint32_t> parse_moving_classes(const std::string& path,
                                           io::MovingClassTable& table) {
  std::vector<uint32_t> ids;
  if (path.empty()) return ids;
  const auto j = config::load_json_file(path);
  for (const auto& e : j.at("entries")) {
    io::MovingClassTable::Entry entry;
    entry.semantic_id = e.at("semantic_id").get<uint32_t>();
    entry.moving_class_id = e.at("moving_class_id").get<uint32_t>();
    table.entries.push_back(entry);
    ids.push_back(entry.moving_class_id);
  }
  return ids;
}

int cmd_run(const CommonArgs& args, const runtime::RunConfig& cfg,
            const std::string& metrics_out) {
  const sim::Sequence seq = load_scene(args);
  const runtime::StreamReport report = runtime::run_stream(cfg, seq);
  if (!args.out.empty()) {
    write_text(args.out, runtime::report_to_json(report, cfg));
  }
  const metrics::MetricReport m = metrics::streaming_evaluate(report, seq);
  const std::string text = metrics::metric_report_to_json(m);
  if (!metrics_out.empty()) {
    write_text(metrics_out, text);
  }
  std::printf("%s\n", text.c_str());
  return 0;
}

int cmd_gen_scene(const std::string& config_path, const std::string& out,
                  const std::string& moving_classes_path) {
  const auto cfg = config::scene_config_from_json(config::load_json_file(config_path));
  const sim::Sequence seq = sim::generate_scene(cfg);
  io::MovingClassTable table;
  const auto ids = parse_moving_classes(moving_classes_path, table);
  io::save_native(out, seq, ids);
  std::printf("wrote %zu frames to %s\n", seq.frames.size(), out.c_str());
  return 0;
}

int cmd_convert_kitti(const std::string& from_native, const std::string& from_kitti,
                      const std::string& out, const std::string& moving_classes_path) {
  io::MovingClassTable table;
  const auto moving_ids = parse_moving_classes(moving_classes_path, table);

  if (!from_native.empty()) {
    const io::NativeSequence native = io::load_native(from_native);
    const sim::Sequence& seq = native.sequence;
    fs::create_directories(out);
    std::vector<RigidTransform> poses;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      const auto& frame = seq.frames[i];
      PointCloud pc = frame.cloud();
      pc.intensity.assign(pc.size(), 0.0f);
      char name[32];
      std::snprintf(name, sizeof(name), "%06zu", i);
      io::write_file(out + "/" + name + ".bin", io::write_kitti_scan(pc));
      io::KittiLabels labels;
      labels.semantic_id.resize(frame.size());
      labels.instance_id = frame.instance_id;
      for (std::size_t p = 0; p < frame.size(); ++p) {
        labels.semantic_id[p] =
            table.extended_id(frame.semantic_id[p], frame.moving[p] != 0);
      }
      io::write_file(out + "/" + name + ".label", io::write_kitti_label(labels));
      poses.push_back(frame.gt_pose_world_from_ego);
    }
    io::write_text_file(out + "/poses.txt", io::write_pose_file(poses));
    std::printf("wrote %zu scan/label pairs to %s\n", seq.frames.size(), out.c_str());
    return 0;
  }

  if (from_kitti.empty()) {
    throw config::ConfigError("convert-kitti needs --from-native or --from-kitti");
  }
  sim::Sequence seq;
  seq.classes = sim::ClassTable::default_table();
  const auto poses = io::read_pose_file(io::read_text_file(from_kitti + "/poses.txt"));
  uint32_t index = 0;
  for (;; ++index) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06u", index);
    const std::string scan_path = from_kitti + "/" + name + ".bin";
    if (!fs::exists(scan_path)) break;
    const PointCloud pc = io::read_kitti_scan(io::read_file(scan_path));
    const io::KittiLabels labels =
        io::read_kitti_label(io::read_file(from_kitti + "/" + name + ".label"));
    if (labels.semantic_id.size() != pc.size()) {
      throw io::ParseError("label", index, "label count does not match scan");
    }
    sim::FrameSample frame;
    frame.frame_index = index;
    frame.timestamp = static_cast<double>(index) / seq.fps;
    frame.points = pc.points;
    frame.semantic_id = labels.semantic_id;
    frame.instance_id = labels.instance_id;
    frame.moving.resize(pc.size());
    for (std::size_t p = 0; p < pc.size(); ++p) {
      frame.moving[p] = std::find(moving_ids.begin(), moving_ids.end(),
                                  labels.semantic_id[p]) != moving_ids.end()
                            ? 1
                            : 0;
    }
    frame.gt_forward_flow.assign(pc.size(), Vec3::Zero());
    if (index < poses.size()) frame.gt_pose_world_from_ego = poses[index];
    seq.frames.push_back(std::move(frame));
  }
  if (seq.frames.empty()) {
    throw config::ConfigError("no scans found under " + from_kitti);
  }
  io::save_native(out, seq, moving_ids);
  std::printf("packed %u scans into %s\n", index, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latency-aware streaming 4D panoptic segmentation engine"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string metrics_out, components_arg, strategies_arg, fps_arg;
  std::string from_native, from_kitti, moving_classes_path, scene_cfg_path;

  // Overrides applied on top of --config.
  double fps_override = -1.0, latency_override = -1.0, eps_override = -1.0;
  int nmax_override = -1;
  std::string pose_override, align_override, mode_override, fallback_override;

  auto add_common = [&](CLI::App* cmd, bool with_overrides) {
    cmd->add_option("--config", common.run_config_path, "run config JSON");
    cmd->add_option("--scene", common.scene_config_path, "scene config JSON");
    cmd->add_option("--scene-native", common.scene_native_path,
                    "native sequence file");
    if (with_overrides) {
      cmd->add_option("--fps", fps_override, "frame rate override");
      cmd->add_option("--pose", pose_override, "known|unknown");
      cmd->add_option("--align", align_override,
                      "none|backward|forward|inverse1|brute|iterate");
      cmd->add_option("--latency-ms", latency_override, "backbone latency override");
      cmd->add_option("--mode", mode_override, "virtual|wallclock");
      cmd->add_option("--fallback", fallback_override, "requery|label_copy");
      cmd->add_option("--eps", eps_override, "iteration stop tolerance (m)");
      cmd->add_option("--nmax", nmax_override, "iteration patience");
    }
  };

  auto* run = app.add_subcommand("run", "stream a sequence and evaluate it");
  add_common(run, true);
  run->add_option("--out", common.out, "stream report JSON path");
  run->add_option("--metrics-out", metrics_out, "metric report JSON path");

  auto* ablate = app.add_subcommand("ablate", "component ablation chain");
  add_common(ablate, true);
  ablate->add_option("--components", components_arg,
                     "comma list from {mem,pose,flow,mflow}")
      ->default_val("mem,pose,flow,mflow");
  ablate->add_option("--out", common.out, "output directory")->default_val("ablation");

  auto* flow_ablate = app.add_subcommand("flow-ablate", "alignment strategy table");
  add_common(flow_ablate, true);
  flow_ablate
      ->add_option("--strategies", strategies_arg,
                   "comma list of alignment strategies")
      ->default_val("backward,forward,inverse1,brute,iterate");
  flow_ablate->add_option("--out", common.out, "output directory")
      ->default_val("flow_ablation");

  auto* sweep = app.add_subcommand("sweep-fps", "fps sweep, dual vs single thread");
  add_common(sweep, true);
  sweep->add_option("--fps-values", fps_arg, "comma list of frame rates")
      ->default_val("5,10,15,20");
  sweep->add_option("--out", common.out, "output directory")->default_val("fps_sweep");

  auto* calibrate = app.add_subcommand("calibrate", "fit the inference cost model");
  std::string calibrate_out;
  calibrate->add_option("--out", calibrate_out, "write the fitted costs as JSON");

  auto* gen = app.add_subcommand("gen-scene", "generate a synthetic sequence");
  gen->add_option("--config", scene_cfg_path, "scene config JSON")->required();
  gen->add_option("--out", common.out, "native sequence output path")->required();
  gen->add_option("--moving-classes", moving_classes_path, "moving-class table JSON");

  auto* convert = app.add_subcommand("convert-kitti", "scan/label directory conversion");
  convert->add_option("--from-native", from_native, "native sequence to export");
  convert->add_option("--from-kitti", from_kitti, "scan/label directory to import");
  convert->add_option("--out", common.out, "output directory or file")->required();
  convert->add_option("--moving-classes", moving_classes_path,
                      "moving-class table JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    runtime::RunConfig cfg = load_run_config(common.run_config_path);
    if (fps_override > 0.0) cfg.fps = fps_override;
    if (latency_override >= 0.0) cfg.latency.mean_ms = latency_override;
    if (eps_override > 0.0) cfg.strategy.epsilon = eps_override;
    if (nmax_override > 0) cfg.strategy.n_max = nmax_override;
    if (!pose_override.empty()) {
      if (pose_override != "known" && pose_override != "unknown") {
        throw config::ConfigError("--pose must be known|unknown");
      }
      cfg.pose_mode = pose_override == "known" ? runtime::PoseMode::known
                                               : runtime::PoseMode::unknown;
    }
    if (!align_override.empty()) {
      cfg.strategy.kind = align::strategy_from_string(align_override);
    }
    if (!mode_override.empty()) {
      if (mode_override != "virtual" && mode_override != "wallclock") {
        throw config::ConfigError("--mode must be virtual|wallclock");
      }
      cfg.clock = mode_override == "virtual" ? runtime::ClockMode::virtual_clock
                                             : runtime::ClockMode::wallclock;
    }
    if (!fallback_override.empty()) {
      if (fallback_override != "requery" && fallback_override != "label_copy") {
        throw config::ConfigError("--fallback must be requery|label_copy");
      }
      cfg.fallback = fallback_override == "requery" ? runtime::FallbackMode::requery
                                                    : runtime::FallbackMode::label_copy;
    }
    cfg.validate();

    auto split_list = [](const std::string& text) {
      std::vector<std::string> out;
      std::size_t at = 0;
      while (at <= text.size()) {
        const std::size_t comma = text.find(',', at);
        out.push_back(text.substr(at, comma - at));
        if (comma == std::string::npos) break;
        at = comma + 1;
      }
      return out;
    };

    if (run->parsed()) {
      return cmd_run(common, cfg, metrics_out);
    }
    if (ablate->parsed()) {
      const sim::Sequence seq = load_scene(common);
      const auto cells = experiment::cmd_ablate(cfg, seq, split_list(components_arg));
      write_cells(cells, common.out, "ablation.csv");
      return 0;
    }
    if (flow_ablate->parsed()) {
      const sim::Sequence seq = load_scene(common);
      std::vector<align::StrategyKind> kinds;
      for (const auto& s : split_list(strategies_arg)) {
        kinds.push_back(align::strategy_from_string(s));
      }
      const auto cells = experiment::cmd_flow_ablate(cfg, seq, kinds);
      write_cells(cells, common.out, "flow_ablation.csv");
      return 0;
    }
    if (sweep->parsed()) {
      const sim::Sequence seq = load_scene(common);
      std::vector<double> values;
      for (const auto& s : split_list(fps_arg)) values.push_back(std::stod(s));
      const auto cells = experiment::cmd_sweep_fps(cfg, seq, values);
      write_cells(cells, common.out, "fps_sweep.csv");
      return 0;
    }
    if (calibrate->parsed()) {
      const auto cal = experiment::cmd_calibrate();
      nlohmann::ordered_json j;
      j["inference_cost"] = {{"fixed_ms", cal.fixed_ms},
                             {"per_point_us", cal.per_point_us}};
      if (!calibrate_out.empty()) write_text(calibrate_out, j.dump(2));
      std::printf("%s\n", j.dump(2).c_str());
      return 0;
    }
    if (gen->parsed()) {
      return cmd_gen_scene(scene_cfg_path, common.out, moving_classes_path);
    }
    if (convert->parsed()) {
      return cmd_convert_kitti(from_native, from_kitti, common.out,
                               moving_classes_path);
    }
  } catch (const config::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 3;
  }
  return 0;
}
