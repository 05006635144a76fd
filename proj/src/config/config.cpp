// SPDX-License-Identifier: Apache-2.0

#include "streamseg/config/config.hpp"

#include <fstream>

namespace streamseg::config {

namespace {

Vec3 vec3_from(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) {
    throw ConfigError("field '" + field + "' must be a 3-element array");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

nlohmann::json vec3_to(const Vec3& v) {
  return nlohmann::json::array({v.x(), v.y(), v.z()});
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& field, T fallback) {
  if (!j.contains(field)) return fallback;
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("field '" + field + "' has the wrong type");
  }
}

}  // namespace

sim::SceneConfig scene_config_from_json(const nlohmann::json& j) {
  sim::SceneConfig cfg;
  cfg.fps = get_or(j, "fps", cfg.fps);
  if (!(cfg.fps > 0.0)) throw ConfigError("field 'fps' must be > 0");
  cfg.n_frames = get_or(j, "n_frames", cfg.n_frames);
  cfg.seed = get_or(j, "seed", cfg.seed);
  cfg.n_background_points = get_or(j, "n_background_points", cfg.n_background_points);
  cfg.n_random_bodies = get_or(j, "n_random_bodies", cfg.n_random_bodies);
  cfg.random_speed_max = get_or(j, "random_speed_max", cfg.random_speed_max);
  cfg.random_omega_sigma = get_or(j, "random_omega_sigma", cfg.random_omega_sigma);
  cfg.random_omega_fast_prob =
      get_or(j, "random_omega_fast_prob", cfg.random_omega_fast_prob);
  cfg.random_omega_fast_min =
      get_or(j, "random_omega_fast_min", cfg.random_omega_fast_min);
  cfg.random_moving_fraction =
      get_or(j, "random_moving_fraction", cfg.random_moving_fraction);
  cfg.placement_radius = get_or(j, "placement_radius", cfg.placement_radius);
  if (j.contains("ego_twist")) {
    const auto& e = j.at("ego_twist");
    cfg.ego_twist.omega = vec3_from(e.value("omega", nlohmann::json::array({0, 0, 0})),
                                    "ego_twist.omega");
    cfg.ego_twist.v =
        vec3_from(e.value("v", nlohmann::json::array({0, 0, 0})), "ego_twist.v");
  }
  if (j.contains("sensor")) {
    const auto& s = j.at("sensor");
    cfg.sensor.range_cutoff = get_or(s, "range_cutoff", cfg.sensor.range_cutoff);
    cfg.sensor.dropout_prob = get_or(s, "dropout_prob", cfg.sensor.dropout_prob);
  }
  if (j.contains("classes")) {
    cfg.classes.classes.clear();
    for (const auto& c : j.at("classes")) {
      sim::ClassInfo info;
      info.id = c.at("id").get<uint32_t>();
      info.name = c.value("name", std::string("class_") + std::to_string(info.id));
      info.thing = c.value("thing", false);
      cfg.classes.classes.push_back(info);
    }
  }
  if (j.contains("bodies")) {
    for (const auto& b : j.at("bodies")) {
      sim::RigidBody body;
      body.id = b.at("id").get<uint32_t>();
      if (body.id == 0) throw ConfigError("field 'bodies[].id' must be >= 1");
      body.class_id = b.value("class_id", 3u);
      const std::string shape = b.value("shape", std::string("box"));
      if (shape == "box") {
        body.shape = sim::ShapeKind::box;
      } else if (shape == "cylinder") {
        body.shape = sim::ShapeKind::cylinder;
      } else {
        throw ConfigError("field 'bodies[].shape' must be box|cylinder");
      }
      body.n_points = b.value("n_points", 200u);
      if (b.contains("extent")) body.extent = vec3_from(b.at("extent"), "bodies[].extent");
      if (b.contains("center")) body.center = vec3_from(b.at("center"), "bodies[].center");
      if (b.contains("v")) body.v = vec3_from(b.at("v"), "bodies[].v");
      if (b.contains("omega")) body.omega = vec3_from(b.at("omega"), "bodies[].omega");
      cfg.bodies.push_back(body);
    }
  }
  return cfg;
}

nlohmann::ordered_json scene_config_to_json(const sim::SceneConfig& cfg) {
  nlohmann::ordered_json j;
  j["fps"] = cfg.fps;
  j["n_frames"] = cfg.n_frames;
  j["seed"] = cfg.seed;
  j["n_background_points"] = cfg.n_background_points;
  j["n_random_bodies"] = cfg.n_random_bodies;
  j["random_speed_max"] = cfg.random_speed_max;
  j["random_omega_sigma"] = cfg.random_omega_sigma;
  j["random_omega_fast_prob"] = cfg.random_omega_fast_prob;
  j["random_omega_fast_min"] = cfg.random_omega_fast_min;
  j["random_moving_fraction"] = cfg.random_moving_fraction;
  j["placement_radius"] = cfg.placement_radius;
  j["ego_twist"] = {{"omega", vec3_to(cfg.ego_twist.omega)}, {"v", vec3_to(cfg.ego_twist.v)}};
  j["sensor"] = {{"range_cutoff", cfg.sensor.range_cutoff},
                 {"dropout_prob", cfg.sensor.dropout_prob}};
  auto classes = nlohmann::ordered_json::array();
  for (const auto& c : cfg.classes.classes) {
    classes.push_back({{"id", c.id}, {"name", c.name}, {"thing", c.thing}});
  }
  j["classes"] = std::move(classes);
  auto bodies = nlohmann::ordered_json::array();
  for (const auto& b : cfg.bodies) {
    bodies.push_back({{"id", b.id},
                      {"class_id", b.class_id},
                      {"shape", b.shape == sim::ShapeKind::box ? "box" : "cylinder"},
                      {"n_points", b.n_points},
                      {"extent", vec3_to(b.extent)},
                      {"center", vec3_to(b.center)},
                      {"v", vec3_to(b.v)},
                      {"omega", vec3_to(b.omega)}});
  }
  j["bodies"] = std::move(bodies);
  return j;
}

runtime::RunConfig run_config_from_json(const nlohmann::json& j) {
  runtime::RunConfig cfg;
  cfg.fps = get_or(j, "fps", cfg.fps);
  const std::string pose = get_or<std::string>(j, "pose", "known");
  if (pose == "known") {
    cfg.pose_mode = runtime::PoseMode::known;
  } else if (pose == "unknown") {
    cfg.pose_mode = runtime::PoseMode::unknown;
  } else {
    throw ConfigError("field 'pose' must be known|unknown");
  }
  const std::string system = get_or<std::string>(j, "system", "dual");
  if (system == "dual") {
    cfg.system = runtime::SystemMode::dual_thread;
  } else if (system == "single") {
    cfg.system = runtime::SystemMode::single_thread;
  } else {
    throw ConfigError("field 'system' must be dual|single");
  }
  const std::string mode = get_or<std::string>(j, "mode", "virtual");
  if (mode == "virtual") {
    cfg.clock = runtime::ClockMode::virtual_clock;
  } else if (mode == "wallclock") {
    cfg.clock = runtime::ClockMode::wallclock;
  } else {
    throw ConfigError("field 'mode' must be virtual|wallclock");
  }
  const std::string fallback = get_or<std::string>(j, "fallback", "requery");
  if (fallback == "requery") {
    cfg.fallback = runtime::FallbackMode::requery;
  } else if (fallback == "label_copy") {
    cfg.fallback = runtime::FallbackMode::label_copy;
  } else {
    throw ConfigError("field 'fallback' must be requery|label_copy");
  }
  try {
    cfg.strategy.kind =
        align::strategy_from_string(get_or<std::string>(j, "align", "iterate"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  cfg.strategy.epsilon = get_or(j, "eps", cfg.strategy.epsilon);
  cfg.strategy.n_max = get_or(j, "nmax", cfg.strategy.n_max);
  cfg.strategy.brute_radius = get_or(j, "brute_radius", cfg.strategy.brute_radius);

  if (j.contains("components")) {
    const auto& c = j.at("components");
    cfg.enable.memory = get_or(c, "memory", cfg.enable.memory);
    cfg.enable.pose = get_or(c, "pose", cfg.enable.pose);
    cfg.enable.flow = get_or(c, "flow", cfg.enable.flow);
    cfg.enable.moving_mask = get_or(c, "moving_mask", cfg.enable.moving_mask);
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    cfg.noise.label_flip_prob = get_or(n, "label_flip_prob", cfg.noise.label_flip_prob);
    cfg.noise.logit_margin = get_or(n, "logit_margin", cfg.noise.logit_margin);
    cfg.noise.embed_sigma = get_or(n, "embed_sigma", cfg.noise.embed_sigma);
  }
  if (j.contains("latency")) {
    const auto& l = j.at("latency");
    const std::string kind = get_or<std::string>(l, "kind", "fixed");
    if (kind == "fixed") {
      cfg.latency.kind = backbone::LatencyModel::Kind::fixed;
    } else if (kind == "gaussian") {
      cfg.latency.kind = backbone::LatencyModel::Kind::gaussian;
    } else {
      throw ConfigError("field 'latency.kind' must be fixed|gaussian");
    }
    cfg.latency.mean_ms = get_or(l, "mean_ms", cfg.latency.mean_ms);
    cfg.latency.stddev_ms = get_or(l, "stddev_ms", cfg.latency.stddev_ms);
    cfg.latency.seed = get_or(l, "seed", cfg.latency.seed);
  }
  if (j.contains("inference_cost")) {
    const auto& c = j.at("inference_cost");
    cfg.inference_cost.fixed_ms = get_or(c, "fixed_ms", cfg.inference_cost.fixed_ms);
    cfg.inference_cost.per_point_us =
        get_or(c, "per_point_us", cfg.inference_cost.per_point_us);
  }
  cfg.predictive_overhead_ms =
      get_or(j, "predictive_overhead_ms", cfg.predictive_overhead_ms);
  cfg.forward_align_voxel_us =
      get_or(j, "forward_align_voxel_us", cfg.forward_align_voxel_us);
  cfg.memory_params.voxel_size = get_or(j, "voxel_size", cfg.memory_params.voxel_size);
  cfg.memory_params.max_age_keyframes =
      get_or(j, "memory_max_age", cfg.memory_params.max_age_keyframes);
  cfg.memory_params.max_range_m = get_or(j, "memory_max_range", cfg.memory_params.max_range_m);
  cfg.pose_alpha = get_or(j, "pose_alpha", cfg.pose_alpha);
  cfg.flow_alpha = get_or(j, "flow_alpha", cfg.flow_alpha);
  cfg.m_max = get_or(j, "m_max", cfg.m_max);
  cfg.theta_move = get_or(j, "theta_move", cfg.memory_params.voxel_size / 4.0);
  cfg.use_gt_flow = get_or(j, "use_gt_flow", cfg.use_gt_flow);
  cfg.gt_moving_mask = get_or(j, "gt_moving_mask", cfg.gt_moving_mask);
  cfg.embed_dim = get_or(j, "embed_dim", cfg.embed_dim);
  cfg.seed = get_or(j, "seed", cfg.seed);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

nlohmann::ordered_json run_config_to_json(const runtime::RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["fps"] = cfg.fps;
  j["pose"] = cfg.pose_mode == runtime::PoseMode::known ? "known" : "unknown";
  j["system"] = cfg.system == runtime::SystemMode::dual_thread ? "dual" : "single";
  j["mode"] = cfg.clock == runtime::ClockMode::virtual_clock ? "virtual" : "wallclock";
  j["fallback"] = cfg.fallback == runtime::FallbackMode::requery ? "requery" : "label_copy";
  j["align"] = align::strategy_name(cfg.strategy.kind);
  j["eps"] = cfg.strategy.epsilon;
  j["nmax"] = cfg.strategy.n_max;
  j["brute_radius"] = cfg.strategy.brute_radius;
  j["components"] = {{"memory", cfg.enable.memory},
                     {"pose", cfg.enable.pose},
                     {"flow", cfg.enable.flow},
                     {"moving_mask", cfg.enable.moving_mask}};
  j["noise"] = {{"label_flip_prob", cfg.noise.label_flip_prob},
                {"logit_margin", cfg.noise.logit_margin},
                {"embed_sigma", cfg.noise.embed_sigma}};
  j["latency"] = {
      {"kind", cfg.latency.kind == backbone::LatencyModel::Kind::fixed ? "fixed" : "gaussian"},
      {"mean_ms", cfg.latency.mean_ms},
      {"stddev_ms", cfg.latency.stddev_ms},
      {"seed", cfg.latency.seed}};
  j["inference_cost"] = {{"fixed_ms", cfg.inference_cost.fixed_ms},
                         {"per_point_us", cfg.inference_cost.per_point_us}};
  j["predictive_overhead_ms"] = cfg.predictive_overhead_ms;
  j["forward_align_voxel_us"] = cfg.forward_align_voxel_us;
  j["voxel_size"] = cfg.memory_params.voxel_size;
  j["memory_max_age"] = cfg.memory_params.max_age_keyframes;
  j["memory_max_range"] = cfg.memory_params.max_range_m;
  j["pose_alpha"] = cfg.pose_alpha;
  j["flow_alpha"] = cfg.flow_alpha;
  j["m_max"] = cfg.m_max;
  j["theta_move"] = cfg.theta_move;
  j["use_gt_flow"] = cfg.use_gt_flow;
  j["gt_moving_mask"] = cfg.gt_moving_mask;
  j["embed_dim"] = cfg.embed_dim;
  j["seed"] = cfg.seed;
  return j;
}

ExperimentSpec experiment_from_json(const nlohmann::json& j) {
  ExperimentSpec spec;
  if (j.contains("run")) spec.base = run_config_from_json(j.at("run"));
  if (j.contains("scene")) spec.scene = scene_config_from_json(j.at("scene"));
  spec.scene_path = get_or<std::string>(j, "scene_path", "");
  spec.out_dir = get_or<std::string>(j, "out_dir", ".");
  const std::string sweep = get_or<std::string>(j, "sweep", "none");
  if (sweep == "none") {
    spec.sweep = ExperimentSpec::Sweep::none;
  } else if (sweep == "fps") {
    spec.sweep = ExperimentSpec::Sweep::fps;
    spec.fps_values = j.at("fps_values").get<std::vector<double>>();
  } else if (sweep == "latency") {
    spec.sweep = ExperimentSpec::Sweep::latency;
    spec.latency_values = j.at("latency_values").get<std::vector<double>>();
  } else if (sweep == "strategy") {
    spec.sweep = ExperimentSpec::Sweep::strategy;
    for (const auto& s : j.at("strategies")) {
      spec.strategies.push_back(align::strategy_from_string(s.get<std::string>()));
    }
  } else {
    throw ConfigError("field 'sweep' must be none|fps|latency|strategy");
  }
  return spec;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
}

}  // namespace streamseg::config
