#include <CLI11.hpp>
#include <Eigen/Dense>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>
#include <yaml-cpp/yaml.h>

#include "stereosil/bench.hpp"
#include "stereosil/breathing.hpp"
#include "stereosil/camera.hpp"
#include "stereosil/cmm.hpp"
#include "stereosil/drill.hpp"
#include "stereosil/image.hpp"
#include "stereosil/objective.hpp"
#include "stereosil/pose.hpp"
#include "stereosil/render.hpp"
#include "stereosil/robot.hpp"
#include "stereosil/sdr.hpp"
#include "stereosil/segmentation.hpp"
#include "stereosil/swarm.hpp"
#include "stereosil/synthetic.hpp"

namespace {

using nlohmann::json;
using namespace stereosil;

struct RobotBundle {
  RobotModel model;
  std::vector<TriangleMesh> meshes;
  bool builtin = false;
};

std::string dir_of(const std::string& path) {
  const std::size_t slash = path.find_last_of('/');
  return slash == std::string::npos ? std::string(".") : path.substr(0, slash);
}

RobotBundle load_robot_spec(const std::string& spec, const std::string& mesh_dir) {
  if (spec == "builtin:arm7") return {make_arm7(), arm7_link_meshes(), true};
  RobotModel model = load_urdf(spec);
  std::vector<TriangleMesh> meshes =
      load_link_meshes(model, mesh_dir.empty() ? dir_of(spec) : mesh_dir);
  return {std::move(model), std::move(meshes), false};
}

StereoRig load_rig_spec(const std::string& spec) {
  if (spec == "builtin:desk") return make_desk_rig();
  if (spec == "builtin:long-focal") return make_long_focal_rig();
  return load_stereo_rig(spec);
}

Eigen::Isometry3d pose_from_values(const std::vector<double>& v) {
  if (v.size() != 16) throw std::runtime_error("pose needs 16 row-major values");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = v[4 * r + c];
  Eigen::Isometry3d out;
  out.matrix() = m;
  return out;
}

Eigen::Isometry3d parse_pose_node(const YAML::Node& node) {
  return pose_from_values(node.as<std::vector<double>>());
}

std::vector<Eigen::VectorXd> parse_configs(const YAML::Node& node) {
  if (!node || !node.IsSequence() || node.size() == 0) {
    throw std::runtime_error("config needs a non-empty `configs` list of joint vectors");
  }
  std::vector<Eigen::VectorXd> out;
  for (const YAML::Node& row : node) {
    const std::vector<double> values = row.as<std::vector<double>>();
    Eigen::VectorXd q(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) q[i] = values[i];
    out.push_back(std::move(q));
  }
  return out;
}

json pose_to_json(const Eigen::Isometry3d& pose) {
  json v = json::array();
  const Eigen::Matrix4d m = pose.matrix();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) v.push_back(m(r, c));
  return v;
}

template <typename T>
T get_or(const YAML::Node& node, const std::string& key, T fallback) {
  if (node[key]) return node[key].as<T>();
  return fallback;
}

LossConfig parse_loss(const YAML::Node& node) {
  LossConfig loss;
  const std::string kind = get_or<std::string>(node, "loss", "soft_dice");
  if (kind == "dt_mse") {
    loss.kind = LossConfig::Kind::DtMse;
  } else if (kind == "soft_dice") {
    loss.kind = LossConfig::Kind::SoftDice;
  } else {
    throw std::runtime_error("unknown loss `" + kind + "` (expected dt_mse or soft_dice)");
  }
  loss.normalize_dt = get_or<bool>(node, "normalize_dt", false);
  return loss;
}

std::vector<RefineStage> parse_stages(const YAML::Node& node) {
  std::vector<RefineStage> stages;
  if (!node) return stages;
  for (const YAML::Node& row : node) {
    RefineStage stage;
    stage.width = row["width"].as<int>();
    stage.height = row["height"].as<int>();
    stage.tau = get_or<double>(row, "tau", 1.5);
    stage.opt.max_iters = get_or<int>(row, "iters", stage.opt.max_iters);
    stage.opt.step_size = get_or<double>(row, "step", stage.opt.step_size);
    stages.push_back(stage);
  }
  return stages;
}

RenderConfig rig_render_config(const StereoRig& rig, double tau) {
  RenderConfig cfg;
  cfg.width = rig.left.width;
  cfg.height = rig.left.height;
  cfg.tau = tau;
  cfg.z_min = rig.z_min;
  cfg.z_max = rig.z_max;
  return cfg;
}

std::vector<StereoObservation> load_observations(const std::string& masks_dir, int count) {
  ExternalMasksSource source(masks_dir);
  std::vector<StereoObservation> obs;
  for (int i = 0; i < count; ++i) {
    StereoObservation o;
    o.left = source.segment(i, 0, nullptr);
    o.right = source.segment(i, 1, nullptr);
    obs.push_back(std::move(o));
  }
  return obs;
}

void write_json_file(const json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed while writing " + path);
}

// ---------------------------------------------------------------------------

int run_localize(const std::string& config_path, const std::string& out_dir) {
  const YAML::Node cfg = YAML::LoadFile(config_path);
  const RobotBundle robot =
      load_robot_spec(cfg["robot"].as<std::string>(), get_or<std::string>(cfg, "mesh_dir", ""));
  const StereoRig rig = load_rig_spec(cfg["rig"].as<std::string>());
  const std::vector<Eigen::VectorXd> q_set = parse_configs(cfg["configs"]);
  const std::vector<StereoObservation> obs =
      load_observations(cfg["masks_dir"].as<std::string>(), static_cast<int>(q_set.size()));
  const Eigen::Isometry3d init = parse_pose_node(cfg["init_pose"]);
  const LossConfig loss = parse_loss(cfg);
  const std::vector<RefineStage> stages = parse_stages(cfg["stages"]);

  RefineResult result;
  if (stages.empty()) {
    OptimConfig opt;
    opt.max_iters = get_or<int>(cfg, "max_iters", opt.max_iters);
    opt.step_size = get_or<double>(cfg, "step_size", opt.step_size);
    const RenderConfig render_cfg = rig_render_config(rig, get_or<double>(cfg, "tau", 1.5));
    result = sdr_refine(encode_pose(init), robot.model, robot.meshes, q_set, obs, rig, render_cfg,
                        loss, opt);
  } else {
    result = sdr_refine_staged(encode_pose(init), robot.model, robot.meshes, q_set, obs, rig, loss,
                               stages);
  }

  const json doc = {{"pose", pose_to_json(decode_pose(result.pose).transform)},
                    {"loss", result.loss},
                    {"converged", result.converged},
                    {"stop_reason", result.stop_reason},
                    {"iterations", result.trace.size()}};
  write_json_file(doc, out_dir + "/pose.json");
  save_refine_trace_csv(result.trace, out_dir + "/trace.csv");
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int run_init_swarm(const std::string& config_path, const std::string& out_dir) {
  const YAML::Node cfg = YAML::LoadFile(config_path);
  const RobotBundle robot =
      load_robot_spec(cfg["robot"].as<std::string>(), get_or<std::string>(cfg, "mesh_dir", ""));
  const StereoRig rig = load_rig_spec(cfg["rig"].as<std::string>());
  const std::vector<Eigen::VectorXd> q_set = parse_configs(cfg["configs"]);
  const std::vector<StereoObservation> obs =
      load_observations(cfg["masks_dir"].as<std::string>(), static_cast<int>(q_set.size()));

  SwarmConfig swarm;
  if (const YAML::Node s = cfg["swarm"]) {
    swarm.n_particles = get_or<int>(s, "n_particles", swarm.n_particles);
    swarm.iterations = get_or<int>(s, "iterations", swarm.iterations);
    swarm.shell_inner = get_or<double>(s, "shell_inner", swarm.shell_inner);
    swarm.shell_outer = get_or<double>(s, "shell_outer", swarm.shell_outer);
    swarm.centre_sphere = get_or<double>(s, "centre_sphere", swarm.centre_sphere);
    swarm.mesh_fraction = get_or<double>(s, "mesh_fraction", swarm.mesh_fraction);
    swarm.fitness_width = get_or<int>(s, "fitness_width", swarm.fitness_width);
    swarm.fitness_height = get_or<int>(s, "fitness_height", swarm.fitness_height);
    swarm.top_k = get_or<int>(s, "top_k", swarm.top_k);
  }
  const std::uint64_t seed = get_or<std::uint64_t>(cfg, "seed", 0);

  const SwarmResult result =
      cso_initialize(robot.model, robot.meshes, q_set, obs, rig, swarm, seed);

  json candidates = json::array();
  for (const SwarmCandidate& c : result.candidates) {
    candidates.push_back({{"pose", pose_to_json(decode_pose(c.pose).transform)},
                          {"score", c.score},
                          {"particle_index", c.particle_index}});
  }
  const json doc = {{"candidates", candidates}};
  write_json_file(doc, out_dir + "/candidates.json");
  save_swarm_trace_csv(result.trace, out_dir + "/swarm_trace.csv");
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int run_icp(const std::string& config_path, const std::string& out_dir) {
  const YAML::Node cfg = YAML::LoadFile(config_path);
  const RobotBundle robot =
      load_robot_spec(cfg["robot"].as<std::string>(), get_or<std::string>(cfg, "mesh_dir", ""));
  const StereoRig rig = load_rig_spec(cfg["rig"].as<std::string>());
  const std::vector<Eigen::VectorXd> q_set = parse_configs(cfg["configs"]);
  const Eigen::Isometry3d init = parse_pose_node(cfg["init_pose"]);
  const LossConfig loss = parse_loss(cfg);

  IcpSchedule schedule;
  if (const YAML::Node s = cfg["schedule"]) {
    schedule.total_iters = get_or<int>(s, "total_iters", schedule.total_iters);
    schedule.refresh_every = get_or<int>(s, "refresh_every", schedule.refresh_every);
  }
  OptimConfig opt;
  opt.step_size = get_or<double>(cfg, "step_size", opt.step_size);

  ExternalMasksSource source(cfg["masks_dir"].as<std::string>());
  const RenderConfig render_cfg = rig_render_config(rig, get_or<double>(cfg, "tau", 1.5));
  const SdrIcpResult result = sdr_icp(encode_pose(init), robot.model, robot.meshes, q_set, rig,
                                      source, schedule, render_cfg, loss, opt);

  const json doc = {{"pose", pose_to_json(decode_pose(result.pose).transform)},
                    {"loss", result.loss},
                    {"converged", result.converged},
                    {"refreshes", result.refresh_masks.size()}};
  write_json_file(doc, out_dir + "/pose.json");
  save_refine_trace_csv(result.trace, out_dir + "/trace.csv");
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int run_bench(const std::string& scene_path, const std::string& protocol_path,
              const std::string& out_dir) {
  const YAML::Node scene_cfg = YAML::LoadFile(scene_path);
  const RobotBundle robot = load_robot_spec(get_or<std::string>(scene_cfg, "robot", "builtin:arm7"),
                                            get_or<std::string>(scene_cfg, "mesh_dir", ""));
  const StereoRig rig = load_rig_spec(get_or<std::string>(scene_cfg, "rig", "builtin:desk"));
  const int n_configs = get_or<int>(scene_cfg, "n_configs", 15);
  const double distance = get_or<double>(scene_cfg, "distance", 1.5);
  const std::uint64_t scene_seed = get_or<std::uint64_t>(scene_cfg, "seed", 1);
  Eigen::Isometry3d gt_pose =
      scene_cfg["pose"] ? parse_pose_node(scene_cfg["pose"]) : arm7_view_pose(distance);
  JointSampler sampler;
  sampler.limit_fraction = get_or<double>(scene_cfg, "limit_fraction", sampler.limit_fraction);

  SyntheticScene scene =
      generate_scene(robot.model, robot.meshes, rig, gt_pose, n_configs, sampler, scene_seed);

  std::unique_ptr<SegmentationSource> source;
  if (const YAML::Node d = scene_cfg["degrade"]) {
    DegradeParams params;
    params.dilation = get_or<double>(d, "dilation", 0.0);
    params.boundary_noise_amp = get_or<double>(d, "boundary_noise_amp", 0.0);
    params.occluder_count = get_or<int>(d, "occluder_count", 0);
    params.occluder_size_min = get_or<double>(d, "occluder_size_min", 0.0);
    params.occluder_size_max = get_or<double>(d, "occluder_size_max", 0.0);
    params.blur_radius = get_or<double>(d, "blur_radius", 0.0);
    params.dropout_rate = get_or<double>(d, "dropout_rate", 0.0);
    if (d["target_iou"]) params.target_iou = d["target_iou"].as<double>();
    params.seed = get_or<std::uint64_t>(d, "seed", scene_seed);
    scene.degradation = params;
    source = std::make_unique<OracleDegradedSource>(scene.masks, params);
  } else {
    source = std::make_unique<GroundTruthSource>(scene.masks);
  }

  const YAML::Node proto_cfg = YAML::LoadFile(protocol_path);
  McvProtocol protocol;
  if (proto_cfg["configs_per_fit"]) {
    protocol.configs_per_fit = proto_cfg["configs_per_fit"].as<std::vector<int>>();
  }
  protocol.n_repeats = get_or<int>(proto_cfg, "n_repeats", protocol.n_repeats);
  protocol.seed = get_or<std::uint64_t>(proto_cfg, "seed", 0);

  const std::string method_name = get_or<std::string>(proto_cfg, "method", "sdr");
  McvMethod method;
  if (method_name == "sdr") {
    method = McvMethod::Sdr;
  } else if (method_name == "sdr_icp") {
    method = McvMethod::SdrIcp;
  } else {
    throw std::runtime_error("unknown method `" + method_name + "` (expected sdr or sdr_icp)");
  }
  const std::string init_name = get_or<std::string>(proto_cfg, "init", "perturbed");
  McvInit init;
  if (init_name == "perturbed") {
    init = McvInit::PerturbedTruth;
  } else if (init_name == "cso") {
    init = McvInit::Cso;
  } else {
    throw std::runtime_error("unknown init `" + init_name + "` (expected perturbed or cso)");
  }

  McvOptions options;
  options.loss = parse_loss(proto_cfg);
  options.stages = parse_stages(proto_cfg["stages"]);
  if (const YAML::Node s = proto_cfg["schedule"]) {
    options.schedule.total_iters = get_or<int>(s, "total_iters", options.schedule.total_iters);
    options.schedule.refresh_every = get_or<int>(s, "refresh_every", options.schedule.refresh_every);
  }
  options.init_translation_max =
      get_or<double>(proto_cfg, "init_translation_max", options.init_translation_max);
  options.init_rotation_deg = get_or<double>(proto_cfg, "init_rotation_deg", options.init_rotation_deg);

  const ErrorReport report = run_mcv(scene, protocol, method, *source, init, options);
  save_error_report_csv(report, out_dir + "/report.csv");
  save_error_report_json(report, out_dir + "/report.json");

  json rows = json::array();
  for (const ErrorReportRow& row : report.summary) {
    rows.push_back({{"fit_size", row.fit_size}, {"median_mm", row.median_mm}});
  }
  std::cout << json{{"method", report.method}, {"rows", rows}}.dump(2) << "\n";
  return 0;
}

int run_breathe(const std::string& config_path, const std::string& out_dir) {
  const YAML::Node cfg = YAML::LoadFile(config_path);
  const std::string mode = get_or<std::string>(cfg, "mode", "fit");

  FitConfig fit_cfg;
  fit_cfg.horizon_s = get_or<double>(cfg, "horizon", fit_cfg.horizon_s);
  fit_cfg.omega_min = get_or<double>(cfg, "omega_min", fit_cfg.omega_min);
  fit_cfg.omega_max = get_or<double>(cfg, "omega_max", fit_cfg.omega_max);
  fit_cfg.grid_points = get_or<int>(cfg, "grid_points", fit_cfg.grid_points);

  if (mode == "fit") {
    const std::string samples_path = cfg["samples_csv"].as<std::string>();
    std::ifstream in(samples_path);
    if (!in) throw std::runtime_error("cannot read " + samples_path);
    std::vector<BreathingSample> samples;
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream row(line);
      double t, z;
      char comma;
      if (row >> t >> comma >> z) samples.push_back({t, z});
    }
    const BreathingFit fit = fit_breathing(samples, fit_cfg);
    const json doc = {{"a0", fit.model.a0},
                      {"a", fit.model.a},
                      {"b", fit.model.b},
                      {"omega0", fit.model.omega0},
                      {"rms_residual_mm", fit.rms_residual_mm},
                      {"degenerate", fit.degenerate},
                      {"poor_fit", fit.poor_fit}};
    write_json_file(doc, out_dir + "/model.json");
    std::cout << doc.dump(2) << "\n";
    return 0;
  }
  if (mode != "simulate") throw std::runtime_error("breathe mode must be fit or simulate");

  const YAML::Node s = cfg["scenario"];
  if (!s) throw std::runtime_error("simulate mode needs a `scenario` block");
  ScenarioConfig scenario;
  scenario.true_breathing.a0 = get_or<double>(s, "a0", 0.0);
  if (s["a"]) {
    const auto a = s["a"].as<std::vector<double>>();
    for (std::size_t i = 0; i < a.size() && i < 3; ++i) scenario.true_breathing.a[i] = a[i];
  }
  if (s["b"]) {
    const auto b = s["b"].as<std::vector<double>>();
    for (std::size_t i = 0; i < b.size() && i < 3; ++i) scenario.true_breathing.b[i] = b[i];
  }
  scenario.true_breathing.omega0 = get_or<double>(s, "omega0", 1.3);
  scenario.duration_s = get_or<double>(s, "duration", scenario.duration_s);
  scenario.sample_rate_hz = get_or<double>(s, "rate", scenario.sample_rate_hz);
  scenario.noise_sigma_mm = get_or<double>(s, "noise_sigma_mm", scenario.noise_sigma_mm);
  if (const YAML::Node p = s["phases"]) {
    const auto starts = p.as<std::vector<double>>();
    if (starts.size() != 3) throw std::runtime_error("phases needs [post_contact, drill_stop, retraction] starts");
    scenario.phases = {starts[0], starts[1], starts[2]};
  }
  scenario.anatomy_surface_z = get_or<double>(s, "anatomy_surface_z", scenario.anatomy_surface_z);
  scenario.contact_stiffness = get_or<double>(s, "contact_stiffness", scenario.contact_stiffness);
  const std::string comp = get_or<std::string>(s, "compensation", "fitted");
  if (comp == "off") {
    scenario.compensation = CompensationMode::Off;
  } else if (comp == "fitted") {
    scenario.compensation = CompensationMode::Fitted;
  } else if (comp == "oracle") {
    scenario.compensation = CompensationMode::Oracle;
  } else {
    throw std::runtime_error("compensation must be off, fitted, or oracle");
  }
  scenario.seed = get_or<std::uint64_t>(s, "seed", 0);

  ControlGains gains;
  if (const YAML::Node g = cfg["gains"]) {
    gains.k = get_or<double>(g, "k", gains.k);
    gains.c = get_or<double>(g, "c", gains.c);
    gains.f_d = get_or<double>(g, "f_d", gains.f_d);
    gains.align_gain = get_or<double>(g, "align_gain", gains.align_gain);
    gains.approach_speed = get_or<double>(g, "approach_speed", gains.approach_speed);
    gains.retract_speed = get_or<double>(g, "retract_speed", gains.retract_speed);
  }

  const RobotBundle robot = load_robot_spec(get_or<std::string>(cfg, "robot", "builtin:arm7"),
                                            get_or<std::string>(cfg, "mesh_dir", ""));
  Eigen::VectorXd q0 = arm7_home();
  if (cfg["q0"]) {
    const auto v = cfg["q0"].as<std::vector<double>>();
    q0.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) q0[i] = v[i];
  }

  const DrillSimResult result = simulate_drilling(scenario, fit_cfg, gains, robot.model, q0);
  save_drill_log_csv(result, out_dir + "/drill_log.csv");
  const json doc = {{"rows", result.rows.size()},
                    {"any_rank_deficient", result.any_rank_deficient},
                    {"final_force_n", result.rows.empty() ? 0.0 : result.rows.back().force_n}};
  write_json_file(doc, out_dir + "/summary.json");
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int run_cmm(const std::string& config_path, const std::string& out_dir) {
  const YAML::Node cfg = YAML::LoadFile(config_path);
  const YAML::Node items = cfg["items"];
  if (!items || !items.IsSequence() || items.size() < 2) {
    throw std::runtime_error("cmm config needs an `items` list with at least two entries");
  }
  std::vector<ImageU8> images;
  std::vector<ImageF> masks;
  std::vector<bool> visibility;
  for (const YAML::Node& item : items) {
    images.push_back(load_png(item["image"].as<std::string>()));
    masks.push_back(load_mask_png(item["mask"].as<std::string>()));
    visibility.push_back(get_or<bool>(item, "visible", true));
  }
  CmmConfig cmm_cfg;
  cmm_cfg.batch_size = static_cast<int>(images.size());
  cmm_cfg.hflip_probability = get_or<double>(cfg, "hflip_probability", cmm_cfg.hflip_probability);
  cmm_cfg.affine_probability = get_or<double>(cfg, "affine_probability", cmm_cfg.affine_probability);
  cmm_cfg.scale_min = get_or<double>(cfg, "scale_min", cmm_cfg.scale_min);
  cmm_cfg.scale_max = get_or<double>(cfg, "scale_max", cmm_cfg.scale_max);
  cmm_cfg.rotation_max_deg = get_or<double>(cfg, "rotation_max_deg", cmm_cfg.rotation_max_deg);
  cmm_cfg.translation_max_fraction =
      get_or<double>(cfg, "translation_max_fraction", cmm_cfg.translation_max_fraction);
  cmm_cfg.photometric_probability =
      get_or<double>(cfg, "photometric_probability", cmm_cfg.photometric_probability);
  cmm_cfg.union_host_mask = get_or<bool>(cfg, "union_host_mask", cmm_cfg.union_host_mask);
  cmm_cfg.seed = get_or<std::uint64_t>(cfg, "seed", 0);

  const CmmBatch batch = cmm_compose(images, masks, cmm_cfg, visibility);
  save_cmm_batch(batch, out_dir);
  std::cout << json{{"written", batch.items.size()}, {"directory", out_dir}}.dump(2) << "\n";
  return 0;
}

int run_render(const std::string& robot_spec, const std::string& mesh_dir,
               const std::string& rig_spec, const std::string& pose_spec, const std::string& q_csv,
               const std::string& view, double tau, double distance, const std::string& out_path) {
  const RobotBundle robot = load_robot_spec(robot_spec, mesh_dir);
  const StereoRig rig = load_rig_spec(rig_spec);

  Eigen::VectorXd q;
  if (q_csv.empty()) {
    if (!robot.builtin) throw std::runtime_error("--q is required for URDF robots");
    q = arm7_home();
  } else {
    std::vector<double> values;
    std::istringstream stream(q_csv);
    std::string tok;
    while (std::getline(stream, tok, ',')) values.push_back(std::stod(tok));
    q.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) q[i] = values[i];
  }

  // The builtin scene camera views the fixture origin from `distance` metres;
  // --pose places the robot base within that scene (identity = centred).
  Eigen::Isometry3d user_pose = Eigen::Isometry3d::Identity();
  if (pose_spec != "identity") {
    const YAML::Node n = YAML::LoadFile(pose_spec);
    user_pose = parse_pose_node(n["pose"] ? n["pose"] : n);
  }
  const Eigen::Isometry3d scene_view =
      robot.builtin ? arm7_view_pose(distance) : Eigen::Isometry3d::Identity();
  Eigen::Isometry3d pose = scene_view * user_pose;

  RenderConfig cfg = rig_render_config(rig, tau);
  CameraIntrinsics intrinsics = rig.left;
  if (view == "right") {
    pose = rig.left_to_right * pose;
    intrinsics = rig.right;
  } else if (view != "left") {
    throw std::runtime_error("--view must be left or right");
  }
  const ImageF mask = render_silhouette(robot.model, robot.meshes, q, pose, intrinsics, cfg);
  save_mask_png(mask, out_path);
  std::cout << json{{"written", out_path}, {"width", mask.width}, {"height", mask.height}}.dump(2)
            << "\n";
  return 0;
}

Eigen::Vector2d parse_pixel(const std::string& text) {
  const std::size_t comma = text.find(',');
  if (comma == std::string::npos) throw std::runtime_error("pixel must be `u,v`");
  return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
}

int run_triangulate(const std::string& rig_spec, const std::string& left, const std::string& right,
                    const std::string& pairs_path, const std::string& out_path) {
  const StereoRig rig = load_rig_spec(rig_spec);
  if (!pairs_path.empty()) {
    std::ifstream in(pairs_path);
    if (!in) throw std::runtime_error("cannot read " + pairs_path);
    std::ofstream out(out_path.empty() ? "triangulated.csv" : out_path);
    if (!out) throw std::runtime_error("cannot write output CSV");
    out.precision(17);
    out << "x_m,y_m,z_m,reprojection_error_px\n";
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
      std::istringstream row(line);
      double ul, vl, ur, vr;
      char c1, c2, c3;
      if (!(row >> ul >> c1 >> vl >> c2 >> ur >> c3 >> vr)) continue;
      const TriangulationResult r = triangulate(rig, {ul, vl}, {ur, vr});
      out << r.point_left.x() << ',' << r.point_left.y() << ',' << r.point_left.z() << ','
          << r.reprojection_error_px << "\n";
      ++rows;
    }
    std::cout << json{{"rows", rows}}.dump(2) << "\n";
    return 0;
  }
  const TriangulationResult r = triangulate(rig, parse_pixel(left), parse_pixel(right));
  const json doc = {{"point", {r.point_left.x(), r.point_left.y(), r.point_left.z()}},
                    {"reprojection_error_px", r.reprojection_error_px},
                    {"condition_number", r.condition_number}};
  if (!out_path.empty()) write_json_file(doc, out_path);
  std::cout << doc.dump(2) << "\n";
  return 0;
}

json error_json(const std::string& subcommand, const std::string& message) {
  return {{"error", {{"subcommand", subcommand}, {"message", message}}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo silhouette robot localisation toolkit"};
  app.require_subcommand(0, 1);

  std::string config_path, out_dir = ".", protocol_path;

  CLI::App* localize = app.add_subcommand("localize", "Refine a robot pose against stereo masks");
  localize->add_option("--config", config_path, "YAML config")->required();
  localize->add_option("--out", out_dir, "Output directory");

  CLI::App* init_swarm =
      app.add_subcommand("init-swarm", "Global pose initialisation by camera-placement swarm");
  init_swarm->add_option("--config", config_path, "YAML config")->required();
  init_swarm->add_option("--out", out_dir, "Output directory");

  CLI::App* icp = app.add_subcommand(
      "icp", "Alternate segmentation (with rendered prior) and pose refinement");
  icp->add_option("--config", config_path, "YAML config")->required();
  icp->add_option("--out", out_dir, "Output directory");

  CLI::App* bench = app.add_subcommand("bench", "Synthetic Monte-Carlo cross-validation benchmark");
  bench->add_option("--config", config_path, "Scene YAML config")->required();
  bench->add_option("--protocol", protocol_path, "Protocol YAML config")->required();
  bench->add_option("--out", out_dir, "Output directory");

  CLI::App* breathe = app.add_subcommand("breathe", "Fit a breathing model or run the drill simulation");
  breathe->add_option("--config", config_path, "YAML config")->required();
  breathe->add_option("--out", out_dir, "Output directory");

  CLI::App* cmm = app.add_subcommand("cmm", "Copy-move-merge augmentation batch");
  cmm->add_option("--config", config_path, "YAML config")->required();
  cmm->add_option("--out", out_dir, "Output directory");

  std::string robot_spec = "builtin:arm7", mesh_dir, rig_spec = "builtin:desk";
  std::string pose_spec = "identity", q_csv, view = "left", render_out = "render.png";
  double tau = 0.0, distance = 1.5;
  CLI::App* render = app.add_subcommand("render", "Render a silhouette mask to PNG");
  render->add_option("--robot", robot_spec, "builtin:arm7 or URDF path");
  render->add_option("--mesh-dir", mesh_dir, "Mesh directory for URDF robots");
  render->add_option("--rig", rig_spec, "builtin:desk, builtin:long-focal, or rig YAML");
  render->add_option("--pose", pose_spec, "`identity` or YAML file with 16 row-major values");
  render->add_option("--q", q_csv, "Comma-separated joint values (default: builtin home)");
  render->add_option("--view", view, "left or right");
  render->add_option("--tau", tau, "Soft band width in pixels (0 = hard)");
  render->add_option("--distance", distance, "Builtin scene camera distance, metres");
  render->add_option("--out", render_out, "Output PNG path");

  std::string left_px, right_px, pairs_path, tri_out;
  CLI::App* tri = app.add_subcommand("triangulate", "Triangulate pixel correspondences");
  tri->add_option("--rig", rig_spec, "builtin:desk, builtin:long-focal, or rig YAML");
  tri->add_option("--left", left_px, "Left pixel `u,v`");
  tri->add_option("--right", right_px, "Right pixel `u,v`");
  tri->add_option("--pairs", pairs_path, "CSV of u_left,v_left,u_right,v_right rows");
  tri->add_option("--out", tri_out, "Output path (JSON for a single pair, CSV for --pairs)");

  if (argc <= 1) {
    std::cout << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << error_json("parse", e.what()).dump(2) << "\n";
    return 2;
  }

  std::string active = "none";
  try {
    if (app.got_subcommand(localize)) {
      active = "localize";
      return run_localize(config_path, out_dir);
    }
    if (app.got_subcommand(init_swarm)) {
      active = "init-swarm";
      return run_init_swarm(config_path, out_dir);
    }
    if (app.got_subcommand(icp)) {
      active = "icp";
      return run_icp(config_path, out_dir);
    }
    if (app.got_subcommand(bench)) {
      active = "bench";
      return run_bench(config_path, protocol_path, out_dir);
    }
    if (app.got_subcommand(breathe)) {
      active = "breathe";
      return run_breathe(config_path, out_dir);
    }
    if (app.got_subcommand(cmm)) {
      active = "cmm";
      return run_cmm(config_path, out_dir);
    }
    if (app.got_subcommand(render)) {
      active = "render";
      return run_render(robot_spec, mesh_dir, rig_spec, pose_spec, q_csv, view, tau, distance,
                        render_out);
    }
    if (app.got_subcommand(tri)) {
      active = "triangulate";
      if (pairs_path.empty() && (left_px.empty() || right_px.empty())) {
        throw std::runtime_error("need either --pairs or both --left and --right");
      }
      return run_triangulate(rig_spec, left_px, right_px, pairs_path, tri_out);
    }
    std::cout << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cout << error_json(active, e.what()).dump(2) << "\n";
    return 1;
  }
}
