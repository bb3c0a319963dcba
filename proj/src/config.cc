#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "popup/pipeline.h"

namespace popup {

namespace {

using nlohmann::json;

constexpr double kDeg = M_PI / 180.0;

// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  template <typename T>
  void read(const char* key, T& field, double scale = 1.0) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) fail(std::string(key) + " must be a number");
        field = v.get<double>() * scale;
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(std::string(key) + " must be a boolean");
        field = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) fail(std::string(key) + " must be an integer");
        field = v.get<T>();
      } else {
        field = v.get<T>();
      }
    } catch (const json::exception& e) {
      fail(std::string(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail("unknown key '" + k + "'");
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::InvalidSpec, "config " + (path_.empty() ? std::string("root") : path_) + ": " + msg);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
void section(Section& parent, const char* key, F&& body) {
  if (const json* j = parent.child(key)) {
    Section s(*j, key);
    body(s);
    s.finish();
  }
}

}  // namespace

void PipelineConfig::validate() const {
  selection.validate();
  association.validate();
  noise.validate();
  if (optimize_every < 1) throw Error(ErrorCode::InvalidSpec, "optimize_every must be at least 1");
  if (pixel_sigma < 0 || !(wall_sigma_floor > 0)) {
    throw Error(ErrorCode::InvalidSpec, "pixel_sigma must be nonnegative and wall_sigma_floor positive");
  }
  if (!(plane_sigma > 0) || !(odom_trans_sigma > 0) || !(odom_rot_sigma > 0) || !(motion_trans_sigma > 0) ||
      !(motion_rot_sigma > 0) || !(prior_sigma > 0)) {
    throw Error(ErrorCode::InvalidSpec, "noise sigmas of the graph must be positive");
  }
  if (!(camera_height > 0) || !(max_popup_depth > 0) || !(wall_height > 0) || !(var_max > 0) ||
      !(frame_spacing > 0)) {
    throw Error(ErrorCode::InvalidSpec, "heights, depths, spacing and var_max must be positive");
  }
  if (loop.gap_min < 0 || !(loop.radius > 0) || !(loop.max_plane_dist > 0)) throw Error(ErrorCode::InvalidSpec, "invalid loop parameters");
  if (solver.max_iterations < 1) throw Error(ErrorCode::InvalidSpec, "max_iterations must be at least 1");
}

PipelineConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  Section s(root, "");
  section(s, "selection", [&](Section& x) {
    x.read("close_threshold", c.selection.close_threshold);
    x.read("overlap_threshold", c.selection.overlap_threshold);
    x.read("min_length", c.selection.min_length);
    x.read("merge_gap", c.selection.merge_gap);
    x.read("merge_angle_deg", c.selection.merge_angle_deg);
  });
  section(s, "association", [&](Section& x) {
    x.read("max_normal_angle_deg", c.association.max_normal_angle, kDeg);
    x.read("max_plane_dist", c.association.max_plane_dist);
    x.read("min_overlap_ratio", c.association.min_overlap_ratio);
    x.read("w_angle", c.association.w_angle);
    x.read("w_dist", c.association.w_dist);
    x.read("w_overlap", c.association.w_overlap);
    x.read("active_window", c.association.active_window);
  });
  section(s, "loop", [&](Section& x) {
    x.read("enabled", c.loop_closure);
    x.read("gap_min", c.loop.gap_min);
    x.read("radius", c.loop.radius);
    x.read("min_matches", c.loop.min_matches);
    x.read("max_plane_dist", c.loop.max_plane_dist);
  });
  section(s, "solver", [&](Section& x) {
    x.read("max_iterations", c.solver.max_iterations);
    x.read("relative_tolerance", c.solver.relative_tolerance);
    x.read("step_tolerance", c.solver.step_tolerance);
    x.read("lambda_init", c.solver.lambda_init);
    x.read("check_rank", c.solver.check_rank);
  });
  section(s, "scenario", [&](Section& x) {
    x.read("lengths", c.scenario.lengths);
    x.read("widths", c.scenario.widths);
    x.read("turns_deg", c.scenario.turns_deg);
    x.read("loop", c.scenario.loop);
    x.read("camera_height", c.scenario.camera_height);
    x.read("wall_height", c.scenario.wall_height);
    x.read("max_turn_step_deg", c.scenario.max_turn_step_deg);
    x.read("end_margin", c.scenario.end_margin);
    x.read("start_offset", c.scenario.start_offset);
    x.read("frame_spacing", c.frame_spacing);
    x.read("fx", c.scenario.k.fx);
    x.read("fy", c.scenario.k.fy);
    x.read("cx", c.scenario.k.cx);
    x.read("cy", c.scenario.k.cy);
    x.read("width", c.scenario.width);
    x.read("height", c.scenario.height);
  });
  section(s, "noise", [&](Section& x) {
    x.read("pixel_sigma", c.noise.pixel_sigma);
    x.read("odom_trans_sigma", c.noise.odom_trans_sigma);
    x.read("odom_rot_sigma_deg", c.noise.odom_rot_sigma, kDeg);
    x.read("split_probability", c.noise.split_probability);
    x.read("split_gap", c.noise.split_gap);
    x.read("clutter_per_frame", c.noise.clutter_per_frame);
    x.read("planar_odometry", c.noise.planar_odometry);
    x.read("seed", c.noise.seed);
  });
  section(s, "graph", [&](Section& x) {
    x.read("use_odometry", c.use_odometry);
    x.read("optimize_every", c.optimize_every);
    x.read("plane_sigma", c.plane_sigma);
    x.read("pixel_sigma", c.pixel_sigma);
    x.read("wall_sigma_floor", c.wall_sigma_floor);
    x.read("odom_trans_sigma", c.odom_trans_sigma);
    x.read("odom_rot_sigma_deg", c.odom_rot_sigma, kDeg);
    x.read("motion_trans_sigma", c.motion_trans_sigma);
    x.read("motion_rot_sigma_deg", c.motion_rot_sigma, kDeg);
    x.read("prior_sigma", c.prior_sigma);
    x.read("camera_height", c.camera_height);
    x.read("max_popup_depth", c.max_popup_depth);
    x.read("wall_height", c.wall_height);
  });
  section(s, "fusion", [&](Section& x) { x.read("var_max", c.var_max); });
  s.finish();
  c.validate();
  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const PipelineConfig& c) {
  json j;
  j["selection"] = {{"close_threshold", c.selection.close_threshold},
                    {"overlap_threshold", c.selection.overlap_threshold},
                    {"min_length", c.selection.min_length},
                    {"merge_gap", c.selection.merge_gap},
                    {"merge_angle_deg", c.selection.merge_angle_deg}};
  j["association"] = {{"max_normal_angle_deg", c.association.max_normal_angle / kDeg},
                      {"max_plane_dist", c.association.max_plane_dist},
                      {"min_overlap_ratio", c.association.min_overlap_ratio},
                      {"w_angle", c.association.w_angle},
                      {"w_dist", c.association.w_dist},
                      {"w_overlap", c.association.w_overlap},
                      {"active_window", c.association.active_window}};
  j["loop"] = {{"enabled", c.loop_closure},
               {"gap_min", c.loop.gap_min},
               {"radius", c.loop.radius},
               {"min_matches", c.loop.min_matches},
               {"max_plane_dist", c.loop.max_plane_dist}};
  j["solver"] = {{"max_iterations", c.solver.max_iterations},
                 {"relative_tolerance", c.solver.relative_tolerance},
                 {"step_tolerance", c.solver.step_tolerance},
                 {"lambda_init", c.solver.lambda_init},
                 {"check_rank", c.solver.check_rank}};
  j["scenario"] = {{"lengths", c.scenario.lengths},
                   {"widths", c.scenario.widths},
                   {"turns_deg", c.scenario.turns_deg},
                   {"loop", c.scenario.loop},
                   {"camera_height", c.scenario.camera_height},
                   {"wall_height", c.scenario.wall_height},
                   {"max_turn_step_deg", c.scenario.max_turn_step_deg},
                   {"end_margin", c.scenario.end_margin},
                   {"start_offset", c.scenario.start_offset},
                   {"frame_spacing", c.frame_spacing},
                   {"fx", c.scenario.k.fx},
                   {"fy", c.scenario.k.fy},
                   {"cx", c.scenario.k.cx},
                   {"cy", c.scenario.k.cy},
                   {"width", c.scenario.width},
                   {"height", c.scenario.height}};
  j["noise"] = {{"pixel_sigma", c.noise.pixel_sigma},
                {"odom_trans_sigma", c.noise.odom_trans_sigma},
                {"odom_rot_sigma_deg", c.noise.odom_rot_sigma / kDeg},
                {"split_probability", c.noise.split_probability},
                {"split_gap", c.noise.split_gap},
                {"clutter_per_frame", c.noise.clutter_per_frame},
                {"planar_odometry", c.noise.planar_odometry},
                {"seed", c.noise.seed}};
  j["graph"] = {{"use_odometry", c.use_odometry},
                {"optimize_every", c.optimize_every},
                {"plane_sigma", c.plane_sigma},
                {"pixel_sigma", c.pixel_sigma},
                {"wall_sigma_floor", c.wall_sigma_floor},
                {"odom_trans_sigma", c.odom_trans_sigma},
                {"odom_rot_sigma_deg", c.odom_rot_sigma / kDeg},
                {"motion_trans_sigma", c.motion_trans_sigma},
                {"motion_rot_sigma_deg", c.motion_rot_sigma / kDeg},
                {"prior_sigma", c.prior_sigma},
                {"camera_height", c.camera_height},
                {"max_popup_depth", c.max_popup_depth},
                {"wall_height", c.wall_height}};
  j["fusion"] = {{"var_max", c.var_max}};
  return j.dump(2);
}

}  // namespace popup
