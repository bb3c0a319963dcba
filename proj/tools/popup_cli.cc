// popup: command-line front end for the pop-up plane SLAM toolkit.

#include <chrono>
#include <filesystem>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "popup/pipeline.h"

namespace fs = std::filesystem;
using namespace popup;

namespace {

enum Exit { kOk = 0, kUsage = 1, kDataError = 2, kSolverFailure = 3 };

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON configuration file")->envname("POPUP_CONFIG");
  cmd->add_option("--seed", c.seed, "noise seed, overrides the config")->envname("POPUP_SEED");
  cmd->add_option("--out", c.out, "output directory")->envname("POPUP_OUT");
}

PipelineConfig load(const Common& c, const CLI::App* cmd) {
  PipelineConfig config = c.config_path.empty() ? PipelineConfig{} : load_config(c.config_path);
  if (cmd->count("--seed") > 0 || std::getenv("POPUP_SEED")) config.noise.seed = c.seed;
  config.validate();
  return config;
}

fs::path out_dir(const Common& c) {
  fs::path p(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + p.string() + ": " + ec.message());
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  return out;
}

std::vector<Pose3> read_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<Pose3> poses;
  for (auto& [stamp, pose] : parse_trajectory(in, path)) poses.push_back(pose);
  return poses;
}

nlohmann::json report_json(const EvalReport& r) {
  return {{"ate_mean_m", r.ate_mean},
          {"ate_std_m", r.ate_std},
          {"ate_endpoint_m", r.ate_endpoint},
          {"loop_error_percent", r.loop_error_percent},
          {"normal_error_deg", r.normal_error_deg},
          {"depth_error_mean_m", r.depth_error_mean},
          {"depth_fraction_within_0.1m", r.depth_fraction_01},
          {"depth_pixels", r.depth_pixels},
          {"path_length_m", r.path_length}};
}

void print_table(std::ostream& out, const nlohmann::json& j) {
  for (const auto& [k, v] : j.items()) {
    if (v.is_object()) {
      print_table(out, v);
    } else {
      out << std::left << std::setw(30) << k << v.dump() << "\n";
    }
  }
}

void write_outputs(const fs::path& dir, const PipelineResult& r, const PipelineConfig& config) {
  {
    std::vector<double> stamps(r.frame_ids.begin(), r.frame_ids.end());
    auto out = open_out(dir / "trajectory.txt");
    write_trajectory(out, r.trajectory, stamps);
  }
  {
    std::vector<MeshFace> faces = mesh_faces(r.graph);
    std::vector<std::string> diagnostics;
    auto out = open_out(dir / "map.ply");
    write_mesh(out, faces, &diagnostics);
    for (const auto& d : diagnostics) std::cerr << "mesh: " << d << "\n";
  }
  {
    auto out = open_out(dir / "graph.txt");
    write_graph(out, r.graph);
  }
  {
    auto out = open_out(dir / "log.txt");
    for (const auto& l : r.log) out << l << "\n";
  }
  auto out = open_out(dir / "config.json");
  out << config_to_json(config) << "\n";
}

nlohmann::json solver_json(const PipelineResult& r, double seconds) {
  return {{"poses", r.graph.poses().size()},
          {"planes", r.graph.landmarks().size()},
          {"factors", r.graph.factors().size()},
          {"optimizations", r.optimizations},
          {"landmarks_merged", r.landmarks_merged},
          {"final_chi2", r.final_chi2},
          {"runtime_s", seconds}};
}

int cmd_simulate(const Common& c, const CLI::App* cmd) {
  const PipelineConfig config = load(c, cmd);
  const fs::path dir = out_dir(c);
  const ScenarioTruth truth = generate_corridor(config.scenario, config.frame_spacing);
  {
    auto out = open_out(dir / "dataset.txt");
    write_dataset(out, dataset_from_simulation(truth, config.noise));
  }
  {
    auto out = open_out(dir / "truth_trajectory.txt");
    write_trajectory(out, truth.trajectory);
  }
  auto out = open_out(dir / "config.json");
  out << config_to_json(config) << "\n";
  std::cout << "simulated " << truth.trajectory.size() << " frames, " << truth.planes.size() << " planes, "
            << truth.path_length << " m into " << dir.string() << "\n";
  return kOk;
}

int cmd_run(const Common& c, const CLI::App* cmd, const std::string& dataset_path) {
  const PipelineConfig config = load(c, cmd);
  const fs::path dir = out_dir(c);
  std::optional<ScenarioTruth> truth;
  Dataset data;
  if (dataset_path.empty()) {
    truth = generate_corridor(config.scenario, config.frame_spacing);
    data = dataset_from_simulation(*truth, config.noise);
  } else {
    data = read_dataset(dataset_path);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineResult r = run_pipeline(data, config);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_outputs(dir, r, config);

  nlohmann::json report;
  report["solver"] = solver_json(r, seconds);
  if (truth) report["metrics"] = report_json(evaluate(*truth, r.trajectory, map_planes(r.graph)));
  auto out = open_out(dir / "report.json");
  out << report.dump(2) << "\n";
  print_table(std::cout, report);
  return kOk;
}

int cmd_evaluate(const Common& c, const CLI::App* cmd, const std::string& trajectory_path,
                 const std::string& graph_path) {
  const PipelineConfig config = load(c, cmd);
  const ScenarioTruth truth = generate_corridor(config.scenario, config.frame_spacing);
  const std::vector<Pose3> poses = read_poses(trajectory_path);
  std::vector<MapPlane> map;
  if (!graph_path.empty()) {
    std::ifstream in(graph_path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + graph_path);
    map = map_planes(parse_graph(in, graph_path));
  }
  EvalOptions options;
  if (map.empty()) options.depth_frame_step = 0;
  const nlohmann::json report = report_json(evaluate(truth, poses, map, options));
  if (cmd->count("--out") > 0 || std::getenv("POPUP_OUT")) {
    auto out = open_out(out_dir(c) / "report.json");
    out << report.dump(2) << "\n";
  }
  print_table(std::cout, report);
  return kOk;
}

int cmd_select_edges(const Common& c, const CLI::App* cmd, const std::string& dataset_path) {
  const PipelineConfig config = load(c, cmd);
  const Dataset data = read_dataset(dataset_path);
  Dataset selected;
  selected.k = data.k;
  std::size_t total = 0;
  for (const auto& fr : data.frames) {
    FrameRecord s{fr.frame, {}, {}, std::nullopt, std::nullopt};
    try {
      s.edges = select_frame_edges(fr, config.selection);
    } catch (const Error& e) {
      std::cerr << "frame " << fr.frame << ": " << e.what() << "\n";
    }
    total += s.edges.size();
    selected.frames.push_back(std::move(s));
  }
  auto out = open_out(out_dir(c) / "selected.txt");
  write_dataset(out, selected);
  std::cout << "selected " << total << " edges over " << selected.frames.size() << " frames\n";
  return kOk;
}

int cmd_fuse_depth(const Common& c, const CLI::App* cmd, const std::array<std::string, 4>& inputs) {
  const PipelineConfig config = load(c, cmd);
  const FusedMap fused = fuse_depth_map(read_raster(inputs[0]), read_raster(inputs[1]), read_raster(inputs[2]),
                                        read_raster(inputs[3]), config.var_max);
  const fs::path dir = out_dir(c);
  write_raster((dir / "fused_depth.pudr").string(), fused.depth);
  write_raster((dir / "fused_var.pudr").string(), fused.variance);
  std::size_t valid = 0;
  for (float d : fused.depth.data) valid += std::isfinite(d);
  std::cout << "fused " << valid << " of " << fused.depth.data.size() << " pixels\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pop-up plane SLAM toolkit"};
  app.require_subcommand(1);

  Common common;
  std::string dataset, trajectory, graph;
  std::array<std::string, 4> rasters;

  auto* simulate = app.add_subcommand("simulate", "generate a corridor scenario and its observations");
  add_common(simulate, common);

  auto* run = app.add_subcommand("run", "run the full pipeline on a dataset or a simulated scenario");
  add_common(run, common);
  run->add_option("--dataset", dataset, "dataset file; simulate from the config when absent")
      ->envname("POPUP_DATASET")
      ->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("evaluate", "score a trajectory against the configured scenario");
  add_common(eval, common);
  eval->add_option("--trajectory", trajectory, "trajectory file")->required()->check(CLI::ExistingFile);
  eval->add_option("--graph", graph, "graph dump providing the map planes")->check(CLI::ExistingFile);

  auto* select = app.add_subcommand("select-edges", "run boundary edge selection on each frame");
  add_common(select, common);
  select->add_option("--dataset", dataset, "dataset file")
      ->envname("POPUP_DATASET")
      ->required()
      ->check(CLI::ExistingFile);

  auto* fuse = app.add_subcommand("fuse-depth", "fuse an external depth map with a pop-up depth map");
  add_common(fuse, common);
  fuse->add_option("--depth", rasters[0], "external depth raster")->required()->check(CLI::ExistingFile);
  fuse->add_option("--var", rasters[1], "external variance raster")->required()->check(CLI::ExistingFile);
  fuse->add_option("--popup-depth", rasters[2], "pop-up depth raster")->required()->check(CLI::ExistingFile);
  fuse->add_option("--popup-var", rasters[3], "pop-up variance raster")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(common, simulate);
    if (*run) return cmd_run(common, run, dataset);
    if (*eval) return cmd_evaluate(common, eval, trajectory, graph);
    if (*select) return cmd_select_edges(common, select, dataset);
    if (*fuse) return cmd_fuse_depth(common, fuse, rasters);
  } catch (const Error& e) {
    std::cerr << "popup: " << e.what() << "\n";
    return e.code() == ErrorCode::SingularSystem ? kSolverFailure : kDataError;
  } catch (const std::exception& e) {
    std::cerr << "popup: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
