// rsvo: rolling-shutter two-view ego-motion estimation and benchmark tool.
//
// Subcommands:
//   synth     generate synthetic RS correspondence datasets
//   estimate  run MVO / MRSVO on one correspondence file
//   bench     Monte Carlo benchmark over distortion levels
//   traj      concatenate relative-pose results into a trajectory
//
// Exit codes: 0 success, 2 config/schema error, 3 numerical/estimation
// failure, 4 I/O error.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rsvo/dataset_io.hpp"
#include "rsvo/ransac.hpp"
#include "rsvo/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

json config_to_json(const rsvo::BenchConfig& cfg) {
  json scene;
  const rsvo::SceneConfig& s = cfg.scene;
  scene["n_frames"] = s.n_frames;
  scene["frame_rate"] = s.frame_rate;
  scene["n_landmarks"] = s.n_landmarks;
  scene["image_cols"] = s.image_cols;
  scene["image_rows"] = s.image_rows;
  scene["focal"] = s.focal;
  scene["cx"] = s.cx;
  scene["cy"] = s.cy;
  scene["skew"] = s.skew;
  scene["tau"] = s.tau;
  scene["max_features"] = s.max_features;
  scene["bucket_rows"] = s.bucket_rows;
  scene["bucket_cols"] = s.bucket_cols;
  scene["yaw_noise_deg"] = s.yaw_noise_deg;
  scene["tie_motion_to_trajectory"] = s.tie_motion_to_trajectory;
  json waypoints = json::array();
  for (const auto& w : s.waypoints) waypoints.push_back({w.x(), w.y(), w.z()});
  scene["waypoints"] = waypoints;

  json out;
  out["scene"] = scene;
  out["runs"] = cfg.runs;
  out["pairs_per_run"] = cfg.effective_pairs_per_run();
  out["levels"] = cfg.levels;
  out["seed"] = cfg.seed;
  out["jobs"] = cfg.jobs;
  out["ransac"] = {{"iterations", cfg.ransac.iterations},
                   {"sample_size", cfg.ransac.sample_size},
                   {"inlier_threshold", cfg.ransac.inlier_threshold},
                   {"confidence_exit", cfg.ransac.confidence_exit}};
  out["lm"] = {{"max_iterations", cfg.lm.max_iterations},
               {"initial_damping", cfg.lm.initial_damping},
               {"cost_tolerance", cfg.lm.cost_tolerance},
               {"step_tolerance", cfg.lm.step_tolerance}};
  out["noise"] = {{"model", cfg.noise.model == rsvo::NoiseModel::kNone
                                ? "none"
                                : (cfg.noise.model == rsvo::NoiseModel::kGaussian ? "gaussian"
                                                                                  : "laplacian")},
                  {"sigma", cfg.noise.sigma}};
  std::vector<std::string> methods;
  for (auto m : cfg.methods) methods.emplace_back(rsvo::method_name(m));
  out["methods"] = methods;
  return out;
}

void write_manifest(const fs::path& path, const std::string& command, const json& config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, std::uint64_t seed) {
  json m;
  m["tool"] = "rsvo";
  m["version"] = rsvo::kVersion;
  m["command"] = command;
  m["timestamp_utc"] = iso_timestamp();
  m["seed"] = seed;
  m["config"] = config;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  auto out = rsvo::io::open_out(path);
  out << m.dump(2) << "\n";
}

struct CommonFlags {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string noise;
  double sigma = -1;
  std::vector<int> levels;
  int jobs = 0;
  bool full_scale = false;
};

rsvo::BenchConfig resolve_config(const CommonFlags& flags) {
  rsvo::BenchConfig cfg;
  if (!flags.config_path.empty()) cfg = rsvo::load_bench_config(flags.config_path);
  if (flags.seed_set) cfg.seed = flags.seed;
  if (!flags.levels.empty()) cfg.levels = flags.levels;
  if (!flags.noise.empty()) {
    if (flags.noise == "none") {
      cfg.noise.model = rsvo::NoiseModel::kNone;
    } else if (flags.noise == "gaussian") {
      cfg.noise.model = rsvo::NoiseModel::kGaussian;
    } else if (flags.noise == "laplacian") {
      cfg.noise.model = rsvo::NoiseModel::kLaplacian;
    } else {
      throw rsvo::ConfigParseError("unknown noise model: " + flags.noise);
    }
  }
  if (flags.sigma >= 0) cfg.noise.sigma = flags.sigma;
  if (flags.jobs > 0) cfg.jobs = flags.jobs;
  if (flags.full_scale) cfg.set_full_scale();
  for (int level : cfg.levels) {
    if (level < 1 || level > 6) {
      throw rsvo::ConfigParseError("level out of range 1..6: " + std::to_string(level));
    }
  }
  return cfg;
}

int cmd_synth(const CommonFlags& flags) {
  const rsvo::BenchConfig cfg = resolve_config(flags);
  const fs::path out_dir(flags.out);
  rsvo::io::ensure_dir(out_dir);
  const int pairs = rsvo::write_dataset_tree(cfg, out_dir);
  write_manifest(out_dir / "manifest.json", "synth", config_to_json(cfg),
                 flags.config_path.empty() ? std::vector<std::string>{}
                                           : std::vector<std::string>{flags.config_path},
                 {out_dir.string()}, cfg.seed);
  std::cout << "wrote " << pairs << " frame pairs under " << out_dir.string() << "\n";
  return 0;
}

json state_to_json(const rsvo::EstimationResult& res) {
  const rsvo::NominalState& st = res.state;
  json j;
  j["quaternion"] = {{"w", st.q_gs.w()}, {"x", st.q_gs.x()}, {"y", st.q_gs.y()}, {"z", st.q_gs.z()}};
  j["translation"] = {st.t_gs.x(), st.t_gs.y(), st.t_gs.z()};
  j["motion_prev"] = {{"w", {st.motion_prev.w.x(), st.motion_prev.w.y(), st.motion_prev.w.z()}},
                      {"v", {st.motion_prev.v.x(), st.motion_prev.v.y(), st.motion_prev.v.z()}}};
  j["motion_cur"] = {{"w", {st.motion_cur.w.x(), st.motion_cur.w.y(), st.motion_cur.w.z()}},
                     {"v", {st.motion_cur.v.x(), st.motion_cur.v.y(), st.motion_cur.v.z()}}};
  j["inlier_ratio"] = res.inlier_ratio;
  j["inlier_count"] = res.inlier_count;
  json mask = json::array();
  for (bool b : res.inlier_mask) mask.push_back(b ? 1 : 0);
  j["inlier_mask"] = mask;
  j["residuals_px"] = res.per_point_residual;
  j["low_parallax"] = res.low_parallax;
  j["lm_iterations"] = res.lm_iterations;
  return j;
}

int cmd_estimate(const std::string& corr_path, const std::string& intrinsics_path,
                 const std::string& method, const CommonFlags& flags, int iterations,
                 double threshold) {
  const rsvo::CameraIntrinsics intr = rsvo::load_intrinsics(intrinsics_path);
  const rsvo::LoadedCorrespondences loaded = rsvo::load_correspondences(corr_path);
  if (loaded.correspondences.size() < 8) {
    throw rsvo::TooFewPoints("estimate needs at least 8 correspondences, got " +
                             std::to_string(loaded.correspondences.size()));
  }

  rsvo::RansacConfig rcfg;
  rcfg.iterations = iterations;
  rcfg.inlier_threshold = threshold;
  rcfg.rng_seed = flags.seed;

  json results;
  if (method == "mvo" || method == "both") {
    results["mvo"] = state_to_json(rsvo::mvo_estimate(loaded.correspondences, intr, rcfg));
  }
  if (method == "mrsvo" || method == "both") {
    results["mrsvo"] = state_to_json(rsvo::mrsvo_estimate(loaded.correspondences, intr, rcfg));
  }

  json doc;
  doc["tool"] = "rsvo";
  doc["version"] = rsvo::kVersion;
  doc["correspondences"] = loaded.correspondences.size();
  doc["inlier_threshold_px"] = threshold;
  doc["ransac_iterations"] = iterations;
  doc["seed"] = flags.seed;
  doc["results"] = results;

  const fs::path out_path(flags.out);
  if (out_path.has_parent_path()) rsvo::io::ensure_dir(out_path.parent_path());
  {
    auto out = rsvo::io::open_out(out_path);
    out << doc.dump(2) << "\n";
  }
  write_manifest(out_path.string() + ".manifest.json", "estimate", json::object(),
                 {corr_path, intrinsics_path}, {out_path.string()}, flags.seed);

  for (auto& [name, r] : results.items()) {
    std::cout << name << ": inlier_ratio=" << r["inlier_ratio"].get<double>()
              << " inliers=" << r["inlier_count"].get<int>() << "/"
              << loaded.correspondences.size() << "\n";
  }
  return 0;
}

int cmd_bench(const CommonFlags& flags, const std::string& method) {
  rsvo::BenchConfig cfg = resolve_config(flags);
  if (method == "mvo") {
    cfg.methods = {rsvo::Method::kMvo};
  } else if (method == "mrsvo") {
    cfg.methods = {rsvo::Method::kMrsvo};
  } else if (method == "both") {
    cfg.methods = {rsvo::Method::kMvo, rsvo::Method::kMrsvo};
  } else if (method == "all") {
    cfg.methods = {rsvo::Method::kMvo, rsvo::Method::kMvoPlain, rsvo::Method::kMrsvo,
                   rsvo::Method::kMrsvoNoRansac};
  } else {
    throw rsvo::ConfigParseError("unknown method: " + method);
  }

  const fs::path out_dir(flags.out);
  rsvo::io::ensure_dir(out_dir);

  const rsvo::BenchReport report = rsvo::run_benchmark(cfg);
  rsvo::save_aggregate_csv(report.stats, out_dir / "aggregate.csv");
  rsvo::save_records_csv(report.records, out_dir / "records.csv");
  rsvo::save_boxstats_csv(rsvo::compute_box_stats(report.records, cfg.levels, cfg.methods),
                          out_dir / "boxstats.csv");
  write_manifest(out_dir / "manifest.json", "bench", config_to_json(cfg),
                 flags.config_path.empty() ? std::vector<std::string>{}
                                           : std::vector<std::string>{flags.config_path},
                 {(out_dir / "aggregate.csv").string(), (out_dir / "records.csv").string(),
                  (out_dir / "boxstats.csv").string()},
                 cfg.seed);

  for (const auto& s : report.stats) {
    std::cout << "level " << s.level << " " << rsvo::method_name(s.method)
              << ": rot_mean=" << s.rot_mean_deg << " deg, trans_mean=" << s.trans_mean_m
              << " m, inliers=" << 100.0 * s.inlier_ratio_mean << "%, failures=" << s.failures
              << "/" << s.pairs << "\n";
  }
  return 0;
}

// One relative pose + scale from an estimate JSON ('mrsvo' preferred over
// 'mvo') or a dataset ground-truth CSV (scale embedded).
struct TrajEntry {
  rsvo::RigidTransform relative;  // estimator convention: prev -> cur
  double scale = -1;              // <0: must come from --scales
};

TrajEntry load_traj_entry(const fs::path& path) {
  TrajEntry entry;
  if (path.extension() == ".json") {
    auto in = rsvo::io::open_in(path);
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw rsvo::SchemaError(path.string() + ": " + e.what());
    }
    if (!doc.contains("results") || doc["results"].empty()) {
      throw rsvo::SchemaError(path.string() + ": no estimation results");
    }
    const json& r = doc["results"].contains("mrsvo") ? doc["results"]["mrsvo"]
                                                     : doc["results"].begin().value();
    try {
      const json& q = r.at("quaternion");
      const rsvo::UnitQuaternion quat(q.at("w").get<double>(), q.at("x").get<double>(),
                                      q.at("y").get<double>(), q.at("z").get<double>());
      entry.relative.rotation = quat.to_rotation_matrix();
      const auto& t = r.at("translation");
      entry.relative.translation =
          rsvo::Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
    } catch (const json::exception& e) {
      throw rsvo::SchemaError(path.string() + ": " + e.what());
    }
  } else {
    // Ground-truth CSV rows are in the t -> t-1 convention; convert.
    const rsvo::GroundTruthRecord gt = rsvo::load_ground_truth(path);
    entry.relative.rotation = gt.relative_pose.rotation.transpose();
    entry.relative.translation = -(entry.relative.rotation * gt.relative_pose.translation);
    entry.scale = gt.scale;
  }
  return entry;
}

int cmd_traj(const std::vector<std::string>& inputs, const std::string& scales_path,
             const CommonFlags& flags) {
  std::vector<TrajEntry> entries;
  entries.reserve(inputs.size());
  for (const auto& p : inputs) entries.push_back(load_traj_entry(p));

  if (!scales_path.empty()) {
    auto in = rsvo::io::open_in(scales_path);
    std::vector<double> scales;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      scales.push_back(rsvo::io::parse_double(line, scales_path + ":" + std::to_string(lineno)));
    }
    if (scales.size() != entries.size()) {
      throw rsvo::SchemaError("scale count " + std::to_string(scales.size()) +
                              " does not match input count " + std::to_string(entries.size()));
    }
    for (size_t i = 0; i < entries.size(); ++i) entries[i].scale = scales[i];
  }

  std::vector<std::pair<rsvo::RigidTransform, double>> relatives;
  relatives.reserve(entries.size());
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].scale <= 0) {
      throw rsvo::SchemaError("no scale for input " + inputs[i] +
                              " (provide --scales for estimate-result inputs)");
    }
    relatives.emplace_back(entries[i].relative, entries[i].scale);
  }

  const auto trajectory = rsvo::concat_trajectory(relatives);
  const fs::path out_path(flags.out);
  if (out_path.has_parent_path()) rsvo::io::ensure_dir(out_path.parent_path());
  rsvo::save_trajectory_csv(trajectory, out_path);
  write_manifest(out_path.string() + ".manifest.json", "traj", json::object(), inputs,
                 {out_path.string()}, 0);
  std::cout << "wrote " << trajectory.size() << " poses to " << out_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rolling-shutter two-view ego-motion estimation and benchmark"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rsvo::kVersion);

  CommonFlags flags;

  auto add_common = [&](CLI::App* cmd, bool with_noise, bool with_jobs) {
    cmd->add_option("--config", flags.config_path, "key=value configuration file");
    cmd->add_option("--seed", flags.seed, "master RNG seed")->each([&flags](const std::string&) {
      flags.seed_set = true;
    });
    cmd->add_option("--level", flags.levels, "distortion level(s) 1..6");
    if (with_noise) {
      cmd->add_option("--noise", flags.noise, "noise model: none|gaussian|laplacian");
      cmd->add_option("--sigma", flags.sigma, "noise standard deviation (px)");
      cmd->add_flag("--full-scale", flags.full_scale, "100 runs over the full 250-frame sequence");
    }
    if (with_jobs) cmd->add_option("--jobs", flags.jobs, "worker threads (default: all cores)");
  };

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic RS datasets");
  add_common(synth, true, false);
  synth->add_option("--out", flags.out, "output directory")->required();

  // estimate
  auto* estimate = app.add_subcommand("estimate", "estimate relative motion from one pair");
  std::string corr_path, intrinsics_path, method = "both";
  int est_iterations = 500;
  double est_threshold = 1.0;
  estimate->add_option("correspondences", corr_path, "correspondence CSV file")->required();
  estimate->add_option("--intrinsics", intrinsics_path, "intrinsics key=value file")->required();
  estimate->add_option("--method", method, "mvo|mrsvo|both")->default_val("both");
  estimate->add_option("--iterations", est_iterations, "RANSAC iterations");
  estimate->add_option("--threshold", est_threshold, "inlier threshold (px)");
  estimate->add_option("--seed", flags.seed, "RNG seed")->each([&flags](const std::string&) {
    flags.seed_set = true;
  });
  estimate->add_option("--out", flags.out, "output JSON path")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "Monte Carlo benchmark");
  std::string bench_method = "both";
  add_common(bench, true, true);
  bench->add_option("--method", bench_method, "mvo|mrsvo|both|all");
  bench->add_option("--out", flags.out, "output directory")->required();

  // traj
  auto* traj = app.add_subcommand("traj", "concatenate relative poses into a trajectory");
  std::vector<std::string> traj_inputs;
  std::string scales_path;
  traj->add_option("inputs", traj_inputs, "estimate JSONs or ground-truth CSVs")->required();
  traj->add_option("--scales", scales_path, "text file, one metric scale per line");
  traj->add_option("--out", flags.out, "output trajectory CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(flags);
    if (estimate->parsed()) {
      if (method != "mvo" && method != "mrsvo" && method != "both") {
        throw rsvo::ConfigParseError("unknown method: " + method);
      }
      return cmd_estimate(corr_path, intrinsics_path, method, flags, est_iterations,
                          est_threshold);
    }
    if (bench->parsed()) return cmd_bench(flags, bench_method);
    if (traj->parsed()) return cmd_traj(traj_inputs, scales_path, flags);
  } catch (const rsvo::ConfigParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rsvo::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const rsvo::TooFewPoints& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const rsvo::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const rsvo::Error& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
