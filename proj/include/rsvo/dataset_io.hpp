#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rsvo/evalbench.hpp"

namespace rsvo {

namespace io {

// All floating-point values are serialized with 17 significant digits so a
// parse round-trips bit-exactly.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("not a number at " + where + ": '" + s + "'");
  }
}

}  // namespace io

// ---------------------------------------------------------------------------
// Key=value files: intrinsics and tool configuration.
// ---------------------------------------------------------------------------

struct KeyValueFile {
  std::map<std::string, std::string> values;
  std::map<std::string, int> lines;            // for diagnostics
  std::vector<std::pair<std::string, std::string>> repeated;  // e.g. waypoint entries

  bool has(const std::string& key) const { return values.count(key) > 0; }

  double number(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    return io::parse_double(it->second, key + " (line " + std::to_string(lines.at(key)) + ")");
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
  }
};

inline KeyValueFile parse_key_value(std::istream& in, const std::string& name) {
  KeyValueFile out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigParseError(name + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                             line + "'");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b2 = s.find_first_not_of(" \t");
      const auto e2 = s.find_last_not_of(" \t");
      s = (b2 == std::string::npos) ? "" : s.substr(b2, e2 - b2 + 1);
    };
    trim(key);
    trim(value);
    if (key.empty()) {
      throw ConfigParseError(name + ":" + std::to_string(lineno) + ": empty key");
    }
    out.repeated.emplace_back(key, value);
    out.values[key] = value;
    out.lines[key] = lineno;
  }
  return out;
}

inline KeyValueFile parse_key_value_file(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  return parse_key_value(in, path.filename().string());
}

// Flat key=value intrinsics: fx, fy, cx, cy, skew, tau, n_rows, n_cols.
inline CameraIntrinsics load_intrinsics(const std::filesystem::path& path) {
  const KeyValueFile kv = parse_key_value_file(path);
  for (const char* req : {"fx", "fy", "cx", "cy", "tau", "n_rows", "n_cols"}) {
    if (!kv.has(req)) throw ConfigParseError(path.string() + ": missing key '" + req + "'");
  }
  CameraIntrinsics k;
  k.fx = kv.number("fx", 0);
  k.fy = kv.number("fy", 0);
  k.cx = kv.number("cx", 0);
  k.cy = kv.number("cy", 0);
  k.skew = kv.number("skew", 0);
  k.tau = kv.number("tau", 0);
  k.n_rows = static_cast<int>(kv.number("n_rows", 0));
  k.n_cols = static_cast<int>(kv.number("n_cols", 0));
  k.validate();
  return k;
}

inline void save_intrinsics(const CameraIntrinsics& k, const std::filesystem::path& path) {
  auto out = io::open_out(path);
  out << "fx=" << io::fmt(k.fx) << "\nfy=" << io::fmt(k.fy) << "\ncx=" << io::fmt(k.cx)
      << "\ncy=" << io::fmt(k.cy) << "\nskew=" << io::fmt(k.skew) << "\ntau=" << io::fmt(k.tau)
      << "\nn_rows=" << k.n_rows << "\nn_cols=" << k.n_cols << "\n";
}

// ---------------------------------------------------------------------------
// Correspondence and ground-truth CSV files.
// ---------------------------------------------------------------------------

inline constexpr const char* kCorrHeader = "point_id,u_prev,v_prev,u_cur,v_cur";
inline constexpr const char* kGtHeader =
    "qw,qx,qy,qz,tx,ty,tz,wx_prev,wy_prev,wz_prev,vx_prev,vy_prev,vz_prev,"
    "wx_cur,wy_cur,wz_cur,vx_cur,vy_cur,vz_cur,scale";

inline void save_correspondences(const std::vector<Correspondence>& corrs,
                                 const std::vector<int>& ids, const std::filesystem::path& path) {
  auto out = io::open_out(path);
  out << kCorrHeader << "\n";
  for (size_t i = 0; i < corrs.size(); ++i) {
    const int id = i < ids.size() ? ids[i] : static_cast<int>(i);
    out << id << ',' << io::fmt(corrs[i].prev.c) << ',' << io::fmt(corrs[i].prev.r) << ','
        << io::fmt(corrs[i].cur.c) << ',' << io::fmt(corrs[i].cur.r) << "\n";
  }
}

struct LoadedCorrespondences {
  std::vector<Correspondence> correspondences;
  std::vector<int> ids;
};

inline LoadedCorrespondences load_correspondences(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCorrHeader) {
    throw SchemaError(path.string() + ": expected header '" + kCorrHeader + "', got '" + line +
                      "'");
  }
  LoadedCorrespondences out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = io::split(line, ',');
    if (cols.size() != 5) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": expected 5 columns, got " +
                        std::to_string(cols.size()));
    }
    const std::string where = path.string() + ":" + std::to_string(lineno);
    out.ids.push_back(static_cast<int>(io::parse_double(cols[0], where)));
    Correspondence c;
    c.prev.c = io::parse_double(cols[1], where);
    c.prev.r = io::parse_double(cols[2], where);
    c.cur.c = io::parse_double(cols[3], where);
    c.cur.r = io::parse_double(cols[4], where);
    out.correspondences.push_back(c);
  }
  return out;
}

inline void save_ground_truth(const FramePairDataset& data, const std::filesystem::path& path) {
  auto out = io::open_out(path);
  out << kGtHeader << "\n";
  const UnitQuaternion q = UnitQuaternion::from_rotation_matrix(data.true_relative_pose.rotation);
  const Vec3& t = data.true_relative_pose.translation;
  out << io::fmt(q.w()) << ',' << io::fmt(q.x()) << ',' << io::fmt(q.y()) << ',' << io::fmt(q.z());
  out << ',' << io::fmt(t.x()) << ',' << io::fmt(t.y()) << ',' << io::fmt(t.z());
  for (const Vec3& v : {data.true_motion_prev.w, data.true_motion_prev.v, data.true_motion_cur.w,
                        data.true_motion_cur.v}) {
    out << ',' << io::fmt(v.x()) << ',' << io::fmt(v.y()) << ',' << io::fmt(v.z());
  }
  out << ',' << io::fmt(data.true_scale) << "\n";
}

struct GroundTruthRecord {
  RigidTransform relative_pose;  // t -> t-1, unit translation
  InstantaneousMotion motion_prev, motion_cur;
  double scale = 0;
};

inline GroundTruthRecord load_ground_truth(const std::filesystem::path& path) {
  auto in = io::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kGtHeader) throw SchemaError(path.string() + ": unexpected ground-truth header");
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": missing data row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto cols = io::split(line, ',');
  if (cols.size() != 20) {
    throw SchemaError(path.string() + ": expected 20 columns, got " + std::to_string(cols.size()));
  }
  const std::string where = path.string() + ":2";
  std::vector<double> v;
  v.reserve(20);
  for (const auto& c : cols) v.push_back(io::parse_double(c, where));

  GroundTruthRecord out;
  out.relative_pose.rotation =
      UnitQuaternion(v[0], v[1], v[2], v[3]).to_rotation_matrix();
  out.relative_pose.translation = Vec3(v[4], v[5], v[6]);
  out.motion_prev.w = Vec3(v[7], v[8], v[9]);
  out.motion_prev.v = Vec3(v[10], v[11], v[12]);
  out.motion_cur.w = Vec3(v[13], v[14], v[15]);
  out.motion_cur.v = Vec3(v[16], v[17], v[18]);
  out.scale = v[19];
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark CSV outputs.
// ---------------------------------------------------------------------------

inline constexpr const char* kAggregateHeader =
    "level,method,rot_mean_deg,rot_std_deg,trans_mean_m,trans_std_m,inlier_ratio_mean,failures,"
    "pairs";

inline void save_aggregate_csv(const std::vector<LevelStats>& stats,
                               const std::filesystem::path& path) {
  auto out = io::open_out(path);
  out << kAggregateHeader << "\n";
  for (const auto& s : stats) {
    out << s.level << ',' << method_name(s.method) << ',' << io::fmt(s.rot_mean_deg) << ','
        << io::fmt(s.rot_std_deg) << ',' << io::fmt(s.trans_mean_m) << ',' << io::fmt(s.trans_std_m)
        << ',' << io::fmt(s.inlier_ratio_mean) << ',' << s.failures << ',' << s.pairs << "\n";
  }
}

inline void save_records_csv(const std::vector<PairRecord>& records,
                             const std::filesystem::path& path) {
  auto out = io::open_out(path);
  out << "level,run,pair,method,failed,rot_err_deg,trans_err_m,inlier_ratio,lm_iterations,wall_ms"
      << "\n";
  for (const auto& r : records) {
    out << r.level << ',' << r.run << ',' << r.pair << ',' << method_name(r.method) << ','
        << (r.failed ? 1 : 0) << ',' << io::fmt(r.rotation_error_deg) << ','
        << io::fmt(r.translation_error_m) << ',' << io::fmt(r.inlier_ratio) << ','
        << r.lm_iterations << ',' << io::fmt(r.wall_ms) << "\n";
  }
}

inline void save_boxstats_csv(const std::vector<BoxStats>& stats,
                              const std::filesystem::path& path) {
  auto out = io::open_out(path);
  out << "level,method,metric,median,q1,q3,whisker_lo,whisker_hi,n_outliers,n\n";
  for (const auto& b : stats) {
    out << b.level << ',' << method_name(b.method) << ',' << b.metric << ',' << io::fmt(b.median)
        << ',' << io::fmt(b.q1) << ',' << io::fmt(b.q3) << ',' << io::fmt(b.whisker_lo) << ','
        << io::fmt(b.whisker_hi) << ',' << b.n_outliers << ',' << b.n << "\n";
  }
}

// ---------------------------------------------------------------------------
// Dataset trees: one directory per (level, run).
// ---------------------------------------------------------------------------

inline std::filesystem::path run_directory(const std::filesystem::path& root, int level, int run) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "lev%d/run%03d", level, run);
  return root / buf;
}

inline std::filesystem::path pair_basename(int pair) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "pair%04d", pair);
  return buf;
}

inline void save_scene_meta(const BenchConfig& cfg, int level, int run,
                            const std::filesystem::path& path) {
  auto out = io::open_out(path);
  const SceneConfig& s = cfg.scene;
  out << "level=" << level << "\nrun=" << run << "\nseed=" << cfg.seed
      << "\nn_frames=" << s.n_frames << "\nframe_rate=" << io::fmt(s.frame_rate)
      << "\nn_landmarks=" << s.n_landmarks << "\nimage_cols=" << s.image_cols
      << "\nimage_rows=" << s.image_rows << "\nfocal=" << io::fmt(s.focal)
      << "\ncx=" << io::fmt(s.cx) << "\ncy=" << io::fmt(s.cy) << "\nskew=" << io::fmt(s.skew)
      << "\ntau=" << io::fmt(s.tau) << "\nmax_features=" << s.max_features
      << "\nbucket_rows=" << s.bucket_rows << "\nbucket_cols=" << s.bucket_cols
      << "\nyaw_noise_deg=" << io::fmt(s.yaw_noise_deg)
      << "\nlandmark_margin_horizontal=" << io::fmt(s.landmark_margin_horizontal)
      << "\nlandmark_margin_below=" << io::fmt(s.landmark_margin_below)
      << "\nlandmark_margin_above=" << io::fmt(s.landmark_margin_above)
      << "\ntie_motion_to_trajectory=" << (s.tie_motion_to_trajectory ? 1 : 0)
      << "\nv_max=" << io::fmt(distortion_levels()[level - 1].v_max)
      << "\nw_max_deg=" << io::fmt(distortion_levels()[level - 1].w_max_deg) << "\nnoise="
      << (cfg.noise.model == NoiseModel::kNone
              ? "none"
              : (cfg.noise.model == NoiseModel::kGaussian ? "gaussian" : "laplacian"))
      << "\nsigma=" << io::fmt(cfg.noise.sigma) << "\n";
  for (const auto& w : s.waypoints) {
    out << "waypoint=" << io::fmt(w.x()) << ',' << io::fmt(w.y()) << ',' << io::fmt(w.z()) << "\n";
  }
}

// Generate and write the full dataset tree for cfg.levels x cfg.runs, using
// the same per-item seed derivation as run_benchmark so files and in-memory
// benchmarks agree. Returns the number of pair files written.
inline int write_dataset_tree(const BenchConfig& cfg, const std::filesystem::path& root) {
  cfg.scene.validate();
  int written = 0;
  for (int level : cfg.levels) {
    if (level < 1 || level > static_cast<int>(distortion_levels().size())) {
      throw ConfigParseError("level out of range: " + std::to_string(level));
    }
    const DistortionLevel dl = distortion_levels()[level - 1];
    for (int run = 0; run < cfg.runs; ++run) {
      const auto dir = run_directory(root, level, run);
      io::ensure_dir(dir);
      save_scene_meta(cfg, level, run, dir / "meta");

      Rng traj_rng(derive_seed(cfg.seed, detail::kSaltTrajectory, level, run));
      const auto poses =
          spline_trajectory(cfg.scene.waypoints, cfg.scene.n_frames, traj_rng, cfg.scene.yaw_noise_deg);
      Rng lm_rng(derive_seed(cfg.seed, detail::kSaltLandmarks, level, run));
      const auto landmarks = sample_landmarks(cfg.scene, lm_rng);

      for (int p = 0; p < cfg.effective_pairs_per_run(); ++p) {
        Rng pair_rng(derive_seed(cfg.seed, detail::kSaltPair,
                                 (static_cast<std::uint64_t>(level) << 32) |
                                     static_cast<std::uint64_t>(run),
                                 p));
        FramePairDataset data;
        try {
          data = generate_frame_pair(cfg.scene, poses[p], poses[p + 1], landmarks, dl, pair_rng,
                                     std::max(cfg.ransac.sample_size, 20));
        } catch (const Error&) {
          continue;  // skipped pairs stay absent from the tree
        }
        Rng noise_rng(derive_seed(cfg.seed, detail::kSaltNoise,
                                  (static_cast<std::uint64_t>(level) << 32) |
                                      static_cast<std::uint64_t>(run),
                                  p));
        const auto corrs =
            add_noise(data.correspondences, cfg.noise.model, cfg.noise.sigma, noise_rng);

        const auto base = pair_basename(p);
        save_correspondences(corrs, data.landmark_ids, dir / (base.string() + ".csv"));
        save_ground_truth(data, dir / (base.string() + "_gt.csv"));
        ++written;
      }
      save_intrinsics(cfg.scene.intrinsics(), dir / "intrinsics.txt");
    }
  }
  return written;
}

// ---------------------------------------------------------------------------
// Tool configuration files (key=value, shared by synth and bench).
// ---------------------------------------------------------------------------

inline BenchConfig load_bench_config(const std::filesystem::path& path) {
  const KeyValueFile kv = parse_key_value_file(path);
  static const std::vector<std::string> known = {
      "n_frames", "frame_rate", "n_landmarks", "image_cols", "image_rows", "focal", "cx", "cy",
      "skew", "tau", "max_features", "bucket_rows", "bucket_cols", "yaw_noise_deg",
      "landmark_margin_horizontal", "landmark_margin_below", "landmark_margin_above",
      "tie_motion_to_trajectory", "waypoint", "runs", "pairs_per_run", "iterations",
      "sample_size", "inlier_threshold", "confidence_exit", "lm_max_iterations", "noise", "sigma",
      "levels", "seed", "jobs"};
  for (const auto& [key, line] : kv.lines) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigParseError(path.string() + ":" + std::to_string(line) + ": unknown key '" + key +
                             "'");
    }
  }

  BenchConfig cfg;
  SceneConfig& s = cfg.scene;
  s.n_frames = static_cast<int>(kv.number("n_frames", s.n_frames));
  s.frame_rate = kv.number("frame_rate", s.frame_rate);
  s.n_landmarks = static_cast<int>(kv.number("n_landmarks", s.n_landmarks));
  s.image_cols = static_cast<int>(kv.number("image_cols", s.image_cols));
  s.image_rows = static_cast<int>(kv.number("image_rows", s.image_rows));
  s.focal = kv.number("focal", s.focal);
  s.cx = kv.number("cx", s.cx);
  s.cy = kv.number("cy", s.cy);
  s.skew = kv.number("skew", s.skew);
  s.tau = kv.number("tau", s.tau);
  s.max_features = static_cast<int>(kv.number("max_features", s.max_features));
  s.bucket_rows = static_cast<int>(kv.number("bucket_rows", s.bucket_rows));
  s.bucket_cols = static_cast<int>(kv.number("bucket_cols", s.bucket_cols));
  s.yaw_noise_deg = kv.number("yaw_noise_deg", s.yaw_noise_deg);
  s.landmark_margin_horizontal =
      kv.number("landmark_margin_horizontal", s.landmark_margin_horizontal);
  s.landmark_margin_below = kv.number("landmark_margin_below", s.landmark_margin_below);
  s.landmark_margin_above = kv.number("landmark_margin_above", s.landmark_margin_above);
  s.tie_motion_to_trajectory = kv.number("tie_motion_to_trajectory", 0) != 0;

  std::vector<Vec3> waypoints;
  for (const auto& [key, value] : kv.repeated) {
    if (key != "waypoint") continue;
    const auto parts = io::split(value, ',');
    if (parts.size() != 3) throw ConfigParseError(path.string() + ": waypoint needs 3 components");
    waypoints.emplace_back(io::parse_double(parts[0], "waypoint"),
                           io::parse_double(parts[1], "waypoint"),
                           io::parse_double(parts[2], "waypoint"));
  }
  if (!waypoints.empty()) s.waypoints = waypoints;

  cfg.runs = static_cast<int>(kv.number("runs", cfg.runs));
  cfg.pairs_per_run = static_cast<int>(kv.number("pairs_per_run", cfg.pairs_per_run));
  cfg.ransac.iterations = static_cast<int>(kv.number("iterations", cfg.ransac.iterations));
  cfg.ransac.sample_size = static_cast<int>(kv.number("sample_size", cfg.ransac.sample_size));
  cfg.ransac.inlier_threshold = kv.number("inlier_threshold", cfg.ransac.inlier_threshold);
  cfg.ransac.confidence_exit = kv.number("confidence_exit", 0) != 0;
  cfg.lm.max_iterations = static_cast<int>(kv.number("lm_max_iterations", cfg.lm.max_iterations));
  cfg.seed = static_cast<std::uint64_t>(kv.number("seed", 0));
  cfg.jobs = static_cast<int>(kv.number("jobs", 0));

  const std::string noise = kv.text("noise", "none");
  if (noise == "none") {
    cfg.noise.model = NoiseModel::kNone;
  } else if (noise == "gaussian") {
    cfg.noise.model = NoiseModel::kGaussian;
  } else if (noise == "laplacian") {
    cfg.noise.model = NoiseModel::kLaplacian;
  } else {
    throw ConfigParseError(path.string() + ": unknown noise model '" + noise + "'");
  }
  cfg.noise.sigma = kv.number("sigma", cfg.noise.sigma);

  if (kv.has("levels")) {
    cfg.levels.clear();
    for (const auto& part : io::split(kv.text("levels", ""), ',')) {
      cfg.levels.push_back(static_cast<int>(io::parse_double(part, "levels")));
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Trajectory CSV.
// ---------------------------------------------------------------------------

inline void save_trajectory_csv(const std::vector<RigidTransform>& poses,
                                const std::filesystem::path& path) {
  auto out = io::open_out(path);
  out << "frame,qw,qx,qy,qz,tx,ty,tz\n";
  for (size_t i = 0; i < poses.size(); ++i) {
    const UnitQuaternion q = UnitQuaternion::from_rotation_matrix(poses[i].rotation);
    const Vec3& t = poses[i].translation;
    out << i << ',' << io::fmt(q.w()) << ',' << io::fmt(q.x()) << ',' << io::fmt(q.y()) << ','
        << io::fmt(q.z()) << ',' << io::fmt(t.x()) << ',' << io::fmt(t.y()) << ','
        << io::fmt(t.z()) << "\n";
  }
}

}  // namespace rsvo
