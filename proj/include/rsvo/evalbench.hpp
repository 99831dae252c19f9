#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>
#include <vector>

#include "rsvo/ransac.hpp"
#include "rsvo/synth.hpp"

namespace rsvo {

struct PoseError {
  double rotation_error_deg = 0;
  double translation_error_m = 0;
};

// Relative-pose error: compose dT = T_gt * T_est^{-1} with the ground-truth
// scale injected into the unit-norm estimated translation; the rotation error
// is the angle of dR, the translation error the norm of dt. Both transforms
// must be expressed in the same (t -> t-1) convention.
inline PoseError pose_error(const RigidTransform& gt_metric, const RigidTransform& est_unit,
                            double true_scale) {
  RigidTransform est = est_unit;
  est.translation *= true_scale;
  const RigidTransform delta = gt_metric * est.inverse();
  PoseError out;
  const double c = std::clamp((delta.rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
  out.rotation_error_deg = std::acos(c) * 180.0 / M_PI;
  out.translation_error_m = delta.translation.norm();
  return out;
}

// Estimator state (prev -> cur map, unit t) to the evaluation convention
// (t -> t-1 map, unit t).
inline RigidTransform state_to_relative_pose(const NominalState& state) {
  RigidTransform out;
  out.rotation = state.rotation().transpose();
  out.translation = -(out.rotation * state.t_gs.normalized());
  return out;
}

// Left-fold of inverted scaled relative transforms: T_0 = I,
// T_{k+1} = T_k * [R_k | s_k t_k]^{-1}, with the relatives in the estimator
// convention (prev -> cur). T_k maps frame-k coordinates into frame-0
// coordinates, i.e. the pose of camera k in the first camera's frame.
inline std::vector<RigidTransform> concat_trajectory(
    const std::vector<std::pair<RigidTransform, double>>& relatives) {
  std::vector<RigidTransform> out;
  out.reserve(relatives.size() + 1);
  out.push_back(RigidTransform::identity());
  for (const auto& [rel, scale] : relatives) {
    if (!(scale > 0)) throw ConfigParseError("relative-pose scale must be positive");
    RigidTransform scaled = rel;
    scaled.translation *= scale;
    out.push_back(out.back() * scaled.inverse());
  }
  return out;
}

enum class Method { kMvo, kMvoPlain, kMrsvo, kMrsvoNoRansac };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::kMvo: return "mvo";
    case Method::kMvoPlain: return "mvo_plain";
    case Method::kMrsvo: return "mrsvo";
    case Method::kMrsvoNoRansac: return "mrsvo_noransac";
  }
  return "?";
}

inline Method method_from_name(const std::string& s) {
  if (s == "mvo") return Method::kMvo;
  if (s == "mvo_plain") return Method::kMvoPlain;
  if (s == "mrsvo") return Method::kMrsvo;
  if (s == "mrsvo_noransac") return Method::kMrsvoNoRansac;
  throw ConfigParseError("unknown method: " + s);
}

struct NoiseSpec {
  NoiseModel model = NoiseModel::kNone;
  double sigma = 1.0;  // pixels
};

struct BenchConfig {
  // The trajectory always keeps the reference geometry (250 frames over the
  // 80 m loop at 5 Hz); desk scale just evaluates fewer consecutive pairs.
  SceneConfig scene;
  int runs = 20;
  int pairs_per_run = 50;
  RansacConfig ransac;
  LmConfig lm;
  NoiseSpec noise;
  std::vector<int> levels = {1, 2, 3, 4, 5, 6};
  std::vector<Method> methods = {Method::kMvo, Method::kMrsvo};
  int jobs = 0;  // 0: all hardware threads
  std::uint64_t seed = 0;

  // The paper-scale protocol: 100 Monte Carlo runs over the full sequence.
  void set_full_scale() {
    runs = 100;
    pairs_per_run = scene.n_frames - 1;
  }

  int effective_pairs_per_run() const { return std::min(pairs_per_run, scene.n_frames - 1); }
};

struct PairRecord {
  int level = 0;
  int run = 0;
  int pair = 0;
  Method method = Method::kMvo;
  bool failed = false;
  double rotation_error_deg = 0;
  double translation_error_m = 0;
  double inlier_ratio = 0;
  int lm_iterations = 0;
  double wall_ms = 0;
};

struct LevelStats {
  int level = 0;
  Method method = Method::kMvo;
  double rot_mean_deg = 0, rot_std_deg = 0;
  double trans_mean_m = 0, trans_std_m = 0;
  double inlier_ratio_mean = 0;
  int failures = 0;
  int pairs = 0;
};

struct BoxStats {
  int level = 0;
  Method method = Method::kMvo;
  std::string metric;  // "rotation_deg" | "translation_m"
  double median = 0, q1 = 0, q3 = 0, whisker_lo = 0, whisker_hi = 0;
  int n_outliers = 0;
  int n = 0;
};

struct BenchReport {
  std::vector<LevelStats> stats;
  std::vector<PairRecord> records;
};

namespace detail {

inline double interpolated_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0;
  const double pos = q * (static_cast<double>(v.size()) - 1);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

}  // namespace detail

// Aggregate per-pair records into per-(level, method) statistics. Failed
// pairs are excluded from the means and counted separately.
inline std::vector<LevelStats> compute_level_stats(const std::vector<PairRecord>& records,
                                                   const std::vector<int>& levels,
                                                   const std::vector<Method>& methods) {
  std::vector<LevelStats> out;
  for (int level : levels) {
    for (Method method : methods) {
      LevelStats s;
      s.level = level;
      s.method = method;
      std::vector<double> rot, trans, ratio;
      for (const auto& r : records) {
        if (r.level != level || r.method != method) continue;
        ++s.pairs;
        if (r.failed) {
          ++s.failures;
          continue;
        }
        rot.push_back(r.rotation_error_deg);
        trans.push_back(r.translation_error_m);
        ratio.push_back(r.inlier_ratio);
      }
      auto mean = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double sum = 0;
        for (double x : v) sum += x;
        return sum / static_cast<double>(v.size());
      };
      auto stddev = [&](const std::vector<double>& v, double m) {
        if (v.size() < 2) return 0.0;
        double sum = 0;
        for (double x : v) sum += (x - m) * (x - m);
        return std::sqrt(sum / static_cast<double>(v.size() - 1));
      };
      s.rot_mean_deg = mean(rot);
      s.rot_std_deg = stddev(rot, s.rot_mean_deg);
      s.trans_mean_m = mean(trans);
      s.trans_std_m = stddev(trans, s.trans_mean_m);
      s.inlier_ratio_mean = mean(ratio);
      out.push_back(s);
    }
  }
  return out;
}

// Box-and-whisker numbers (median, quartiles, 1.5 IQR whiskers) per
// (level, method, metric), for plot-ready export.
inline std::vector<BoxStats> compute_box_stats(const std::vector<PairRecord>& records,
                                               const std::vector<int>& levels,
                                               const std::vector<Method>& methods) {
  std::vector<BoxStats> out;
  for (int level : levels) {
    for (Method method : methods) {
      for (const char* metric : {"rotation_deg", "translation_m"}) {
        std::vector<double> v;
        for (const auto& r : records) {
          if (r.level != level || r.method != method || r.failed) continue;
          v.push_back(std::string(metric) == "rotation_deg" ? r.rotation_error_deg
                                                            : r.translation_error_m);
        }
        BoxStats b;
        b.level = level;
        b.method = method;
        b.metric = metric;
        b.n = static_cast<int>(v.size());
        if (!v.empty()) {
          b.median = detail::interpolated_quantile(v, 0.5);
          b.q1 = detail::interpolated_quantile(v, 0.25);
          b.q3 = detail::interpolated_quantile(v, 0.75);
          const double iqr = b.q3 - b.q1;
          const double lo_fence = b.q1 - 1.5 * iqr, hi_fence = b.q3 + 1.5 * iqr;
          b.whisker_lo = b.q3;
          b.whisker_hi = b.q1;
          std::sort(v.begin(), v.end());
          b.whisker_lo = v.front();
          b.whisker_hi = v.back();
          for (double x : v) {
            if (x >= lo_fence) {
              b.whisker_lo = x;
              break;
            }
          }
          for (auto it = v.rbegin(); it != v.rend(); ++it) {
            if (*it <= hi_fence) {
              b.whisker_hi = *it;
              break;
            }
          }
          for (double x : v) {
            if (x < lo_fence || x > hi_fence) ++b.n_outliers;
          }
        }
        out.push_back(b);
      }
    }
  }
  return out;
}

namespace detail {

constexpr std::uint64_t kSaltTrajectory = 0x1;
constexpr std::uint64_t kSaltLandmarks = 0x2;
constexpr std::uint64_t kSaltPair = 0x3;
constexpr std::uint64_t kSaltNoise = 0x4;

inline PairRecord evaluate_pair(const BenchConfig& cfg, const FramePairDataset& data,
                                const std::vector<Correspondence>& corrs, Method method, int level,
                                int run, int pair) {
  PairRecord rec;
  rec.level = level;
  rec.run = run;
  rec.pair = pair;
  rec.method = method;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    EstimationResult res;
    switch (method) {
      case Method::kMvo: res = mvo_estimate(corrs, cfg.scene.intrinsics(), cfg.ransac); break;
      case Method::kMvoPlain:
        res = mvo_plain_estimate(corrs, cfg.scene.intrinsics(), cfg.ransac.inlier_threshold);
        break;
      case Method::kMrsvo:
        res = mrsvo_estimate(corrs, cfg.scene.intrinsics(), cfg.ransac, cfg.lm);
        break;
      case Method::kMrsvoNoRansac:
        res = mrsvo_noransac_estimate(corrs, cfg.scene.intrinsics(), cfg.ransac.inlier_threshold,
                                      cfg.lm);
        break;
    }
    RigidTransform gt_metric = data.true_relative_pose;
    gt_metric.translation *= data.true_scale;
    const PoseError err =
        pose_error(gt_metric, state_to_relative_pose(res.state), data.true_scale);
    rec.rotation_error_deg = err.rotation_error_deg;
    rec.translation_error_m = err.translation_error_m;
    rec.inlier_ratio = res.inlier_ratio;
    rec.lm_iterations = res.lm_iterations;
  } catch (const Error&) {
    rec.failed = true;
  }
  rec.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace detail

// Monte Carlo benchmark: for every (level, run), regenerate the scene from
// seeds derived per item, run every method on every consecutive frame pair,
// and aggregate. Work items are independent; `jobs` controls the thread
// count and has no effect on the results.
inline BenchReport run_benchmark(const BenchConfig& cfg) {
  cfg.scene.validate();
  cfg.ransac.validate();

  struct Item {
    int level_index;  // 1-based level id
    int run;
  };
  std::vector<Item> items;
  for (int level : cfg.levels) {
    if (level < 1 || level > static_cast<int>(distortion_levels().size())) {
      throw ConfigParseError("level out of range: " + std::to_string(level));
    }
    for (int run = 0; run < cfg.runs; ++run) items.push_back({level, run});
  }

  const int pairs_per_run = cfg.effective_pairs_per_run();
  std::vector<std::vector<PairRecord>> slots(items.size());

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned n_threads =
      cfg.jobs > 0 ? static_cast<unsigned>(cfg.jobs) : hw;

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t idx = next.fetch_add(1);
      if (idx >= items.size()) return;
      const Item item = items[idx];
      const DistortionLevel level = distortion_levels()[item.level_index - 1];

      Rng traj_rng(derive_seed(cfg.seed, detail::kSaltTrajectory, item.level_index, item.run));
      const auto poses = spline_trajectory(cfg.scene.waypoints, cfg.scene.n_frames, traj_rng,
                                           cfg.scene.yaw_noise_deg);
      Rng lm_rng(derive_seed(cfg.seed, detail::kSaltLandmarks, item.level_index, item.run));
      const auto landmarks = sample_landmarks(cfg.scene, lm_rng);

      auto& out = slots[idx];
      out.reserve(static_cast<size_t>(pairs_per_run) * cfg.methods.size());
      for (int p = 0; p < pairs_per_run; ++p) {
        FramePairDataset data;
        std::vector<Correspondence> corrs;
        bool generated = false;
        try {
          Rng pair_rng(derive_seed(cfg.seed, detail::kSaltPair,
                                   (static_cast<std::uint64_t>(item.level_index) << 32) |
                                       static_cast<std::uint64_t>(item.run),
                                   p));
          data = generate_frame_pair(cfg.scene, poses[p], poses[p + 1], landmarks, level, pair_rng,
                                     std::max(cfg.ransac.sample_size, 20));
          Rng noise_rng(derive_seed(cfg.seed, detail::kSaltNoise,
                                    (static_cast<std::uint64_t>(item.level_index) << 32) |
                                        static_cast<std::uint64_t>(item.run),
                                    p));
          corrs = add_noise(data.correspondences, cfg.noise.model, cfg.noise.sigma, noise_rng);
          generated = true;
        } catch (const Error&) {
        }
        for (Method method : cfg.methods) {
          if (!generated) {
            PairRecord rec;
            rec.level = item.level_index;
            rec.run = item.run;
            rec.pair = p;
            rec.method = method;
            rec.failed = true;
            out.push_back(rec);
            continue;
          }
          out.push_back(
              detail::evaluate_pair(cfg, data, corrs, method, item.level_index, item.run, p));
        }
      }
    }
  };

  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  BenchReport report;
  for (const auto& slot : slots) {
    report.records.insert(report.records.end(), slot.begin(), slot.end());
  }
  report.stats = compute_level_stats(report.records, cfg.levels, cfg.methods);
  return report;
}

}  // namespace rsvo
