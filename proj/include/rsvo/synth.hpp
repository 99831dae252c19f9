#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rsvo/epipolar.hpp"
#include "rsvo/rng.hpp"

namespace rsvo {

// Velocity bounds of one RS distortion level.
struct DistortionLevel {
  double v_max = 0;      // m/s
  double w_max_deg = 0;  // deg/s
};

// The six benchmark levels, 1-based in reports.
inline const std::array<DistortionLevel, 6>& distortion_levels() {
  static const std::array<DistortionLevel, 6> levels = {
      DistortionLevel{0, 0},   DistortionLevel{10, 20}, DistortionLevel{20, 40},
      DistortionLevel{30, 60}, DistortionLevel{40, 80}, DistortionLevel{50, 100}};
  return levels;
}

struct SceneConfig {
  int n_frames = 250;
  double frame_rate = 5.0;  // Hz
  int n_landmarks = 12000;
  int image_cols = 1280, image_rows = 720;
  double focal = 1000, cx = 640, cy = 360, skew = 0;
  double tau = 5e-5;
  int max_features = 500;
  int bucket_rows = 6, bucket_cols = 10;
  std::vector<Vec3> waypoints = default_waypoints();
  std::uint64_t rng_seed = 0;
  // Trajectory orientation noise about a random axis, per frame.
  double yaw_noise_deg = 0.5;
  // Landmark box: the waypoint bounding box grown by these margins.
  double landmark_margin_horizontal = 25.0;
  double landmark_margin_below = 8.0;
  double landmark_margin_above = 12.0;
  // Derive per-frame velocities from trajectory finite differences instead of
  // drawing them independently.
  bool tie_motion_to_trajectory = false;

  // Closed square loop in the x-z plane, 80 m travel, start == end.
  static std::vector<Vec3> default_waypoints() {
    return {Vec3(2, 2, 2), Vec3(2, 2, 22), Vec3(22, 2, 22), Vec3(22, 2, 2), Vec3(2, 2, 2)};
  }

  CameraIntrinsics intrinsics() const {
    CameraIntrinsics k;
    k.fx = k.fy = focal;
    k.cx = cx;
    k.cy = cy;
    k.skew = skew;
    k.tau = tau;
    k.n_rows = image_rows;
    k.n_cols = image_cols;
    return k;
  }

  void validate() const {
    if (n_frames < 2) throw ConfigParseError("n_frames must be >= 2");
    if (n_landmarks < 1 || max_features < 1 || bucket_rows < 1 || bucket_cols < 1) {
      throw ConfigParseError("counts must be positive");
    }
    if (!(frame_rate > 0)) throw ConfigParseError("frame_rate must be positive");
    intrinsics().validate();
  }
};

// One two-frame estimation problem with its ground truth.
struct FramePairDataset {
  std::vector<Correspondence> correspondences;
  std::vector<int> landmark_ids;  // parallel to correspondences
  // t -> t-1 map: X_prev = R X_cur + t, with unit translation.
  RigidTransform true_relative_pose;
  InstantaneousMotion true_motion_prev, true_motion_cur;
  double true_scale = 0;  // meters; the metric norm of the relative translation

  // Ground truth in the estimator's convention and gauge: prev -> cur map
  // with unit translation and velocities rescaled by the metric baseline.
  NominalState true_state_gauge() const {
    NominalState s;
    const Mat3 r = true_relative_pose.rotation.transpose();
    s.q_gs = UnitQuaternion::from_rotation_matrix(r);
    s.t_gs = -(r * true_relative_pose.translation);
    s.motion_prev = true_motion_prev;
    s.motion_cur = true_motion_cur;
    s.t_gs *= true_scale;  // back to metric before gauge normalization
    return normalize_gauge(s);
  }
};

namespace detail {

inline Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double t) {
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

inline Vec3 catmull_rom_derivative(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3,
                                   double t) {
  const double t2 = t * t;
  return 0.5 * ((-p0 + p2) + 2.0 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t +
                3.0 * (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t2);
}

inline Mat3 yaw_rotation(double yaw) {
  Mat3 r;
  r << std::cos(yaw), 0, std::sin(yaw), 0, 1, 0, -std::sin(yaw), 0, std::cos(yaw);
  return r;
}

}  // namespace detail

// Catmull-Rom trajectory through the waypoints, sampled at n_frames poses
// (world -> camera). A first == last waypoint closes the loop. Orientation:
// yaw follows the spline velocity with a small random perturbation per frame;
// the first pose is identity-aligned at the first waypoint.
inline std::vector<RigidTransform> spline_trajectory(const std::vector<Vec3>& waypoints,
                                                     int n_frames, Rng& rng,
                                                     double yaw_noise_deg = 0.5) {
  if (waypoints.size() < 4) throw TooFewWaypoints();
  if (n_frames < 2) throw ConfigParseError("n_frames must be >= 2");

  const bool closed = (waypoints.front() - waypoints.back()).norm() < 1e-12;
  const int n = static_cast<int>(waypoints.size());
  const int n_seg = n - 1;

  auto control = [&](int i) -> const Vec3& {
    if (closed) {
      // Skip the duplicated endpoint when wrapping.
      const int m = n - 1;
      return waypoints[((i % m) + m) % m];
    }
    return waypoints[std::clamp(i, 0, n - 1)];
  };

  auto yaw_at = [&](double u) {
    const int seg = std::min(static_cast<int>(u), n_seg - 1);
    const double t = u - seg;
    const Vec3 vel = detail::catmull_rom_derivative(control(seg - 1), control(seg),
                                                    control(seg + 1), control(seg + 2), t);
    if (std::abs(vel.x()) + std::abs(vel.z()) < 1e-12) return 0.0;
    return std::atan2(vel.x(), vel.z());
  };
  // Yaw is measured relative to the initial travel direction, so the first
  // pose is exactly identity and the heading still follows the velocity.
  const double yaw0 = yaw_at(0.0);

  std::vector<RigidTransform> poses;
  poses.reserve(n_frames);
  for (int f = 0; f < n_frames; ++f) {
    const double u = static_cast<double>(f) * n_seg / (n_frames - 1);
    const int seg = std::min(static_cast<int>(u), n_seg - 1);
    const double t = u - seg;
    const Vec3 pos = detail::catmull_rom(control(seg - 1), control(seg), control(seg + 1),
                                         control(seg + 2), t);

    Mat3 cam_to_world;
    if (f == 0) {
      cam_to_world = Mat3::Identity();
    } else {
      cam_to_world = detail::yaw_rotation(yaw_at(u) - yaw0);
      if (yaw_noise_deg > 0) {
        Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
        if (axis.norm() < 1e-9) axis = Vec3::UnitY();
        const double angle = rng.gaussian(yaw_noise_deg * M_PI / 180.0);
        cam_to_world = cam_to_world *
                       UnitQuaternion::from_axis_angle(axis.normalized(), angle).to_rotation_matrix();
      }
    }
    RigidTransform pose;
    pose.rotation = cam_to_world.transpose();
    pose.translation = -pose.rotation * pos;
    poses.push_back(pose);
  }
  return poses;
}

struct LandmarkBox {
  Vec3 lo, hi;
};

inline LandmarkBox landmark_box(const SceneConfig& cfg) {
  Vec3 lo = cfg.waypoints.front(), hi = cfg.waypoints.front();
  for (const auto& w : cfg.waypoints) {
    lo = lo.cwiseMin(w);
    hi = hi.cwiseMax(w);
  }
  const double m = cfg.landmark_margin_horizontal;
  return {Vec3(lo.x() - m, lo.y() - cfg.landmark_margin_below, lo.z() - m),
          Vec3(hi.x() + m, hi.y() + cfg.landmark_margin_above, hi.z() + m)};
}

// Uniform landmarks in the margin-grown waypoint bounding box.
inline std::vector<Vec3> sample_landmarks(const SceneConfig& cfg, Rng& rng) {
  const LandmarkBox box = landmark_box(cfg);
  std::vector<Vec3> out;
  out.reserve(cfg.n_landmarks);
  for (int i = 0; i < cfg.n_landmarks; ++i) {
    out.emplace_back(rng.uniform(box.lo.x(), box.hi.x()), rng.uniform(box.lo.y(), box.hi.y()),
                     rng.uniform(box.lo.z(), box.hi.z()));
  }
  return out;
}

// Per-component uniform draw in [-max/sqrt(3), max/sqrt(3)], bounding the
// vector norm by the level maximum.
inline InstantaneousMotion draw_frame_motion(const DistortionLevel& level, Rng& rng) {
  InstantaneousMotion m;
  const double vb = level.v_max / std::sqrt(3.0);
  const double wb = level.w_max_deg * M_PI / 180.0 / std::sqrt(3.0);
  for (int i = 0; i < 3; ++i) m.w(i) = wb > 0 ? rng.uniform(-wb, wb) : 0.0;
  for (int i = 0; i < 3; ++i) m.v(i) = vb > 0 ? rng.uniform(-vb, vb) : 0.0;
  return m;
}

namespace detail {

// Round-robin bucket selection: one candidate per non-empty cell per round,
// cells in row-major order, candidates within a cell by ascending landmark
// index, until max_features.
inline std::vector<int> bucket_select(const std::vector<ImagePoint>& anchors,
                                      const SceneConfig& cfg) {
  const int n_cells = cfg.bucket_rows * cfg.bucket_cols;
  const double cell_w = static_cast<double>(cfg.image_cols) / cfg.bucket_cols;
  const double cell_h = static_cast<double>(cfg.image_rows) / cfg.bucket_rows;
  std::vector<std::vector<int>> cells(n_cells);
  for (size_t i = 0; i < anchors.size(); ++i) {
    const int col = std::clamp(static_cast<int>(anchors[i].c / cell_w), 0, cfg.bucket_cols - 1);
    const int row = std::clamp(static_cast<int>(anchors[i].r / cell_h), 0, cfg.bucket_rows - 1);
    cells[row * cfg.bucket_cols + col].push_back(static_cast<int>(i));
  }

  std::vector<int> selected;
  selected.reserve(std::min<size_t>(cfg.max_features, anchors.size()));
  for (size_t round = 0; static_cast<int>(selected.size()) < cfg.max_features; ++round) {
    bool any = false;
    for (const auto& cell : cells) {
      if (round < cell.size()) {
        any = true;
        selected.push_back(cell[round]);
        if (static_cast<int>(selected.size()) >= cfg.max_features) break;
      }
    }
    if (!any) break;
  }
  return selected;
}

}  // namespace detail

// Project every landmark visible in both frames through the RS model with
// freshly drawn per-frame motions, bucket down to max_features, and record
// the ground truth (relative pose in the t -> t-1 convention, unit translation
// plus metric scale).
inline FramePairDataset generate_frame_pair(const SceneConfig& cfg, const RigidTransform& pose_prev,
                                            const RigidTransform& pose_cur,
                                            const std::vector<Vec3>& landmarks,
                                            const DistortionLevel& level, Rng& rng,
                                            int min_required = 20) {
  const CameraIntrinsics intr = cfg.intrinsics();

  FramePairDataset out;
  if (cfg.tie_motion_to_trajectory) {
    const RigidTransform rel = pose_cur * pose_prev.inverse();  // prev -> cur
    const Eigen::AngleAxisd aa(rel.rotation);
    out.true_motion_prev.w = out.true_motion_cur.w = aa.axis() * aa.angle() * cfg.frame_rate;
    const Vec3 center_prev = -(pose_prev.rotation.transpose() * pose_prev.translation);
    const Vec3 center_cur = -(pose_cur.rotation.transpose() * pose_cur.translation);
    // Velocity of the camera expressed in each camera's own frame.
    out.true_motion_prev.v = pose_prev.rotation * (center_cur - center_prev) * cfg.frame_rate;
    out.true_motion_cur.v = pose_cur.rotation * (center_cur - center_prev) * cfg.frame_rate;
  } else {
    out.true_motion_prev = draw_frame_motion(level, rng);
    out.true_motion_cur = draw_frame_motion(level, rng);
  }

  // A landmark whose GS projection sits further outside the image than the
  // worst-case RS displacement at this level cannot land inside; projecting
  // it through the row fixed point would be wasted work. The bound is the
  // readout span times (angular sweep + parallax from the linear velocity at
  // this depth), with generous slack.
  const double readout = intr.tau * cfg.image_rows;
  const double w_max = std::max(out.true_motion_prev.w.norm(), out.true_motion_cur.w.norm());
  const double v_max = std::max(out.true_motion_prev.v.norm(), out.true_motion_cur.v.norm());
  const Mat3 k_mat = intr.matrix();
  auto maybe_inside = [&](const Vec3& x_cam) {
    if (!(x_cam.z() > 0)) return false;
    const Vec3 m = k_mat * x_cam;
    const double c = m.x() / m.z(), r = m.y() / m.z();
    const double margin = 50.0 + readout * cfg.focal * (2.0 * w_max + v_max / x_cam.z());
    return c >= -margin && c < cfg.image_cols + margin && r >= -margin &&
           r < cfg.image_rows + margin;
  };

  std::vector<ImagePoint> anchors;
  std::vector<Correspondence> visible;
  std::vector<int> ids;
  for (size_t i = 0; i < landmarks.size(); ++i) {
    if (!maybe_inside(pose_prev * landmarks[i]) || !maybe_inside(pose_cur * landmarks[i])) continue;
    const Vec4 xh(landmarks[i].x(), landmarks[i].y(), landmarks[i].z(), 1.0);
    try {
      const ImagePoint mp = project_rs(xh, pose_prev, out.true_motion_prev, intr);
      const ImagePoint mc = project_rs(xh, pose_cur, out.true_motion_cur, intr);
      if (mp.c < 0 || mp.c >= cfg.image_cols || mp.r < 0 || mp.r >= cfg.image_rows) continue;
      if (mc.c < 0 || mc.c >= cfg.image_cols || mc.r < 0 || mc.r >= cfg.image_rows) continue;
      visible.push_back({mp, mc});
      anchors.push_back(mp);
      ids.push_back(static_cast<int>(i));
    } catch (const Error&) {
    }
  }
  if (static_cast<int>(visible.size()) < min_required) {
    throw InsufficientVisibility("jointly visible landmarks: " + std::to_string(visible.size()));
  }

  const std::vector<int> picks = detail::bucket_select(anchors, cfg);
  out.correspondences.reserve(picks.size());
  out.landmark_ids.reserve(picks.size());
  for (int p : picks) {
    out.correspondences.push_back(visible[p]);
    out.landmark_ids.push_back(ids[p]);
  }

  const Mat3 r = pose_prev.rotation * pose_cur.rotation.transpose();  // cur -> prev
  const Vec3 t = pose_prev.translation - r * pose_cur.translation;
  out.true_scale = t.norm();
  if (out.true_scale < 1e-12) throw DegenerateTranslation("zero-baseline frame pair");
  out.true_relative_pose.rotation = r;
  out.true_relative_pose.translation = t / out.true_scale;
  return out;
}

enum class NoiseModel { kNone, kGaussian, kLaplacian };

// I.i.d. per-coordinate tracking noise on both frames' points. The Laplacian
// scale is sigma/sqrt(2), so both models share the standard deviation sigma.
inline std::vector<Correspondence> add_noise(std::vector<Correspondence> corrs, NoiseModel model,
                                             double sigma, Rng& rng) {
  if (sigma < 0) throw ConfigParseError("noise sigma must be >= 0");
  if (model == NoiseModel::kNone || sigma == 0) return corrs;
  auto draw = [&]() {
    return model == NoiseModel::kGaussian ? rng.gaussian(sigma) : rng.laplacian(sigma);
  };
  for (auto& c : corrs) {
    c.prev.c += draw();
    c.prev.r += draw();
    c.cur.c += draw();
    c.cur.r += draw();
  }
  return corrs;
}

}  // namespace rsvo
