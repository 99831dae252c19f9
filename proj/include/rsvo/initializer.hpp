#pragma once

#include <Eigen/SVD>
#include <utility>
#include <vector>

#include "rsvo/epipolar.hpp"

namespace rsvo {

// Relative pose from the conventional pipeline; (q, t) maps frame t-1 camera
// coordinates to frame t camera coordinates, with unit-norm t.
struct InitialPose {
  UnitQuaternion q;
  Vec3 t = Vec3::UnitZ();
};

struct Initialization {
  InitialPose pose;
  // Median triangulated parallax below 0.1 deg; the pose direction is then
  // poorly constrained and downstream refinement should not trust it much.
  bool low_parallax = false;
};

// Hartley conditioning: translate to zero centroid, scale to RMS radius
// sqrt(2). Returns the conditioned points and the transform that maps the
// originals onto them.
inline std::pair<std::vector<ImagePoint>, Mat3> normalize_points(
    const std::vector<ImagePoint>& points) {
  if (points.size() < 2) throw DegenerateCloud("need at least 2 points");
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : points) centroid += Eigen::Vector2d(p.c, p.r);
  centroid /= static_cast<double>(points.size());

  double sum_sq = 0;
  for (const auto& p : points) sum_sq += (Eigen::Vector2d(p.c, p.r) - centroid).squaredNorm();
  const double rms = std::sqrt(sum_sq / static_cast<double>(points.size()));
  if (rms < 1e-12) throw DegenerateCloud();

  const double scale = std::sqrt(2.0) / rms;
  Mat3 t;
  t << scale, 0, -scale * centroid.x(), 0, scale, -scale * centroid.y(), 0, 0, 1;

  std::vector<ImagePoint> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    out.push_back({scale * (p.c - centroid.x()), scale * (p.r - centroid.y())});
  }
  return {std::move(out), t};
}

namespace detail {

inline std::vector<ImagePoint> to_camera_points(const std::vector<Correspondence>& corrs,
                                                const Mat3& k_inv, bool cur_side) {
  std::vector<ImagePoint> pts;
  pts.reserve(corrs.size());
  for (const auto& c : corrs) {
    const Vec3 x = k_inv * homogeneous(cur_side ? c.cur : c.prev);
    pts.push_back({x.x() / x.z(), x.y() / x.z()});
  }
  return pts;
}

}  // namespace detail

// Normalized 8-point DLT for the essential matrix: intrinsics removed, both
// point sets Hartley-conditioned, singular values projected to (s, s, 0) with
// s the mean of the two largest. Output satisfies x_cur^T E x_prev = 0.
inline EssentialMatrix eight_point_essential(const std::vector<Correspondence>& corrs,
                                             const CameraIntrinsics& intr) {
  if (corrs.size() < 8) throw TooFewPoints("eight_point_essential needs >= 8 correspondences");
  const Mat3 k_inv = intr.inverse_matrix();

  const auto [prev_n, t_prev] = normalize_points(detail::to_camera_points(corrs, k_inv, false));
  const auto [cur_n, t_cur] = normalize_points(detail::to_camera_points(corrs, k_inv, true));

  Eigen::MatrixXd design(corrs.size(), 9);
  for (size_t i = 0; i < corrs.size(); ++i) {
    const Vec3 xp = detail::homogeneous(prev_n[i]);
    const Vec3 xc = detail::homogeneous(cur_n[i]);
    design.row(i) << xc.x() * xp.x(), xc.x() * xp.y(), xc.x(), xc.y() * xp.x(),
        xc.y() * xp.y(), xc.y(), xp.x(), xp.y(), 1.0;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(7) < 1e-10 * sv(0)) throw RankDeficientDesign();

  const Eigen::Matrix<double, 9, 1> e_vec = svd.matrixV().col(8);
  Mat3 e_cond;
  e_cond << e_vec(0), e_vec(1), e_vec(2), e_vec(3), e_vec(4), e_vec(5), e_vec(6), e_vec(7), e_vec(8);

  // Undo the conditioning first: (T_cur x_cur)^T E' (T_prev x_prev) = 0. The
  // conditioning transforms are not similarities of the essential structure,
  // so the (s, s, 0) projection must happen in the de-conditioned frame.
  const Mat3 e_raw = t_cur.transpose() * e_cond * t_prev;

  Eigen::JacobiSVD<Mat3> esvd(e_raw, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double sigma = 0.5 * (esvd.singularValues()(0) + esvd.singularValues()(1));
  return {esvd.matrixU() * Vec3(sigma, sigma, 0.0).asDiagonal() * esvd.matrixV().transpose()};
}

namespace detail {

// Midpoint triangulation in the prev frame (prev camera at the origin, cur
// camera at pose (r, t) mapping prev to cur). Returns depths in both frames
// and the parallax angle between the two rays.
struct TriangulatedPoint {
  double depth_prev = 0;
  double depth_cur = 0;
  double parallax_rad = 0;
  bool valid = false;
};

inline TriangulatedPoint triangulate_midpoint(const Vec3& ray_prev, const Vec3& ray_cur,
                                              const Mat3& r, const Vec3& t) {
  TriangulatedPoint out;
  const Vec3 d1 = ray_prev.normalized();
  const Vec3 d2 = (r.transpose() * ray_cur).normalized();
  const Vec3 c2 = -r.transpose() * t;  // cur camera center in prev coords

  // min || l1 d1 - (c2 + l2 d2) ||
  const double a = d1.dot(d1), b = d1.dot(d2), c = d2.dot(d2);
  const double det = a * c - b * b;
  if (det < 1e-14) return out;
  const double e1 = d1.dot(c2), e2 = d2.dot(c2);
  const double l1 = (c * e1 - b * e2) / det;
  const double l2 = (b * e1 - a * e2) / det;

  const Vec3 x = 0.5 * (l1 * d1 + c2 + l2 * d2);
  out.depth_prev = x.z();
  out.depth_cur = (r * x + t).z();
  out.parallax_rad = std::acos(std::clamp(d1.dot(d2), -1.0, 1.0));
  out.valid = true;
  return out;
}

}  // namespace detail

// Decompose the essential matrix into the four (R, +-t) candidates and select
// by cheirality (midpoint triangulation, positive depth in both views).
inline Initialization decompose_essential(const EssentialMatrix& e,
                                          const std::vector<Correspondence>& corrs,
                                          const CameraIntrinsics& intr) {
  if (corrs.empty()) throw TooFewPoints("decompose_essential needs correspondences");
  const Mat3 k_inv = intr.inverse_matrix();

  Eigen::JacobiSVD<Mat3> svd(e.e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if (u.determinant() < 0) u.col(2) = -u.col(2);
  if (v.determinant() < 0) v.col(2) = -v.col(2);

  Mat3 w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 r1 = u * w * v.transpose();
  const Mat3 r2 = u * w.transpose() * v.transpose();
  const Vec3 t = u.col(2);

  const std::array<std::pair<Mat3, Vec3>, 4> candidates = {
      std::make_pair(r1, t), std::make_pair(r1, Vec3(-t)),
      std::make_pair(r2, t), std::make_pair(r2, Vec3(-t))};

  std::vector<Vec3> rays_prev, rays_cur;
  rays_prev.reserve(corrs.size());
  rays_cur.reserve(corrs.size());
  for (const auto& c : corrs) {
    rays_prev.push_back(k_inv * detail::homogeneous(c.prev));
    rays_cur.push_back(k_inv * detail::homogeneous(c.cur));
  }

  int best = -1, best_count = -1;
  double best_parallax = 0;
  for (int ci = 0; ci < 4; ++ci) {
    int count = 0;
    std::vector<double> parallax;
    parallax.reserve(corrs.size());
    for (size_t i = 0; i < corrs.size(); ++i) {
      const auto tri = detail::triangulate_midpoint(rays_prev[i], rays_cur[i],
                                                    candidates[ci].first, candidates[ci].second);
      if (tri.valid && tri.depth_prev > 0 && tri.depth_cur > 0) {
        ++count;
        parallax.push_back(tri.parallax_rad);
      }
    }
    if (count > best_count) {
      best_count = count;
      best = ci;
      if (!parallax.empty()) {
        auto mid = parallax.begin() + parallax.size() / 2;
        std::nth_element(parallax.begin(), mid, parallax.end());
        best_parallax = *mid;
      } else {
        best_parallax = 0;
      }
    }
  }

  if (best_count * 2 <= static_cast<int>(corrs.size())) throw CheiralityAmbiguous();

  Initialization out;
  out.pose.q = UnitQuaternion::from_rotation_matrix(candidates[best].first);
  out.pose.t = candidates[best].second.normalized();
  out.low_parallax = best_parallax < 0.1 * M_PI / 180.0;
  return out;
}

// Full conventional initialization: normalized 8-point DLT plus SVD
// decomposition with cheirality, on all supplied correspondences.
inline Initialization estimate_initial_pose(const std::vector<Correspondence>& corrs,
                                            const CameraIntrinsics& intr) {
  return decompose_essential(eight_point_essential(corrs, intr), corrs, intr);
}

}  // namespace rsvo
