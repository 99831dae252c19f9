#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>

#include "rsvo/errors.hpp"

namespace rsvo {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;

// Pinhole intrinsics plus the rolling-shutter readout parameters. tau is the
// exposure time of one image line; row r is exposed at time r * tau after the
// top row (r = 0), which anchors the instantaneous velocities.
struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  double skew = 0;
  double tau = 0;
  int n_rows = 0, n_cols = 0;

  Mat3 matrix() const {
    Mat3 k;
    k << fx, skew, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  Mat3 inverse_matrix() const {
    validate();
    return matrix().inverse();
  }

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw SingularIntrinsics("focal lengths must be positive");
    if (!(tau > 0)) throw SingularIntrinsics("tau must be positive");
    if (n_rows < 2 || n_cols < 2) throw SingularIntrinsics("image must be at least 2x2");
    if (std::abs(matrix().determinant()) < 1e-12) throw SingularIntrinsics();
  }
};

// Unit quaternion; renormalized after every construction and composition.
class UnitQuaternion {
 public:
  UnitQuaternion() : q_(1, 0, 0, 0) {}
  UnitQuaternion(double w, double x, double y, double z) : q_(w, x, y, z) { q_.normalize(); }
  explicit UnitQuaternion(const Eigen::Quaterniond& q) : q_(q.normalized()) {}

  static UnitQuaternion identity() { return UnitQuaternion(); }
  static UnitQuaternion from_rotation_matrix(const Mat3& r) { return UnitQuaternion(Eigen::Quaterniond(r)); }
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle) {
    return UnitQuaternion(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())));
  }

  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }

  Mat3 to_rotation_matrix() const { return q_.toRotationMatrix(); }
  UnitQuaternion conjugate() const { return UnitQuaternion(q_.conjugate()); }

  UnitQuaternion operator*(const UnitQuaternion& rhs) const { return UnitQuaternion(q_ * rhs.q_); }

 private:
  Eigen::Quaterniond q_;
};

// Rigid transform X_out = rotation * X_in + translation. The direction of the
// map is a property of the use site and is documented there.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.translation = -out.rotation * translation;
    return out;
  }

  // this after other: (this * other)(x) = this(other(x)).
  RigidTransform operator*(const RigidTransform& other) const {
    RigidTransform out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  Vec3 operator*(const Vec3& x) const { return rotation * x + translation; }
};

// Angular and linear camera velocities during one frame's readout, anchored
// at the top row (r = 0). Units: rad/s and m/s.
struct InstantaneousMotion {
  Vec3 w = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  static InstantaneousMotion zero() { return {}; }
};

// Pixel position; c is the column, r the row fed to the RS transformation.
struct ImagePoint {
  double c = 0;
  double r = 0;
};

inline Mat3 skew_matrix(const Vec3& a) {
  Mat3 s;
  s << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return s;
}

// Row-dependent RS rotation, the linearization I + r*tau*[w]x. Deliberately
// not re-orthonormalized.
inline Mat3 rs_rotation(double row, const InstantaneousMotion& motion, double tau) {
  return Mat3::Identity() + row * tau * skew_matrix(motion.w);
}

inline Vec3 rs_translation(double row, const InstantaneousMotion& motion, double tau) {
  return row * tau * motion.v;
}

namespace detail {

inline ImagePoint project_camera_point(const Vec3& x_cam, const Mat3& k) {
  if (!(x_cam.z() > 0)) throw NonPositiveDepth();
  const Vec3 m = k * x_cam;
  return {m.x() / m.z(), m.y() / m.z()};
}

}  // namespace detail

// Global-shutter projection. pose maps world coordinates to camera
// coordinates; the homogeneous input is normalized on ingestion.
inline ImagePoint project_gs(const Vec4& x_world_h, const RigidTransform& pose,
                             const CameraIntrinsics& intr) {
  const Vec3 x_world = x_world_h.head<3>() / x_world_h.w();
  return detail::project_camera_point(pose * x_world, intr.matrix());
}

// Rolling-shutter projection. The RS transformation [R_rs(r) | t_rs(r)] maps
// the frame captured at row r onto the frame anchor (row 0), so a camera
// point is observed at row r through the exact affine inverse:
//   x_row(r) = R_rs(r)^{-1} (X_cam - t_rs(r)).
// The observed row is the fixed point r* of r -> row(K x_row(r)), found by
// iteration seeded with the GS row (tolerance 1e-8 px, at most 50 rounds).
inline ImagePoint project_rs(const Vec4& x_world_h, const RigidTransform& pose,
                             const InstantaneousMotion& motion, const CameraIntrinsics& intr,
                             double row_tolerance = 1e-8, int max_iterations = 50) {
  const Vec3 x_world = x_world_h.head<3>() / x_world_h.w();
  const Vec3 x_cam = pose * x_world;
  const Mat3 k = intr.matrix();

  double row = detail::project_camera_point(x_cam, k).r;
  for (int it = 0; it < max_iterations; ++it) {
    const Mat3 r_rs = rs_rotation(row, motion, intr.tau);
    const Vec3 x_row = r_rs.inverse() * (x_cam - rs_translation(row, motion, intr.tau));
    const ImagePoint m = detail::project_camera_point(x_row, k);
    if (std::abs(m.r - row) < row_tolerance) return m;
    row = m.r;
  }
  throw NoConvergence("project_rs row fixed point did not settle");
}

}  // namespace rsvo
