#pragma once

#include <cmath>

#include "rsvo/geometry.hpp"

namespace rsvo {

// Full state of the two-frame problem: relative pose plus one instantaneous
// motion per frame. (q_gs, t_gs) maps frame t-1 camera coordinates to frame t
// camera coordinates: X_cur = R(q_gs) X_prev + t_gs. During estimation t_gs is
// kept unit-norm; metric scale is injected only at evaluation time.
struct NominalState {
  UnitQuaternion q_gs;
  Vec3 t_gs = Vec3::UnitZ();
  InstantaneousMotion motion_prev;  // frame t-1
  InstantaneousMotion motion_cur;   // frame t

  Mat3 rotation() const { return q_gs.to_rotation_matrix(); }
};

// Rescale a metric state into the estimation gauge: unit-norm translation
// with the linear velocities divided by the same factor. The epipolar
// constraint only sees the joint scale of (t_gs, v_prev, v_cur) — that is the
// one unobservable DOF of the 17-DOF model — so this leaves every residual
// unchanged. Angular velocities are scale-free.
inline NominalState normalize_gauge(const NominalState& state) {
  const double s = state.t_gs.norm();
  if (s < 1e-12) throw DegenerateTranslation();
  NominalState out = state;
  out.t_gs /= s;
  out.motion_prev.v /= s;
  out.motion_cur.v /= s;
  return out;
}

// One tracked feature observed in two consecutive RS frames.
struct Correspondence {
  ImagePoint prev;  // frame t-1
  ImagePoint cur;   // frame t
};

struct EssentialMatrix {
  Mat3 e = Mat3::Zero();
};

// Classical essential matrix E = [t]x R for the constraint
// x_cur^T E x_prev = 0 with (R, t) mapping prev to cur coordinates.
inline EssentialMatrix gs_essential(const Mat3& r_gs, const Vec3& t_gs) {
  if (t_gs.norm() < 1e-12) throw DegenerateTranslation();
  return {skew_matrix(t_gs) * r_gs};
}

// RS essential matrix for one correspondence, exact composition of the
// two affine camera chains: with A = (R_rs, t_rs) of frame t-1 at row_prev and
// B = the frame-t pair at row_cur,
//   E = [R_B^{-1} u]x (R_B^{-1} R_gs R_A),   u = t_gs - t_B + R_gs t_A,
// satisfying x_cur^T E x_prev = 0. R_B^{-1} is the exact matrix inverse of the
// (non-orthonormal) linearized RS rotation. Zero velocities reduce this
// bit-exactly to gs_essential. Rank 2 by construction.
inline EssentialMatrix rs_essential(const NominalState& state, double row_prev,
                                    double row_cur, double tau) {
  const Mat3 r_a = rs_rotation(row_prev, state.motion_prev, tau);
  const Vec3 t_a = rs_translation(row_prev, state.motion_prev, tau);
  const Mat3 r_b = rs_rotation(row_cur, state.motion_cur, tau);
  const Vec3 t_b = rs_translation(row_cur, state.motion_cur, tau);

  const Mat3 r_gs = state.rotation();
  const Mat3 r_b_inv = r_b.inverse();
  const Vec3 u = state.t_gs - t_b + r_gs * t_a;
  const Mat3 e = skew_matrix(r_b_inv * u) * (r_b_inv * r_gs * r_a);
  if (!e.allFinite()) throw NumericalFailure("rs_essential produced non-finite entries");
  return {e};
}

// F = K^{-T} E K^{-1}; operates on pixel coordinates.
inline Mat3 rs_fundamental(const NominalState& state, double row_prev, double row_cur,
                           double tau, const CameraIntrinsics& intr) {
  const Mat3 k_inv = intr.inverse_matrix();
  return k_inv.transpose() * rs_essential(state, row_prev, row_cur, tau).e * k_inv;
}

namespace detail {

inline Vec3 homogeneous(const ImagePoint& p) { return Vec3(p.c, p.r, 1.0); }

// Squared Sampson error of one correspondence under F (pixel^2 units):
//   (m_cur^T F m_prev)^2 / ((F m_prev)_c^2 + (F m_prev)_r^2
//                           + (F^T m_cur)_c^2 + (F^T m_cur)_r^2).
// Returns false when all four gradient components vanish. signed_value gets
// the algebraic epipolar value m_cur^T F m_prev.
inline bool sampson_residual_checked(const Mat3& f, const Correspondence& corr,
                                     double* residual, double* signed_value = nullptr) {
  const Vec3 m_prev = homogeneous(corr.prev);
  const Vec3 m_cur = homogeneous(corr.cur);
  const Vec3 f_prev = f * m_prev;
  const Vec3 ft_cur = f.transpose() * m_cur;
  const double num = m_cur.dot(f_prev);
  const double den = f_prev.x() * f_prev.x() + f_prev.y() * f_prev.y() +
                     ft_cur.x() * ft_cur.x() + ft_cur.y() * ft_cur.y();
  if (signed_value) *signed_value = num;
  if (std::abs(f_prev.x()) < 1e-15 && std::abs(f_prev.y()) < 1e-15 &&
      std::abs(ft_cur.x()) < 1e-15 && std::abs(ft_cur.y()) < 1e-15) {
    return false;
  }
  *residual = num * num / den;
  return true;
}

}  // namespace detail

inline double sampson_residual(const Mat3& f, const Correspondence& corr) {
  double res = 0;
  if (!detail::sampson_residual_checked(f, corr, &res)) throw DegenerateDenominator();
  return res;
}

// Precomputed per-state quantities for repeated Sampson evaluation over many
// correspondences; the hot path of the refiner and the RANSAC scorer.
// Evaluation never materializes E or F: with e = R_B^{-1} u and
// S = R_B^{-1} R_gs R_A, the needed products collapse to mat-vec chains
//   E x_prev = e x (S x_prev),   E^T x_cur = -S^T (e x x_cur),
// and the pixel-space Sampson terms follow through K^{-T}.
class RsSampsonEvaluator {
 public:
  // State-independent per-correspondence quantities, reusable across every
  // state evaluated against the same correspondence set.
  struct Prepared {
    Vec3 x_prev, x_cur;  // normalized homogeneous image points K^{-1} m
    double hp = 0, hc = 0;  // row * tau per frame
  };

  static std::vector<Prepared> prepare(const std::vector<Correspondence>& corrs,
                                       const CameraIntrinsics& intr) {
    const Mat3 k_inv = intr.inverse_matrix();
    std::vector<Prepared> out(corrs.size());
    for (size_t i = 0; i < corrs.size(); ++i) {
      out[i].x_prev = k_inv * detail::homogeneous(corrs[i].prev);
      out[i].x_cur = k_inv * detail::homogeneous(corrs[i].cur);
      out[i].hp = corrs[i].prev.r * intr.tau;
      out[i].hc = corrs[i].cur.r * intr.tau;
    }
    return out;
  }

  RsSampsonEvaluator(const NominalState& state, const CameraIntrinsics& intr)
      : r_gs_(state.rotation()),
        t_gs_(state.t_gs),
        skew_w_prev_(skew_matrix(state.motion_prev.w)),
        skew_w_cur_(skew_matrix(state.motion_cur.w)),
        v_prev_(state.motion_prev.v),
        v_cur_(state.motion_cur.v),
        tau_(intr.tau),
        k_inv_(intr.inverse_matrix()),
        k_inv_t_(k_inv_.transpose()) {}

  // Squared Sampson error in pixel^2; false on a degenerate denominator.
  bool evaluate_prepared(const Prepared& p, double* residual,
                         double* signed_value = nullptr) const {
    const Mat3 r_a = Mat3::Identity() + p.hp * skew_w_prev_;
    const Mat3 r_b_inv = (Mat3::Identity() + p.hc * skew_w_cur_).inverse();
    const Vec3 u = t_gs_ - p.hc * v_cur_ + r_gs_ * (p.hp * v_prev_);
    const Vec3 e = r_b_inv * u;

    const Vec3 e_xprev = e.cross(r_b_inv * (r_gs_ * (r_a * p.x_prev)));
    const Vec3 et_xcur = -(r_a.transpose() *
                           (r_gs_.transpose() * (r_b_inv.transpose() * e.cross(p.x_cur))));
    const double num = p.x_cur.dot(e_xprev);
    if (signed_value) *signed_value = num;

    const Vec3 g1 = k_inv_t_ * e_xprev;   // (F m_prev) components
    const Vec3 g2 = k_inv_t_ * et_xcur;   // (F^T m_cur) components
    const double den = g1.x() * g1.x() + g1.y() * g1.y() + g2.x() * g2.x() + g2.y() * g2.y();
    if (std::abs(g1.x()) < 1e-15 && std::abs(g1.y()) < 1e-15 && std::abs(g2.x()) < 1e-15 &&
        std::abs(g2.y()) < 1e-15) {
      return false;
    }
    *residual = num * num / den;
    return true;
  }

  bool evaluate(const Correspondence& corr, double* residual,
                double* signed_value = nullptr) const {
    Prepared p;
    p.x_prev = k_inv_ * detail::homogeneous(corr.prev);
    p.x_cur = k_inv_ * detail::homogeneous(corr.cur);
    p.hp = corr.prev.r * tau_;
    p.hc = corr.cur.r * tau_;
    return evaluate_prepared(p, residual, signed_value);
  }

 private:
  Mat3 r_gs_;
  Vec3 t_gs_;
  Mat3 skew_w_prev_, skew_w_cur_;
  Vec3 v_prev_, v_cur_;
  double tau_;
  Mat3 k_inv_, k_inv_t_;
};

}  // namespace rsvo
