#pragma once

#include <vector>

#include "rsvo/epipolar.hpp"

namespace rsvo {

// Minimal 18-dimensional perturbation around a NominalState: multiplicative
// error quaternion dq ~ [1, dtheta/2] for the rotation, additive deltas for
// translation and the four velocity vectors.
struct ErrorState {
  Eigen::Matrix<double, 18, 1> x = Eigen::Matrix<double, 18, 1>::Zero();

  static constexpr int kDim = 18;

  Vec3 dtheta_gs() const { return x.segment<3>(0); }
  Vec3 dt_gs() const { return x.segment<3>(3); }
  Vec3 dw_prev() const { return x.segment<3>(6); }
  Vec3 dv_prev() const { return x.segment<3>(9); }
  Vec3 dw_cur() const { return x.segment<3>(12); }
  Vec3 dv_cur() const { return x.segment<3>(15); }
};

struct LmConfig {
  int max_iterations = 50;
  double initial_damping = 1e-3;
  double damping_up = 10.0;
  double damping_down = 0.1;
  double cost_tolerance = 1e-10;  // absolute decrease
  double step_tolerance = 1e-10;
  // Restrict the search to the pose block; the classical GS refinement.
  bool freeze_velocities = false;
};

// Fold an error state into the nominal: quaternion composed with the error
// quaternion, translation re-normalized to unit length (the scale gauge),
// velocities additive.
inline NominalState apply_error_state(const NominalState& nominal, const ErrorState& err) {
  NominalState out = nominal;
  const Vec3 half = 0.5 * err.dtheta_gs();
  out.q_gs = nominal.q_gs * UnitQuaternion(1.0, half.x(), half.y(), half.z());
  out.t_gs = (nominal.t_gs + err.dt_gs()).normalized();
  out.motion_prev.w = nominal.motion_prev.w + err.dw_prev();
  out.motion_prev.v = nominal.motion_prev.v + err.dv_prev();
  out.motion_cur.w = nominal.motion_cur.w + err.dw_cur();
  out.motion_cur.v = nominal.motion_cur.v + err.dv_cur();
  return out;
}

// Entries whose Sampson denominator degenerates are set to this sentinel so
// the optimizer treats them as gross outliers rather than aborting.
inline constexpr double kDegenerateResidual = 1e6;

struct ResidualReport {
  Eigen::VectorXd r;
  int degenerate_count = 0;
};

namespace detail {

inline ResidualReport residual_vector_prepared(
    const NominalState& nominal, const ErrorState& err,
    const std::vector<RsSampsonEvaluator::Prepared>& prepared, const CameraIntrinsics& intr) {
  const NominalState state = apply_error_state(nominal, err);
  const RsSampsonEvaluator eval(state, intr);

  ResidualReport out;
  out.r.resize(static_cast<Eigen::Index>(prepared.size()));
  for (size_t i = 0; i < prepared.size(); ++i) {
    double res = 0, value = 0;
    if (eval.evaluate_prepared(prepared[i], &res, &value)) {
      out.r(static_cast<Eigen::Index>(i)) = std::copysign(std::sqrt(res), value);
    } else {
      out.r(static_cast<Eigen::Index>(i)) = kDegenerateResidual;
      ++out.degenerate_count;
    }
  }
  return out;
}

inline Eigen::MatrixXd numeric_jacobian_prepared(
    const NominalState& nominal, const ErrorState& err,
    const std::vector<RsSampsonEvaluator::Prepared>& prepared, const CameraIntrinsics& intr) {
  Eigen::MatrixXd j(static_cast<Eigen::Index>(prepared.size()), ErrorState::kDim);
  for (int k = 0; k < ErrorState::kDim; ++k) {
    const double h = std::max(1e-6, 1e-6 * std::abs(err.x(k)));
    ErrorState plus = err, minus = err;
    plus.x(k) += h;
    minus.x(k) -= h;
    j.col(k) = (residual_vector_prepared(nominal, plus, prepared, intr).r -
                residual_vector_prepared(nominal, minus, prepared, intr).r) /
               (2.0 * h);
  }
  if (!j.allFinite()) throw NonFiniteJacobian();
  return j;
}

}  // namespace detail

// Per-correspondence signed Sampson residuals (pixel units): the i-th entry is
// sign(m_cur^T F m_prev) * sqrt(sampson), with F the per-correspondence RS
// fundamental of the perturbed state. Sum of squares is the Sampson cost.
inline ResidualReport residual_vector(const NominalState& nominal, const ErrorState& err,
                                      const std::vector<Correspondence>& corrs,
                                      const CameraIntrinsics& intr) {
  if (corrs.empty()) throw TooFewPoints("residual_vector needs correspondences");
  return detail::residual_vector_prepared(nominal, err, RsSampsonEvaluator::prepare(corrs, intr),
                                          intr);
}

// Central finite differences of residual_vector in the error state, step
// max(1e-6, 1e-6 |component|) per component.
inline Eigen::MatrixXd numeric_jacobian(const NominalState& nominal, const ErrorState& err,
                                        const std::vector<Correspondence>& corrs,
                                        const CameraIntrinsics& intr) {
  return detail::numeric_jacobian_prepared(nominal, err, RsSampsonEvaluator::prepare(corrs, intr),
                                           intr);
}

struct RefineResult {
  NominalState state;
  double final_cost = 0;
  int iterations = 0;
  bool converged = false;
};

// Error-state Levenberg-Marquardt on the Sampson cost. Damped normal
// equations (J^T J + lambda diag(J^T J)) d = -J^T r with a 1e-8 Tikhonov
// prior on the velocity block (barely observable from 20 points); accepted
// steps are absorbed into the nominal and the error reset to zero, and the
// translation stays unit-norm through apply_error_state.
inline RefineResult lm_refine(const NominalState& initial, const std::vector<Correspondence>& corrs,
                              const CameraIntrinsics& intr, const LmConfig& cfg = {}) {
  if (corrs.size() < 9) throw TooFewPoints("lm_refine needs >= 9 correspondences");
  const auto prepared = RsSampsonEvaluator::prepare(corrs, intr);

  RefineResult out;
  out.state = initial;
  out.state.t_gs.normalize();

  const ErrorState zero;
  double cost = detail::residual_vector_prepared(out.state, zero, prepared, intr).r.squaredNorm();
  double lambda = cfg.initial_damping;
  constexpr double kLambdaMax = 1e8;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    out.iterations = it + 1;
    Eigen::MatrixXd j = detail::numeric_jacobian_prepared(out.state, zero, prepared, intr);
    if (cfg.freeze_velocities) j.rightCols<12>().setZero();
    const Eigen::VectorXd r = detail::residual_vector_prepared(out.state, zero, prepared, intr).r;
    const Eigen::Matrix<double, 18, 18> jtj = j.transpose() * j;
    const Eigen::Matrix<double, 18, 1> jtr = j.transpose() * r;
    Eigen::Matrix<double, 18, 1> base_diag = jtj.diagonal();

    bool accepted = false;
    while (!accepted) {
      Eigen::Matrix<double, 18, 18> h = jtj;
      h.diagonal() += lambda * base_diag;
      h.diagonal().tail<12>().array() += 1e-8;  // velocity-block prior

      const Eigen::LDLT<Eigen::Matrix<double, 18, 18>> ldlt(h);
      Eigen::Matrix<double, 18, 1> step;
      bool solvable = ldlt.info() == Eigen::Success;
      if (solvable) {
        step = ldlt.solve(-jtr);
        solvable = step.allFinite();
      }
      if (!solvable) {
        lambda *= cfg.damping_up;
        if (lambda > kLambdaMax) throw NumericalFailure("LM normal equations unsolvable");
        continue;
      }

      ErrorState trial_err;
      trial_err.x = step;
      const NominalState trial = apply_error_state(out.state, trial_err);
      const double trial_cost =
          detail::residual_vector_prepared(trial, zero, prepared, intr).r.squaredNorm();

      if (trial_cost < cost) {
        const double decrease = cost - trial_cost;
        out.state = trial;
        cost = trial_cost;
        lambda = std::max(lambda * cfg.damping_down, 1e-12);
        accepted = true;
        if (decrease < cfg.cost_tolerance || step.norm() < cfg.step_tolerance) {
          out.converged = true;
        }
      } else {
        lambda *= cfg.damping_up;
        if (lambda > kLambdaMax) {
          // No descent direction left; treat the current state as the optimum.
          out.converged = true;
          out.final_cost = cost;
          return out;
        }
      }
    }
    if (out.converged) break;
  }

  out.final_cost = cost;
  return out;
}

}  // namespace rsvo
