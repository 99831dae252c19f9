#pragma once

#include <cstdint>
#include <vector>

#include "rsvo/initializer.hpp"
#include "rsvo/refiner.hpp"
#include "rsvo/rng.hpp"

namespace rsvo {

struct RansacConfig {
  int iterations = 500;
  int sample_size = 20;
  double inlier_threshold = 1.0;  // Sampson distance, pixels
  std::uint64_t rng_seed = 0;
  // Optional standard confidence-based early exit; the reference protocol
  // runs the full iteration count.
  bool confidence_exit = false;
  double confidence = 0.999;

  void validate() const {
    if (iterations < 1 || sample_size < 9 || !(inlier_threshold > 0)) {
      throw ConfigParseError("invalid RANSAC configuration");
    }
  }
};

struct EstimationResult {
  NominalState state;
  std::vector<bool> inlier_mask;
  double inlier_ratio = 0;
  std::vector<double> per_point_residual;  // Sampson distance, pixels
  int inlier_count = 0;
  int best_iteration = -1;   // -1: the raw initialization won
  int lm_iterations = 0;     // total LM iterations over all hypotheses
  bool low_parallax = false;
};

struct InlierStats {
  int count = 0;
  std::vector<bool> mask;
  std::vector<double> residuals;
  double total_inlier_residual = 0;
};

namespace detail {

inline InlierStats count_inliers_prepared(const NominalState& state,
                                          const std::vector<RsSampsonEvaluator::Prepared>& prepared,
                                          const CameraIntrinsics& intr, double threshold) {
  const RsSampsonEvaluator eval(state, intr);
  InlierStats out;
  out.mask.resize(prepared.size(), false);
  out.residuals.resize(prepared.size(), kDegenerateResidual);
  for (size_t i = 0; i < prepared.size(); ++i) {
    double res = 0;
    if (!eval.evaluate_prepared(prepared[i], &res)) continue;
    const double dist = std::sqrt(res);
    out.residuals[i] = dist;
    if (dist <= threshold) {
      out.mask[i] = true;
      ++out.count;
      out.total_inlier_residual += dist;
    }
  }
  return out;
}

}  // namespace detail

// Inlier test under the per-correspondence RS fundamental of `state`:
// sqrt(Sampson) <= threshold. Degenerate denominators count as outliers.
inline InlierStats count_inliers(const NominalState& state,
                                 const std::vector<Correspondence>& corrs,
                                 const CameraIntrinsics& intr, double threshold) {
  if (!(threshold > 0)) throw ConfigParseError("inlier threshold must be positive");
  return detail::count_inliers_prepared(state, RsSampsonEvaluator::prepare(corrs, intr), intr,
                                        threshold);
}

namespace detail {

inline bool better_than(const InlierStats& a, const InlierStats& b) {
  if (a.count != b.count) return a.count > b.count;
  return a.total_inlier_residual < b.total_inlier_residual;
}

inline void fill_result(EstimationResult* out, const NominalState& state,
                        const InlierStats& stats, size_t n) {
  out->state = state;
  out->inlier_mask = stats.mask;
  out->per_point_residual = stats.residuals;
  out->inlier_count = stats.count;
  out->inlier_ratio = static_cast<double>(stats.count) / static_cast<double>(n);
}

inline int ransac_required_iterations(double confidence, double inlier_ratio, int sample_size) {
  if (inlier_ratio <= 0) return std::numeric_limits<int>::max();
  if (inlier_ratio >= 1) return 1;
  const double p_good = std::pow(inlier_ratio, sample_size);
  if (p_good <= 0) return std::numeric_limits<int>::max();
  const double denom = std::log1p(-std::min(p_good, 1.0 - 1e-16));
  return static_cast<int>(std::ceil(std::log(1.0 - confidence) / denom));
}

}  // namespace detail

// Joint estimation of relative pose and per-frame instantaneous velocities:
// one conventional initialization on the full set, then a seeded RANSAC loop
// of 20-point samples each refined by error-state LM (from zero error around
// the initialization), scored by inlier count over the full set. Ties go to
// the lower summed inlier residual. The raw initialization with zero
// velocities is always scored first, so the result can never fall below it.
inline EstimationResult mrsvo_estimate(const std::vector<Correspondence>& corrs,
                                       const CameraIntrinsics& intr, const RansacConfig& cfg = {},
                                       const LmConfig& lm = {}) {
  cfg.validate();
  intr.validate();
  if (static_cast<int>(corrs.size()) < cfg.sample_size) {
    throw TooFewPoints("mrsvo_estimate needs at least sample_size correspondences");
  }

  Initialization init;
  try {
    init = estimate_initial_pose(corrs, intr);
  } catch (const Error& e) {
    throw InitializationFailed(std::string("initialization failed: ") + e.what());
  }

  NominalState hypothesis0;
  hypothesis0.q_gs = init.pose.q;
  hypothesis0.t_gs = init.pose.t;

  const auto prepared = RsSampsonEvaluator::prepare(corrs, intr);
  EstimationResult out;
  out.low_parallax = init.low_parallax;
  InlierStats best =
      detail::count_inliers_prepared(hypothesis0, prepared, intr, cfg.inlier_threshold);
  NominalState best_state = hypothesis0;
  int best_iteration = -1;

  Rng rng(cfg.rng_seed);
  bool any_lm_converged = false;
  for (int k = 0; k < cfg.iterations; ++k) {
    const std::vector<int> idx =
        rng.sample_without_replacement(static_cast<int>(corrs.size()), cfg.sample_size);
    std::vector<Correspondence> sample;
    sample.reserve(idx.size());
    for (int i : idx) sample.push_back(corrs[i]);

    NominalState refined;
    try {
      const RefineResult res = lm_refine(hypothesis0, sample, intr, lm);
      out.lm_iterations += res.iterations;
      refined = res.state;
      any_lm_converged = true;
    } catch (const Error&) {
      continue;  // degenerate hypothesis; the draw stays consumed
    }

    const InlierStats stats =
        detail::count_inliers_prepared(refined, prepared, intr, cfg.inlier_threshold);
    if (detail::better_than(stats, best)) {
      best = stats;
      best_state = refined;
      best_iteration = k;
    }
    if (cfg.confidence_exit) {
      const double ratio = static_cast<double>(best.count) / static_cast<double>(corrs.size());
      if (k + 1 >= detail::ransac_required_iterations(cfg.confidence, ratio, cfg.sample_size)) break;
    }
  }

  if (!any_lm_converged && best.count == 0) throw AllHypothesesDegenerate();

  detail::fill_result(&out, best_state, best, corrs.size());
  out.best_iteration = best_iteration;
  return out;
}

namespace detail {

inline InlierStats count_gs_inliers(const Mat3& e, const std::vector<Correspondence>& corrs,
                                    const Mat3& k_inv, double threshold) {
  const Mat3 f = k_inv.transpose() * e * k_inv;
  InlierStats out;
  out.mask.resize(corrs.size(), false);
  out.residuals.resize(corrs.size(), kDegenerateResidual);
  for (size_t i = 0; i < corrs.size(); ++i) {
    double res = 0;
    if (!sampson_residual_checked(f, corrs[i], &res)) continue;
    const double dist = std::sqrt(res);
    out.residuals[i] = dist;
    if (dist <= threshold) {
      out.mask[i] = true;
      ++out.count;
      out.total_inlier_residual += dist;
    }
  }
  return out;
}

inline EstimationResult finish_mvo(const EssentialMatrix& e, const InlierStats& stats,
                                   const std::vector<Correspondence>& corrs,
                                   const CameraIntrinsics& intr) {
  // Cheirality over the supporting inliers; fall back to the full set when
  // the inlier set is too thin to decide.
  std::vector<Correspondence> support;
  for (size_t i = 0; i < corrs.size(); ++i) {
    if (stats.mask[i]) support.push_back(corrs[i]);
  }
  Initialization init;
  try {
    init = decompose_essential(e, support.size() >= 5 ? support : corrs, intr);
  } catch (const Error&) {
    init = decompose_essential(e, corrs, intr);
  }
  EstimationResult out;
  NominalState state;
  state.q_gs = init.pose.q;
  state.t_gs = init.pose.t;
  out.low_parallax = init.low_parallax;
  fill_result(&out, state, stats, corrs.size());
  return out;
}

}  // namespace detail

// Conventional baseline: normalized 8-point on the full set, no sampling.
inline EstimationResult mvo_plain_estimate(const std::vector<Correspondence>& corrs,
                                           const CameraIntrinsics& intr,
                                           double inlier_threshold = 1.0) {
  intr.validate();
  const EssentialMatrix e = eight_point_essential(corrs, intr);
  const InlierStats stats =
      detail::count_gs_inliers(e.e, corrs, intr.inverse_matrix(), inlier_threshold);
  EstimationResult out = detail::finish_mvo(e, stats, corrs, intr);
  out.best_iteration = -1;
  return out;
}

// Conventional baseline with RANSAC: 8-point minimal samples scored by GS
// Sampson inlier counting at the same threshold as the RS estimator. The
// full-set solution is hypothesis zero. Velocities are identically zero.
inline EstimationResult mvo_estimate(const std::vector<Correspondence>& corrs,
                                     const CameraIntrinsics& intr, const RansacConfig& cfg = {}) {
  intr.validate();
  if (corrs.size() < 8) throw TooFewPoints("mvo_estimate needs >= 8 correspondences");
  if (cfg.iterations < 1 || !(cfg.inlier_threshold > 0)) {
    throw ConfigParseError("invalid RANSAC configuration");
  }
  const Mat3 k_inv = intr.inverse_matrix();

  EssentialMatrix best_e;
  InlierStats best;
  bool have_model = false;
  try {
    best_e = eight_point_essential(corrs, intr);
    best = detail::count_gs_inliers(best_e.e, corrs, k_inv, cfg.inlier_threshold);
    have_model = true;
  } catch (const Error&) {
  }
  int best_iteration = -1;

  Rng rng(cfg.rng_seed);
  for (int k = 0; k < cfg.iterations; ++k) {
    const std::vector<int> idx = rng.sample_without_replacement(static_cast<int>(corrs.size()), 8);
    std::vector<Correspondence> sample;
    sample.reserve(8);
    for (int i : idx) sample.push_back(corrs[i]);

    EssentialMatrix e;
    try {
      e = eight_point_essential(sample, intr);
    } catch (const Error&) {
      continue;
    }
    const InlierStats stats = detail::count_gs_inliers(e.e, corrs, k_inv, cfg.inlier_threshold);
    if (!have_model || detail::better_than(stats, best)) {
      best = stats;
      best_e = e;
      best_iteration = k;
      have_model = true;
    }
    if (cfg.confidence_exit) {
      const double ratio = static_cast<double>(best.count) / static_cast<double>(corrs.size());
      if (k + 1 >= detail::ransac_required_iterations(cfg.confidence, ratio, 8)) break;
    }
  }
  if (!have_model) throw AllHypothesesDegenerate();

  try {
    EstimationResult out = detail::finish_mvo(best_e, best, corrs, intr);
    out.best_iteration = best_iteration;
    return out;
  } catch (const Error& e) {
    throw AllHypothesesDegenerate(std::string("MVO decomposition failed: ") + e.what());
  }
}

// Ablation variant: the initialization refined by a single LM run on the full
// correspondence set, no sampling loop.
inline EstimationResult mrsvo_noransac_estimate(const std::vector<Correspondence>& corrs,
                                                const CameraIntrinsics& intr,
                                                double inlier_threshold = 1.0,
                                                const LmConfig& lm = {}) {
  intr.validate();
  Initialization init;
  try {
    init = estimate_initial_pose(corrs, intr);
  } catch (const Error& e) {
    throw InitializationFailed(std::string("initialization failed: ") + e.what());
  }
  NominalState state;
  state.q_gs = init.pose.q;
  state.t_gs = init.pose.t;

  const RefineResult res = lm_refine(state, corrs, intr, lm);
  EstimationResult out;
  detail::fill_result(&out, res.state, count_inliers(res.state, corrs, intr, inlier_threshold),
                      corrs.size());
  out.lm_iterations = res.iterations;
  out.low_parallax = init.low_parallax;
  return out;
}

}  // namespace rsvo
