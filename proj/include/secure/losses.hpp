#pragma once

#include <vector>

#include "secure/data.hpp"
#include "secure/model.hpp"
#include "secure/tensor.hpp"

namespace secure {

/// Probabilities are clamped into [kProbClamp, 1-kProbClamp] before any log.
constexpr double kProbClamp = 1e-7;

/// Regularization coefficients for the four robustness terms plus the
/// ablation switches. A term contributes only when its flag is set and its
/// coefficient is positive; a disabled term is skipped entirely so its
/// gradient contribution is exactly zero.
struct LossWeights {
  double lambda_c_out = 50.0;   // prediction consistency vs reference
  double lambda_s_out = 50.0;   // prediction stability vs perturbation
  double lambda_c_feat = 0.01;  // latent consistency vs reference
  double lambda_s_feat = 0.01;  // latent stability vs perturbation
  bool enable_cps = true;
  bool enable_spd = true;
  bool enable_clm = true;
  bool enable_sld = true;

  void validate() const;
  bool cps_active() const { return enable_cps && lambda_c_out > 0.0; }
  bool spd_active() const { return enable_spd && lambda_s_out > 0.0; }
  bool clm_active() const { return enable_clm && lambda_c_feat > 0.0; }
  bool sld_active() const { return enable_sld && lambda_s_feat > 0.0; }
  bool any_active() const {
    return cps_active() || spd_active() || clm_active() || sld_active();
  }
  bool perturbation_needed() const { return spd_active() || sld_active(); }
};

struct LossBreakdown {
  double L_a = 0, L_e = 0, L_task = 0;
  double L_cps = 0, L_spd = 0, L_clm = 0, L_sld = 0;
  double L_total = 0;
};

/// Exponentially weighted cross-entropy of the frame probabilities: positive
/// frames are weighted by exp(-max(tau-t,0)/(2f)), so the penalty saturates
/// at 1 from the accident frame onwards.
Tensor anticipation_loss(const std::vector<PredictionTrace>& traces,
                         const std::vector<VideoLabel>& labels);

/// Binary cross-entropy of the auxiliary prediction, averaged over the batch.
Tensor enhancement_loss(const std::vector<Tensor>& p_e,
                        const std::vector<VideoLabel>& labels);

/// Homoscedastic uncertainty weighting:
/// mu1/(2 rho1^2) L_a + mu2/(2 rho2^2) L_e + log(rho1 rho2).
Tensor task_loss(const Tensor& l_a, const Tensor& l_e, const Tensor& rho1,
                 const Tensor& rho2, double mu1, double mu2);

/// Mean squared error between two equal-length vectors.
Tensor d_out(const Tensor& p_a, const Tensor& p_b);
Tensor d_feat(const Tensor& v_a, const Tensor& v_b);

struct RobustnessLosses {
  Tensor cps, spd, clm, sld;  // batch means; each may be undefined if skipped
};

/// Convenience evaluation of all four divergence terms from raw inputs:
/// runs the clean/reference/perturbed forward passes internally. The
/// reference never receives gradients. Gradient-carrying callers (the
/// trainer) assemble the same terms from shared traces instead.
RobustnessLosses robustness_losses(
    const ModelParams& theta, const ModelParams& theta_star,
    const std::vector<FeatureSequence>& clean,
    const std::vector<std::vector<double>>& obj_deltas,
    const std::vector<std::vector<double>>& ctx_deltas);

/// L_task plus the weighted, enabled robustness terms.
Tensor total_loss(const Tensor& l_task, const RobustnessLosses& robust,
                  const LossWeights& weights);

}  // namespace secure
