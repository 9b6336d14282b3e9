#include "secure/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "secure/util.hpp"

namespace secure {

void LossWeights::validate() const {
  for (double l : {lambda_c_out, lambda_s_out, lambda_c_feat, lambda_s_feat}) {
    if (l < 0.0)
      throw ConfigError("loss weights: lambda coefficients must be >= 0");
  }
}

namespace {

Tensor clamp_probs(const Tensor& p) {
  return clamp(p, kProbClamp, 1.0 - kProbClamp);
}

Tensor ones_like(const Tensor& t) {
  return Tensor::leaf(t.shape(), std::vector<double>(t.numel(), 1.0));
}

}  // namespace

Tensor anticipation_loss(const std::vector<PredictionTrace>& traces,
                         const std::vector<VideoLabel>& labels) {
  if (traces.empty()) {
    throw std::invalid_argument("anticipation_loss: empty batch");
  }
  if (traces.size() != labels.size()) {
    throw std::invalid_argument("anticipation_loss: batch size mismatch");
  }
  std::vector<Tensor> terms;
  terms.reserve(traces.size());
  for (std::size_t v = 0; v < traces.size(); ++v) {
    const Tensor p = clamp_probs(traces[v].p);
    const std::size_t T = p.numel();
    const VideoLabel& label = labels[v];
    if (label.l_v == 1) {
      if (label.tau < 1 || label.tau > T) {
        throw std::invalid_argument(
            "anticipation_loss: tau out of range for video " +
            std::to_string(v));
      }
      std::vector<double> w(T);
      for (std::size_t t = 1; t <= T; ++t) {
        const double margin =
            std::max((static_cast<double>(label.tau) - static_cast<double>(t)) /
                         static_cast<double>(label.fps),
                     0.0);
        w[t - 1] = std::exp(-0.5 * margin);
      }
      const Tensor weights = Tensor::leaf({T}, std::move(w));
      terms.push_back(scale(sum(mul(weights, log(p))), -1.0));
    } else {
      terms.push_back(scale(sum(log(sub(ones_like(p), p))), -1.0));
    }
  }
  Tensor acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return scale(acc, 1.0 / static_cast<double>(terms.size()));
}

Tensor enhancement_loss(const std::vector<Tensor>& p_e,
                        const std::vector<VideoLabel>& labels) {
  if (p_e.empty()) throw std::invalid_argument("enhancement_loss: empty batch");
  if (p_e.size() != labels.size()) {
    throw std::invalid_argument("enhancement_loss: batch size mismatch");
  }
  std::vector<Tensor> terms;
  terms.reserve(p_e.size());
  for (std::size_t v = 0; v < p_e.size(); ++v) {
    const Tensor p = clamp_probs(p_e[v]);
    if (labels[v].l_v == 1) {
      terms.push_back(scale(log(p), -1.0));
    } else {
      terms.push_back(scale(log(sub(ones_like(p), p)), -1.0));
    }
  }
  Tensor acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return scale(acc, 1.0 / static_cast<double>(terms.size()));
}

Tensor task_loss(const Tensor& l_a, const Tensor& l_e, const Tensor& rho1,
                 const Tensor& rho2, double mu1, double mu2) {
  for (const Tensor* rho : {&rho1, &rho2}) {
    if (rho->numel() != 1 || !(rho->values()[0] > 0.0)) {
      throw std::invalid_argument("task_loss: rho must be a positive scalar");
    }
  }
  // 1/rho^2 as exp(-2 log rho), so the uncertainty weights stay on the graph.
  const Tensor inv_sq1 = exp(scale(log(rho1), -2.0));
  const Tensor inv_sq2 = exp(scale(log(rho2), -2.0));
  const Tensor weighted = add(scale(mul(inv_sq1, l_a), 0.5 * mu1),
                              scale(mul(inv_sq2, l_e), 0.5 * mu2));
  return add(weighted, add(log(rho1), log(rho2)));
}

namespace {

Tensor mse(const char* name, const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw std::invalid_argument(std::string(name) + ": length mismatch " +
                                std::to_string(a.numel()) + " vs " +
                                std::to_string(b.numel()));
  }
  return mean(square(sub(a, b)));
}

}  // namespace

Tensor d_out(const Tensor& p_a, const Tensor& p_b) {
  return mse("d_out", p_a, p_b);
}

Tensor d_feat(const Tensor& v_a, const Tensor& v_b) {
  return mse("d_feat", v_a, v_b);
}

namespace {

Tensor batch_mean(std::vector<Tensor> terms) {
  Tensor acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return scale(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

RobustnessLosses robustness_losses(
    const ModelParams& theta, const ModelParams& theta_star,
    const std::vector<FeatureSequence>& clean,
    const std::vector<std::vector<double>>& obj_deltas,
    const std::vector<std::vector<double>>& ctx_deltas) {
  if (theta.d != theta_star.d || theta.H != theta_star.H ||
      theta.heads != theta_star.heads) {
    throw std::invalid_argument(
        "robustness_losses: model and reference dimensions differ");
  }
  if (clean.empty()) {
    throw std::invalid_argument("robustness_losses: empty batch");
  }
  if (clean.size() != obj_deltas.size() || clean.size() != ctx_deltas.size()) {
    throw std::invalid_argument("robustness_losses: batch size mismatch");
  }

  std::vector<Tensor> cps, spd, clm, sld;
  for (std::size_t v = 0; v < clean.size(); ++v) {
    const FeatureSequence& x = clean[v];
    const PredictionTrace trace = forward(x, theta);

    const PredictionTrace ref = forward(x, theta_star);
    // Reference outputs are detached values: no gradient reaches theta_star.
    cps.push_back(d_out(trace.p, ref.p.detached()));
    clm.push_back(d_feat(trace.latent, ref.latent.detached()));

    std::vector<double> obj_pert = x.obj;
    std::vector<double> ctx_pert = x.ctx;
    if (obj_deltas[v].size() != obj_pert.size() ||
        ctx_deltas[v].size() != ctx_pert.size()) {
      throw std::invalid_argument(
          "robustness_losses: perturbation shape mismatch");
    }
    for (std::size_t i = 0; i < obj_pert.size(); ++i)
      obj_pert[i] += obj_deltas[v][i];
    for (std::size_t i = 0; i < ctx_pert.size(); ++i)
      ctx_pert[i] += ctx_deltas[v][i];
    FeatureSequence perturbed = x;
    perturbed.obj = std::move(obj_pert);
    perturbed.ctx = std::move(ctx_pert);
    const PredictionTrace pert = forward(perturbed, theta);
    spd.push_back(d_out(trace.p, pert.p));
    sld.push_back(d_feat(trace.latent, pert.latent));
  }

  RobustnessLosses out;
  out.cps = batch_mean(std::move(cps));
  out.spd = batch_mean(std::move(spd));
  out.clm = batch_mean(std::move(clm));
  out.sld = batch_mean(std::move(sld));
  return out;
}

Tensor total_loss(const Tensor& l_task, const RobustnessLosses& robust,
                  const LossWeights& weights) {
  weights.validate();
  Tensor total = l_task;
  if (weights.cps_active() && robust.cps.defined())
    total = add(total, scale(robust.cps, weights.lambda_c_out));
  if (weights.spd_active() && robust.spd.defined())
    total = add(total, scale(robust.spd, weights.lambda_s_out));
  if (weights.clm_active() && robust.clm.defined())
    total = add(total, scale(robust.clm, weights.lambda_c_feat));
  if (weights.sld_active() && robust.sld.defined())
    total = add(total, scale(robust.sld, weights.lambda_s_feat));
  return total;
}

}  // namespace secure
