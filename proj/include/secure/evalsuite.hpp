#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "secure/adversary.hpp"
#include "secure/data.hpp"
#include "secure/losses.hpp"
#include "secure/model.hpp"
#include "secure/trainer.hpp"

namespace secure {

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct MetricResult {
  double ap = 0.0;
  double mtta_seconds = 0.0;
  std::vector<PrPoint> pr;  // threshold sweep, descending thresholds
};

/// Video-level metrics over frame-probability trajectories.
///
/// Thresholds sweep the sorted set of all observed frame probabilities,
/// descending. For AP, a positive counts as a true positive at threshold q
/// when some frame at or before tau reaches p_t >= q; a negative counts as
/// a false positive when any frame does. Precision/recall points (prepended
/// with recall 0 / precision 1) are integrated by trapezoid in sweep order.
/// For mTTA, the first frame strictly exceeding the threshold (paper
/// wording: "exceeding") at or before tau defines the alarm; TTA(q) averages
/// (tau - t*)/f over alarmed positives and mTTA averages TTA(q) over the
/// thresholds with at least one alarmed positive.
MetricResult evaluate_predictions(const std::vector<std::vector<double>>& probs,
                                  const std::vector<VideoLabel>& labels);

double average_precision(const std::vector<std::vector<double>>& probs,
                         const std::vector<VideoLabel>& labels);
double mtta(const std::vector<std::vector<double>>& probs,
            const std::vector<VideoLabel>& labels);

/// Clean forward pass over the whole dataset (no perturbation).
std::vector<std::vector<double>> predict_dataset(const ModelParams& params,
                                                 const Dataset& ds,
                                                 std::size_t threads = 0);
MetricResult evaluate_model(const ModelParams& params, const Dataset& ds,
                            std::size_t threads = 0);

struct BenchRow {
  std::string model;
  std::string condition;  // Clean | IP(sigma) | LP(sigma)
  double ap_mean = 0.0, ap_std = 0.0;
  double mtta_mean = 0.0, mtta_std = 0.0;
  std::size_t seed_count = 0;
};

/// Gaussian noise of std sigma added to every input feature value; one
/// evaluation per seed, aggregated mean +- std. sigma = 0 reproduces the
/// clean metrics bit-for-bit.
BenchRow input_perturb_eval(const ModelParams& params, const Dataset& ds,
                            double sigma, const std::vector<std::uint64_t>& seeds,
                            std::size_t threads = 0);

/// Gaussian noise of std sigma added to every second-layer GRU parameter
/// (evaluated on a scratch copy; the caller's parameters are untouched).
BenchRow latent_perturb_eval(const ModelParams& params, const Dataset& ds,
                             double sigma,
                             const std::vector<std::uint64_t>& seeds,
                             std::size_t threads = 0);

struct CertificationResult {
  double gamma1_hat = 0.0;  // max d_out(f(x;theta), f*(x))
  double gamma2_hat = 0.0;  // max self d_out under probes within the ball
  double beta1_hat = 0.0;   // max d_feat(h(x;theta), h*(x))
  double beta2_hat = 0.0;   // max self d_feat under probes
  double epsilon = 0.0;
  std::size_t random_probes = 0;
  std::size_t pgd_iterations = 0;
  std::size_t videos = 0;
};

/// Empirical SECURE certification: the reported values are maxima over the
/// test set of the four divergences, with the stability terms searched by
/// PGD plus `probe_count` random perturbations of norm epsilon per video.
/// They are lower bounds on the true suprema, not formal certificates.
CertificationResult certify_secure(const ModelParams& theta,
                                   const ModelParams& theta_star,
                                   const Dataset& ds, double epsilon,
                                   const PgdConfig& pgd,
                                   std::size_t probe_count,
                                   std::uint64_t probe_seed,
                                   std::size_t threads = 0);

struct AblationRow {
  std::string enabled_terms;  // e.g. "task+cps+spd"
  double ap = 0.0;
  double mtta = 0.0;
};

/// Table-3-style cumulative sweep: task only, then +cps, +spd, +clm, +sld.
/// Each configuration fine-tunes from `baseline` and is evaluated under
/// input perturbation of std ip_sigma.
std::vector<AblationRow> ablation_run(const ModelParams& baseline,
                                      const Dataset& train,
                                      const Dataset& test,
                                      const TrainConfig& base_cfg,
                                      double ip_sigma,
                                      const std::vector<std::uint64_t>& seeds);

}  // namespace secure
