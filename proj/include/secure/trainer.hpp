#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "secure/adversary.hpp"
#include "secure/data.hpp"
#include "secure/losses.hpp"
#include "secure/model.hpp"

namespace secure {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 10;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 10.0;  // global L2 norm guard
  PgdConfig pgd;
  LossWeights weights;
  std::size_t threads = 0;  // 0: default_thread_count()

  void validate() const;
};

struct RunLogRow {
  std::size_t epoch = 0, step = 0;
  LossBreakdown losses;
  double grad_norm = 0.0;
};

struct EpochSnapshot {
  std::size_t epoch = 0;
  LossBreakdown mean_losses;
};

struct RunLog {
  std::vector<RunLogRow> rows;
  std::vector<EpochSnapshot> epochs;

  void write_step_csv(const std::filesystem::path& p) const;
  void write_epoch_csv(const std::filesystem::path& p) const;
};

struct TrainResult {
  ModelParams params;
  RunLog log;
};

/// Adam with bias correction. State is keyed by parameter order; call step()
/// after a backward pass has populated the gradients.
class AdamOptimizer {
 public:
  AdamOptimizer(const TrainConfig& cfg, ModelParams& params);
  void step(ModelParams& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Single-tensor Adam update, exposed for verification against hand-stepped
/// traces. Mutates value/moment buffers in place; t is the 1-based step.
void adam_update(std::vector<double>& value, const std::vector<double>& grad,
                 std::vector<double>& m, std::vector<double>& v,
                 std::size_t t, double lr, double beta1, double beta2,
                 double eps);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_gradients(ModelParams& params, double max_norm);

/// Minimizes the uncertainty-weighted task objective over seeded shuffled
/// mini-batches, starting from a fresh seed-derived initialization.
TrainResult train_baseline(const Dataset& ds, const ModelConfig& model_cfg,
                           const TrainConfig& cfg);

/// Same loop, continuing from the given parameters (used by reduction tests
/// and the ablation baseline row).
TrainResult train_baseline_from(const ModelParams& start, const Dataset& ds,
                                const TrainConfig& cfg);

/// SECURE fine-tuning: freezes an immutable copy of `baseline` as the
/// reference, then optimizes the total objective with a PGD inner
/// maximization per batch. With every robustness term disabled this is
/// bit-identical to continuing baseline training.
TrainResult secure_finetune(const ModelParams& baseline, const Dataset& ds,
                            const TrainConfig& cfg);

}  // namespace secure
