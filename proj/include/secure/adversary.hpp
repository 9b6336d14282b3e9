#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "secure/data.hpp"
#include "secure/losses.hpp"
#include "secure/model.hpp"
#include "secure/tensor.hpp"

namespace secure {

enum class NormKind { L2, Linf };
enum class PgdMode { per_sample, shared_batch };

/// Additive perturbation of one feature sequence, split to mirror the
/// object/context layout. The norm constraint applies to the concatenation.
struct Perturbation {
  std::vector<double> obj_delta;  // T*n*d
  std::vector<double> ctx_delta;  // T*d
  NormKind norm_kind = NormKind::L2;
  double epsilon = 0.0;

  double norm() const;
};

struct PgdConfig {
  double epsilon = 0.01;
  double alpha = 0.002;        // constant step size across iterations
  std::size_t iterations = 20;
  NormKind norm_kind = NormKind::L2;
  PgdMode mode = PgdMode::per_sample;

  void validate() const;
};

/// Euclidean-nearest point of the epsilon ball: L2 radially rescales when
/// outside, Linf clamps per coordinate. Points already inside are returned
/// unchanged (bit-for-bit); the projection is idempotent.
void project(std::span<double> delta, double epsilon, NormKind kind);
Perturbation project(Perturbation delta);

/// One gradient-ascent step, delta += alpha * grad (pre-projection).
void pgd_step(std::span<double> delta, std::span<const double> grad,
              double alpha);

double vector_l2_norm(std::span<const double> v);

struct PgdTrace {
  std::vector<double> delta;
  std::vector<double> objective_history;  // filled when record_history is set
};

/// Generic projected gradient ascent on a scalar objective of a flat
/// perturbation vector. Starts from `init` (zero by default; quadratic
/// objectives have zero gradient at the origin, so tests seed a nonzero
/// start). Alternates pgd_step with projection for cfg.iterations rounds.
PgdTrace pgd_maximize(const std::function<Tensor(const Tensor&)>& objective,
                      std::size_t dim, const PgdConfig& cfg,
                      const std::vector<double>& init = {},
                      bool record_history = false);

/// Worst-case input perturbations for a batch: maximizes the perturbation-
/// dependent part of the robustness objective (output + latent
/// self-divergence from the clean pass) with the model fixed. delta starts
/// at zero and the final iterate is projected, so the result is
/// deterministic in the inputs. In shared_batch mode a single delta is
/// ascended with the batch-mean gradient and every returned entry aliases
/// its value.
std::vector<Perturbation> find_worst_case(
    const std::vector<const FeatureSequence*>& batch, const ModelParams& theta,
    const PgdConfig& cfg, std::size_t threads = 1);

}  // namespace secure
