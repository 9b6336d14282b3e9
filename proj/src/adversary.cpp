#include "secure/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "secure/parallel.hpp"
#include "secure/util.hpp"

namespace secure {

double vector_l2_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double Perturbation::norm() const {
  if (norm_kind == NormKind::L2) {
    double acc = 0.0;
    for (double x : obj_delta) acc += x * x;
    for (double x : ctx_delta) acc += x * x;
    return std::sqrt(acc);
  }
  double mx = 0.0;
  for (double x : obj_delta) mx = std::max(mx, std::fabs(x));
  for (double x : ctx_delta) mx = std::max(mx, std::fabs(x));
  return mx;
}

void PgdConfig::validate() const {
  if (epsilon < 0.0) throw ConfigError("pgd: epsilon must be >= 0");
  if (!(alpha > 0.0)) throw ConfigError("pgd: alpha must be > 0");
  if (iterations < 1) throw ConfigError("pgd: iterations must be >= 1");
}

void project(std::span<double> delta, double epsilon, NormKind kind) {
  if (epsilon < 0.0) throw ConfigError("project: epsilon must be >= 0");
  if (kind == NormKind::Linf) {
    for (double& x : delta) x = std::min(std::max(x, -epsilon), epsilon);
    return;
  }
  const double norm = vector_l2_norm(delta);
  if (norm > epsilon) {
    const double scale = epsilon / norm;
    for (double& x : delta) x *= scale;
  }
}

Perturbation project(Perturbation delta) {
  if (delta.norm_kind == NormKind::Linf) {
    project(delta.obj_delta, delta.epsilon, NormKind::Linf);
    project(delta.ctx_delta, delta.epsilon, NormKind::Linf);
    return delta;
  }
  // L2 over the concatenation of both blocks.
  double acc = 0.0;
  for (double x : delta.obj_delta) acc += x * x;
  for (double x : delta.ctx_delta) acc += x * x;
  const double norm = std::sqrt(acc);
  if (norm > delta.epsilon) {
    const double s = delta.epsilon / norm;
    for (double& x : delta.obj_delta) x *= s;
    for (double& x : delta.ctx_delta) x *= s;
  }
  return delta;
}

void pgd_step(std::span<double> delta, std::span<const double> grad,
              double alpha) {
  if (delta.size() != grad.size()) {
    throw std::invalid_argument("pgd_step: delta/gradient size mismatch " +
                                std::to_string(delta.size()) + " vs " +
                                std::to_string(grad.size()));
  }
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += alpha * grad[i];
}

PgdTrace pgd_maximize(const std::function<Tensor(const Tensor&)>& objective,
                      std::size_t dim, const PgdConfig& cfg,
                      const std::vector<double>& init, bool record_history) {
  cfg.validate();
  PgdTrace trace;
  trace.delta.assign(dim, 0.0);
  if (!init.empty()) {
    if (init.size() != dim)
      throw std::invalid_argument("pgd_maximize: init size mismatch");
    trace.delta = init;
    project(trace.delta, cfg.epsilon, cfg.norm_kind);
  }
  if (cfg.epsilon == 0.0) {
    // Degenerate ball: the only feasible point is zero.
    trace.delta.assign(dim, 0.0);
    return trace;
  }
  for (std::size_t p = 0; p < cfg.iterations; ++p) {
    Tensor delta_leaf = Tensor::leaf({dim}, trace.delta, true);
    Tensor value = objective(delta_leaf);
    if (value.numel() != 1) {
      throw std::invalid_argument("pgd_maximize: objective must be scalar");
    }
    if (record_history) trace.objective_history.push_back(value.scalar_value());
    backward(value);
    if (delta_leaf.grad().size() == dim) {
      pgd_step(trace.delta, delta_leaf.grad(), cfg.alpha);
    }
    project(trace.delta, cfg.epsilon, cfg.norm_kind);
  }
  if (record_history) {
    trace.objective_history.push_back(
        objective(Tensor::leaf({dim}, trace.delta)).scalar_value());
  }
  return trace;
}

namespace {

struct CleanAnchor {
  std::vector<double> p;
  std::vector<double> latent;
};

// Self-divergence of the perturbed pass from the recorded clean pass, the
// delta-dependent part of the robustness objective (the consistency terms
// do not depend on delta, so their gradient contribution is zero).
Tensor perturbed_divergence(const FeatureSequence& x, const ModelParams& theta,
                            const CleanAnchor& anchor, const Tensor& delta) {
  const std::size_t obj_len = x.T * x.n * x.d;
  const std::size_t ctx_len = x.T * x.d;
  const Tensor obj_delta =
      reshape(slice_range(delta, 0, obj_len), {x.T, x.n, x.d});
  const Tensor ctx_delta =
      reshape(slice_range(delta, obj_len, obj_len + ctx_len), {x.T, x.d});
  const Tensor obj = add(Tensor::leaf({x.T, x.n, x.d}, x.obj), obj_delta);
  const Tensor ctx = add(Tensor::leaf({x.T, x.d}, x.ctx), ctx_delta);
  const PredictionTrace pert = forward(obj, ctx, theta);
  const Tensor clean_p = Tensor::leaf({anchor.p.size()}, anchor.p);
  const Tensor clean_latent =
      Tensor::leaf({anchor.latent.size()}, anchor.latent);
  return add(d_out(clean_p, pert.p), d_feat(clean_latent, pert.latent));
}

Perturbation split_delta(const FeatureSequence& x, const PgdConfig& cfg,
                         const std::vector<double>& flat) {
  const std::size_t obj_len = x.T * x.n * x.d;
  Perturbation out;
  out.norm_kind = cfg.norm_kind;
  out.epsilon = cfg.epsilon;
  out.obj_delta.assign(flat.begin(),
                       flat.begin() + static_cast<std::ptrdiff_t>(obj_len));
  out.ctx_delta.assign(flat.begin() + static_cast<std::ptrdiff_t>(obj_len),
                       flat.end());
  return out;
}

}  // namespace

std::vector<Perturbation> find_worst_case(
    const std::vector<const FeatureSequence*>& batch, const ModelParams& theta,
    const PgdConfig& cfg, std::size_t threads) {
  cfg.validate();
  if (batch.empty()) return {};
  const FeatureSequence& first = *batch.front();
  const std::size_t dim = first.T * first.n * first.d + first.T * first.d;
  for (const FeatureSequence* x : batch) {
    if (x->T != first.T || x->n != first.n || x->d != first.d) {
      throw std::invalid_argument(
          "find_worst_case: batch sequences must share T/n/d");
    }
  }

  std::vector<Perturbation> result(batch.size());
  if (cfg.epsilon == 0.0) {
    for (std::size_t v = 0; v < batch.size(); ++v) {
      result[v] = split_delta(*batch[v], cfg, std::vector<double>(dim, 0.0));
    }
    return result;
  }

  // The model is fixed during the inner loop: forward with a gradient-free
  // copy so backward only reaches delta.
  const ModelParams frozen = theta.clone(false);

  std::vector<CleanAnchor> anchors(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t v) {
    const PredictionTrace clean = forward(*batch[v], frozen);
    anchors[v] = {clean.p.values(), clean.latent.values()};
  });

  if (cfg.mode == PgdMode::per_sample) {
    parallel_for(batch.size(), threads, [&](std::size_t v) {
      const auto objective = [&, v](const Tensor& delta) {
        return perturbed_divergence(*batch[v], frozen, anchors[v], delta);
      };
      PgdTrace trace = pgd_maximize(objective, dim, cfg);
      result[v] = split_delta(*batch[v], cfg, trace.delta);
    });
    return result;
  }

  // shared_batch: one delta ascended with the batch-mean gradient.
  std::vector<double> delta(dim, 0.0);
  for (std::size_t p = 0; p < cfg.iterations; ++p) {
    std::vector<std::vector<double>> grads(batch.size());
    parallel_for(batch.size(), threads, [&](std::size_t v) {
      Tensor leaf = Tensor::leaf({dim}, delta, true);
      Tensor value = perturbed_divergence(*batch[v], frozen, anchors[v], leaf);
      backward(value);
      grads[v] = leaf.grad();
    });
    std::vector<double> mean_grad(dim, 0.0);
    for (const auto& g : grads) {
      for (std::size_t i = 0; i < dim; ++i) mean_grad[i] += g[i];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& g : mean_grad) g *= inv;
    pgd_step(delta, mean_grad, cfg.alpha);
    project(delta, cfg.epsilon, cfg.norm_kind);
  }
  for (std::size_t v = 0; v < batch.size(); ++v) {
    result[v] = split_delta(*batch[v], cfg, delta);
  }
  return result;
}

}  // namespace secure
