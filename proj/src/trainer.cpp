#include "secure/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "secure/parallel.hpp"
#include "secure/rng.hpp"
#include "secure/util.hpp"

namespace secure {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (grad_clip <= 0.0) throw ConfigError("train: grad_clip must be > 0");
  pgd.validate();
  weights.validate();
}

namespace {

std::string csv_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunLog::write_step_csv(const std::filesystem::path& p) const {
  std::ostringstream os;
  os << "epoch,step,L_a,L_e,L_task,L_cps,L_spd,L_clm,L_sld,L_total,"
        "grad_norm\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.step << ',' << csv_double(r.losses.L_a) << ','
       << csv_double(r.losses.L_e) << ',' << csv_double(r.losses.L_task) << ','
       << csv_double(r.losses.L_cps) << ',' << csv_double(r.losses.L_spd)
       << ',' << csv_double(r.losses.L_clm) << ',' << csv_double(r.losses.L_sld)
       << ',' << csv_double(r.losses.L_total) << ','
       << csv_double(r.grad_norm) << '\n';
  }
  write_file_atomic(p, os.str());
}

void RunLog::write_epoch_csv(const std::filesystem::path& p) const {
  std::ostringstream os;
  os << "epoch,L_a,L_e,L_task,L_cps,L_spd,L_clm,L_sld,L_total\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << csv_double(e.mean_losses.L_a) << ','
       << csv_double(e.mean_losses.L_e) << ','
       << csv_double(e.mean_losses.L_task) << ','
       << csv_double(e.mean_losses.L_cps) << ','
       << csv_double(e.mean_losses.L_spd) << ','
       << csv_double(e.mean_losses.L_clm) << ','
       << csv_double(e.mean_losses.L_sld) << ','
       << csv_double(e.mean_losses.L_total) << '\n';
  }
  write_file_atomic(p, os.str());
}

// --- Adam ------------------------------------------------------------------

void adam_update(std::vector<double>& value, const std::vector<double>& grad,
                 std::vector<double>& m, std::vector<double>& v,
                 std::size_t t, double lr, double beta1, double beta2,
                 double eps) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = i < grad.size() ? grad[i] : 0.0;
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

AdamOptimizer::AdamOptimizer(const TrainConfig& cfg, ModelParams& params)
    : lr_(cfg.learning_rate),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps) {
  for (auto& [name, t] : params.named_params()) {
    m_.emplace_back(t->numel(), 0.0);
    v_.emplace_back(t->numel(), 0.0);
  }
}

void AdamOptimizer::step(ModelParams& params) {
  ++t_;
  auto named = params.named_params();
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor* t = named[i].second;
    std::vector<double> value = t->values();
    adam_update(value, t->grad(), m_[i], v_[i], t_, lr_, beta1_, beta2_, eps_);
    t->set_values(value);
  }
  params.project_rho_floor();
}

double clip_gradients(ModelParams& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, t] : params.named_params()) {
    for (double g : t->grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, t] : params.named_params()) {
      auto& node = *t->node();
      for (double& g : node.grad) g *= scale;
    }
  }
  return norm;
}

// --- training loop -----------------------------------------------------

namespace {

struct BatchTraces {
  std::vector<PredictionTrace> clean;
  std::vector<Tensor> p_e;
  std::vector<VideoLabel> labels;
};

// The reference model's outputs are fixed during fine-tuning, so they are
// computed once per video up front.
struct ReferenceOutputs {
  std::vector<std::vector<double>> p;
  std::vector<std::vector<double>> latent;
};

LossBreakdown mean_breakdown(const std::vector<RunLogRow>& rows,
                             std::size_t from, std::size_t to) {
  LossBreakdown acc;
  const double inv = to > from ? 1.0 / static_cast<double>(to - from) : 0.0;
  for (std::size_t i = from; i < to; ++i) {
    const auto& l = rows[i].losses;
    acc.L_a += l.L_a * inv;
    acc.L_e += l.L_e * inv;
    acc.L_task += l.L_task * inv;
    acc.L_cps += l.L_cps * inv;
    acc.L_spd += l.L_spd * inv;
    acc.L_clm += l.L_clm * inv;
    acc.L_sld += l.L_sld * inv;
    acc.L_total += l.L_total * inv;
  }
  return acc;
}

TrainResult run_training(ModelParams params, const Dataset& ds,
                         const TrainConfig& cfg,
                         const ModelParams* reference) {
  cfg.validate();
  if (ds.size() == 0) throw ConfigError("train: dataset is empty");
  const std::size_t threads =
      cfg.threads == 0 ? default_thread_count() : cfg.threads;

  const bool uses_reference =
      reference && (cfg.weights.cps_active() || cfg.weights.clm_active());
  const bool uses_perturbation =
      reference && cfg.weights.perturbation_needed();

  ReferenceOutputs ref;
  if (uses_reference) {
    if (reference->d != params.d || reference->H != params.H ||
        reference->heads != params.heads) {
      throw ConfigError("train: reference model dimensions differ");
    }
    ref.p.resize(ds.size());
    ref.latent.resize(ds.size());
    parallel_for(ds.size(), threads, [&](std::size_t v) {
      const PredictionTrace t = forward(ds.features[v], *reference);
      ref.p[v] = t.p.values();
      ref.latent[v] = t.latent.values();
    });
  }

  AdamOptimizer adam(cfg, params);
  RunLog log;
  Rng shuffle_rng(child_seed(cfg.seed, "shuffle"));
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = shuffle_rng.permutation(ds.size());
    const std::size_t epoch_row_start = log.rows.size();
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t B = end - start;
      std::vector<std::size_t> batch_idx(order.begin() +
                                             static_cast<std::ptrdiff_t>(start),
                                         order.begin() +
                                             static_cast<std::ptrdiff_t>(end));

      // Clean forward passes (parallel graph construction; the shared
      // parameter leaves are only read).
      std::vector<PredictionTrace> clean(B);
      parallel_for(B, threads, [&](std::size_t i) {
        clean[i] = forward(ds.features[batch_idx[i]], params);
      });
      std::vector<VideoLabel> labels(B);
      std::vector<Tensor> p_e(B);
      for (std::size_t i = 0; i < B; ++i) {
        labels[i] = ds.labels[batch_idx[i]];
        p_e[i] = clean[i].p_e;
      }

      const Tensor l_a = anticipation_loss(clean, labels);
      const Tensor l_e = enhancement_loss(p_e, labels);
      const Tensor l_task =
          task_loss(l_a, l_e, params.rho1, params.rho2, params.mu1,
                    params.mu2);

      RobustnessLosses robust;
      if (uses_reference) {
        std::vector<Tensor> cps, clm;
        for (std::size_t i = 0; i < B; ++i) {
          const std::size_t v = batch_idx[i];
          if (cfg.weights.cps_active()) {
            cps.push_back(
                d_out(clean[i].p, Tensor::leaf({ref.p[v].size()}, ref.p[v])));
          }
          if (cfg.weights.clm_active()) {
            clm.push_back(d_feat(
                clean[i].latent,
                Tensor::leaf({ref.latent[v].size()}, ref.latent[v])));
          }
        }
        const double inv = 1.0 / static_cast<double>(B);
        if (!cps.empty()) {
          Tensor acc = cps[0];
          for (std::size_t i = 1; i < cps.size(); ++i) acc = add(acc, cps[i]);
          robust.cps = scale(acc, inv);
        }
        if (!clm.empty()) {
          Tensor acc = clm[0];
          for (std::size_t i = 1; i < clm.size(); ++i) acc = add(acc, clm[i]);
          robust.clm = scale(acc, inv);
        }
      }

      if (uses_perturbation) {
        std::vector<const FeatureSequence*> batch_ptrs(B);
        for (std::size_t i = 0; i < B; ++i)
          batch_ptrs[i] = &ds.features[batch_idx[i]];
        const std::vector<Perturbation> deltas =
            find_worst_case(batch_ptrs, params, cfg.pgd, threads);

        std::vector<PredictionTrace> perturbed(B);
        parallel_for(B, threads, [&](std::size_t i) {
          const FeatureSequence& x = *batch_ptrs[i];
          FeatureSequence shifted = x;
          for (std::size_t j = 0; j < shifted.obj.size(); ++j)
            shifted.obj[j] += deltas[i].obj_delta[j];
          for (std::size_t j = 0; j < shifted.ctx.size(); ++j)
            shifted.ctx[j] += deltas[i].ctx_delta[j];
          perturbed[i] = forward(shifted, params);
        });

        std::vector<Tensor> spd, sld;
        for (std::size_t i = 0; i < B; ++i) {
          spd.push_back(d_out(clean[i].p, perturbed[i].p));
          sld.push_back(d_feat(clean[i].latent, perturbed[i].latent));
        }
        const double inv = 1.0 / static_cast<double>(B);
        Tensor spd_acc = spd[0];
        Tensor sld_acc = sld[0];
        for (std::size_t i = 1; i < B; ++i) {
          spd_acc = add(spd_acc, spd[i]);
          sld_acc = add(sld_acc, sld[i]);
        }
        robust.spd = scale(spd_acc, inv);
        robust.sld = scale(sld_acc, inv);
      }

      const Tensor total =
          reference ? total_loss(l_task, robust, cfg.weights) : l_task;

      RunLogRow row;
      row.epoch = epoch;
      row.step = global_step;
      row.losses.L_a = l_a.scalar_value();
      row.losses.L_e = l_e.scalar_value();
      row.losses.L_task = l_task.scalar_value();
      row.losses.L_cps = robust.cps.defined() ? robust.cps.scalar_value() : 0.0;
      row.losses.L_spd = robust.spd.defined() ? robust.spd.scalar_value() : 0.0;
      row.losses.L_clm = robust.clm.defined() ? robust.clm.scalar_value() : 0.0;
      row.losses.L_sld = robust.sld.defined() ? robust.sld.scalar_value() : 0.0;
      row.losses.L_total = total.scalar_value();

      if (!std::isfinite(row.losses.L_total)) {
        throw DivergenceError(
            "training aborted: non-finite loss at epoch " +
            std::to_string(epoch) + " step " + std::to_string(global_step));
      }

      params.zero_grads();
      backward(total);
      row.grad_norm = clip_gradients(params, cfg.grad_clip);
      adam.step(params);
      log.rows.push_back(row);
      ++global_step;
    }
    EpochSnapshot snap;
    snap.epoch = epoch;
    snap.mean_losses = mean_breakdown(log.rows, epoch_row_start,
                                      log.rows.size());
    log.epochs.push_back(snap);
  }
  return {std::move(params), std::move(log)};
}

}  // namespace

TrainResult train_baseline(const Dataset& ds, const ModelConfig& model_cfg,
                           const TrainConfig& cfg) {
  ModelParams params = init_params(model_cfg, cfg.seed);
  return run_training(std::move(params), ds, cfg, nullptr);
}

TrainResult train_baseline_from(const ModelParams& start, const Dataset& ds,
                                const TrainConfig& cfg) {
  return run_training(start.clone(true), ds, cfg, nullptr);
}

TrainResult secure_finetune(const ModelParams& baseline, const Dataset& ds,
                            const TrainConfig& cfg) {
  const ModelParams reference = baseline.clone(false);  // frozen theta*
  const std::uint64_t reference_checksum = reference.value_checksum();
  TrainResult result =
      run_training(baseline.clone(true), ds, cfg, &reference);
  if (reference.value_checksum() != reference_checksum) {
    throw std::logic_error("secure_finetune: frozen reference was modified");
  }
  return result;
}

}  // namespace secure
