#include "secure/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "secure/parallel.hpp"
#include "secure/rng.hpp"
#include "secure/util.hpp"

namespace secure {

namespace {

void check_inputs(const std::vector<std::vector<double>>& probs,
                  const std::vector<VideoLabel>& labels) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw std::invalid_argument("metrics: prediction/label count mismatch");
  }
  bool has_pos = false, has_neg = false;
  for (const auto& l : labels) (l.l_v == 1 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) {
    throw std::invalid_argument(
        "metrics: need at least one positive and one negative video");
  }
}

std::vector<double> observed_thresholds_desc(
    const std::vector<std::vector<double>>& probs) {
  std::set<double> values;
  for (const auto& p : probs) values.insert(p.begin(), p.end());
  return {values.rbegin(), values.rend()};
}

}  // namespace

MetricResult evaluate_predictions(const std::vector<std::vector<double>>& probs,
                                  const std::vector<VideoLabel>& labels) {
  check_inputs(probs, labels);
  const std::vector<double> thresholds = observed_thresholds_desc(probs);

  // Per-video alarm scores: positives may only alarm at or before tau.
  std::vector<double> alarm_score(probs.size());
  for (std::size_t v = 0; v < probs.size(); ++v) {
    const auto& p = probs[v];
    const std::size_t limit =
        labels[v].l_v == 1 ? std::min<std::size_t>(labels[v].tau, p.size())
                           : p.size();
    double mx = -1.0;
    for (std::size_t t = 0; t < limit; ++t) mx = std::max(mx, p[t]);
    alarm_score[v] = mx;
  }

  MetricResult result;
  result.pr.reserve(thresholds.size());
  double tta_sum = 0.0;
  std::size_t tta_thresholds = 0;

  for (const double q : thresholds) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
      const bool alarmed = alarm_score[v] >= q;
      if (labels[v].l_v == 1) {
        (alarmed ? tp : fn) += 1;
      } else if (alarmed) {
        fp += 1;
      }
    }
    PrPoint point;
    point.threshold = q;
    point.precision = (tp + fp) == 0
                          ? 1.0
                          : static_cast<double>(tp) /
                                static_cast<double>(tp + fp);
    point.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    result.pr.push_back(point);

    // Lead time: first frame strictly exceeding q at or before tau.
    double video_tta_sum = 0.0;
    std::size_t alarmed_positives = 0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
      if (labels[v].l_v != 1) continue;
      const auto& p = probs[v];
      const std::size_t limit = std::min<std::size_t>(labels[v].tau, p.size());
      for (std::size_t t = 0; t < limit; ++t) {
        if (p[t] > q) {
          video_tta_sum += (static_cast<double>(labels[v].tau) -
                            static_cast<double>(t + 1)) /
                           static_cast<double>(labels[v].fps);
          ++alarmed_positives;
          break;
        }
      }
    }
    if (alarmed_positives > 0) {
      tta_sum += video_tta_sum / static_cast<double>(alarmed_positives);
      ++tta_thresholds;
    }
  }

  // Trapezoid over the sweep, anchored at (recall 0, precision 1).
  double ap = 0.0;
  double prev_recall = 0.0, prev_precision = 1.0;
  for (const auto& point : result.pr) {
    ap += (point.recall - prev_recall) * (point.precision + prev_precision) *
          0.5;
    prev_recall = point.recall;
    prev_precision = point.precision;
  }
  result.ap = ap;
  result.mtta_seconds =
      tta_thresholds > 0 ? tta_sum / static_cast<double>(tta_thresholds) : 0.0;
  return result;
}

double average_precision(const std::vector<std::vector<double>>& probs,
                         const std::vector<VideoLabel>& labels) {
  return evaluate_predictions(probs, labels).ap;
}

double mtta(const std::vector<std::vector<double>>& probs,
            const std::vector<VideoLabel>& labels) {
  return evaluate_predictions(probs, labels).mtta_seconds;
}

std::vector<std::vector<double>> predict_dataset(const ModelParams& params,
                                                 const Dataset& ds,
                                                 std::size_t threads) {
  if (threads == 0) threads = default_thread_count();
  const ModelParams frozen = params.clone(false);
  std::vector<std::vector<double>> probs(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t v) {
    probs[v] = forward(ds.features[v], frozen).p.values();
  });
  return probs;
}

MetricResult evaluate_model(const ModelParams& params, const Dataset& ds,
                            std::size_t threads) {
  return evaluate_predictions(predict_dataset(params, ds, threads), ds.labels);
}

namespace {

struct Aggregate {
  double mean = 0.0, stddev = 0.0;
};

Aggregate aggregate(const std::vector<double>& xs) {
  Aggregate out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - out.mean) * (x - out.mean);
  out.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

BenchRow finalize_row(std::string model, std::string condition,
                      const std::vector<double>& aps,
                      const std::vector<double>& mttas) {
  BenchRow row;
  row.model = std::move(model);
  row.condition = std::move(condition);
  const Aggregate ap = aggregate(aps);
  const Aggregate mt = aggregate(mttas);
  row.ap_mean = ap.mean;
  row.ap_std = ap.stddev;
  row.mtta_mean = mt.mean;
  row.mtta_std = mt.stddev;
  row.seed_count = aps.size();
  return row;
}

std::string sigma_label(const char* kind, double sigma) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s(%g)", kind, sigma);
  return buf;
}

}  // namespace

BenchRow input_perturb_eval(const ModelParams& params, const Dataset& ds,
                            double sigma,
                            const std::vector<std::uint64_t>& seeds,
                            std::size_t threads) {
  if (sigma < 0.0) throw ConfigError("input_perturb_eval: sigma must be >= 0");
  if (threads == 0) threads = default_thread_count();
  const ModelParams frozen = params.clone(false);

  std::vector<double> aps, mttas;
  for (const std::uint64_t seed : seeds) {
    std::vector<std::vector<double>> probs(ds.size());
    parallel_for(ds.size(), threads, [&](std::size_t v) {
      if (sigma == 0.0) {
        probs[v] = forward(ds.features[v], frozen).p.values();
        return;
      }
      Rng rng(child_seed(child_seed(seed, "input-perturb"), v));
      FeatureSequence noisy = ds.features[v];
      for (double& x : noisy.obj) x += rng.normal(0.0, sigma);
      for (double& x : noisy.ctx) x += rng.normal(0.0, sigma);
      probs[v] = forward(noisy, frozen).p.values();
    });
    const MetricResult m = evaluate_predictions(probs, ds.labels);
    aps.push_back(m.ap);
    mttas.push_back(m.mtta_seconds);
  }
  return finalize_row("", sigma_label("IP", sigma), aps, mttas);
}

BenchRow latent_perturb_eval(const ModelParams& params, const Dataset& ds,
                             double sigma,
                             const std::vector<std::uint64_t>& seeds,
                             std::size_t threads) {
  if (sigma < 0.0) throw ConfigError("latent_perturb_eval: sigma must be >= 0");
  if (threads == 0) threads = default_thread_count();

  std::vector<double> aps, mttas;
  for (const std::uint64_t seed : seeds) {
    // Perturb every second-layer GRU parameter on a scratch copy.
    ModelParams noisy = params.clone(false);
    if (sigma != 0.0) {
      Rng rng(child_seed(seed, "latent-perturb"));
      for (Tensor* t : {&noisy.gru2.wz, &noisy.gru2.uz, &noisy.gru2.bz,
                        &noisy.gru2.wr, &noisy.gru2.ur, &noisy.gru2.br,
                        &noisy.gru2.wh, &noisy.gru2.uh, &noisy.gru2.bh}) {
        std::vector<double> values = t->values();
        for (double& x : values) x += rng.normal(0.0, sigma);
        t->set_values(values);
      }
    }
    const MetricResult m = evaluate_model(noisy, ds, threads);
    aps.push_back(m.ap);
    mttas.push_back(m.mtta_seconds);
  }
  return finalize_row("", sigma_label("LP", sigma), aps, mttas);
}

CertificationResult certify_secure(const ModelParams& theta,
                                   const ModelParams& theta_star,
                                   const Dataset& ds, double epsilon,
                                   const PgdConfig& pgd,
                                   std::size_t probe_count,
                                   std::uint64_t probe_seed,
                                   std::size_t threads) {
  if (theta.d != theta_star.d || theta.H != theta_star.H ||
      theta.heads != theta_star.heads) {
    throw ConfigError("certify_secure: model and reference dimensions differ");
  }
  if (epsilon < 0.0) throw ConfigError("certify_secure: epsilon must be >= 0");
  if (threads == 0) threads = default_thread_count();

  PgdConfig probe_cfg = pgd;
  probe_cfg.epsilon = epsilon;
  probe_cfg.mode = PgdMode::per_sample;

  const ModelParams model = theta.clone(false);
  const ModelParams reference = theta_star.clone(false);

  struct VideoResult {
    double cps = 0.0, clm = 0.0, spd = 0.0, sld = 0.0;
  };
  std::vector<VideoResult> per_video(ds.size());

  parallel_for(ds.size(), threads, [&](std::size_t v) {
    const FeatureSequence& x = ds.features[v];
    const PredictionTrace clean = forward(x, model);
    const PredictionTrace ref = forward(x, reference);
    const std::vector<double>& clean_p = clean.p.values();
    const std::vector<double>& clean_h = clean.latent.values();

    VideoResult result;
    result.cps =
        d_out(Tensor::leaf({clean_p.size()}, clean_p), ref.p.detached())
            .scalar_value();
    result.clm = d_feat(Tensor::leaf({clean_h.size()}, clean_h),
                        ref.latent.detached())
                     .scalar_value();

    if (epsilon > 0.0) {
      const auto evaluate_delta = [&](const std::vector<double>& obj_delta,
                                      const std::vector<double>& ctx_delta) {
        FeatureSequence shifted = x;
        for (std::size_t i = 0; i < shifted.obj.size(); ++i)
          shifted.obj[i] += obj_delta[i];
        for (std::size_t i = 0; i < shifted.ctx.size(); ++i)
          shifted.ctx[i] += ctx_delta[i];
        const PredictionTrace pert = forward(shifted, model);
        const double spd =
            d_out(Tensor::leaf({clean_p.size()}, clean_p), pert.p)
                .scalar_value();
        const double sld =
            d_feat(Tensor::leaf({clean_h.size()}, clean_h), pert.latent)
                .scalar_value();
        result.spd = std::max(result.spd, spd);
        result.sld = std::max(result.sld, sld);
      };

      const std::vector<Perturbation> pgd_delta =
          find_worst_case({&x}, model, probe_cfg, 1);
      evaluate_delta(pgd_delta[0].obj_delta, pgd_delta[0].ctx_delta);

      Rng rng(child_seed(child_seed(probe_seed, "certify-probes"), v));
      const std::size_t obj_len = x.obj.size();
      const std::size_t dim = obj_len + x.ctx.size();
      for (std::size_t probe = 0; probe < probe_count; ++probe) {
        std::vector<double> direction = rng.normal_vector(dim);
        if (probe_cfg.norm_kind == NormKind::L2) {
          const double norm = vector_l2_norm(direction);
          const double s = norm > 0.0 ? epsilon / norm : 0.0;
          for (double& d : direction) d *= s;
        } else {
          for (double& d : direction) d = d >= 0.0 ? epsilon : -epsilon;
        }
        evaluate_delta(
            {direction.begin(),
             direction.begin() + static_cast<std::ptrdiff_t>(obj_len)},
            {direction.begin() + static_cast<std::ptrdiff_t>(obj_len),
             direction.end()});
      }
    }
    per_video[v] = result;
  });

  CertificationResult cert;
  cert.epsilon = epsilon;
  cert.random_probes = probe_count;
  cert.pgd_iterations = probe_cfg.iterations;
  cert.videos = ds.size();
  for (const auto& r : per_video) {
    cert.gamma1_hat = std::max(cert.gamma1_hat, r.cps);
    cert.beta1_hat = std::max(cert.beta1_hat, r.clm);
    cert.gamma2_hat = std::max(cert.gamma2_hat, r.spd);
    cert.beta2_hat = std::max(cert.beta2_hat, r.sld);
  }
  return cert;
}

std::vector<AblationRow> ablation_run(const ModelParams& baseline,
                                      const Dataset& train,
                                      const Dataset& test,
                                      const TrainConfig& base_cfg,
                                      double ip_sigma,
                                      const std::vector<std::uint64_t>& seeds) {
  struct Config {
    const char* name;
    bool cps, spd, clm, sld;
  };
  // Cumulative enabling in the order the loss terms were introduced.
  const Config configs[] = {
      {"task", false, false, false, false},
      {"task+cps", true, false, false, false},
      {"task+cps+spd", true, true, false, false},
      {"task+cps+spd+clm", true, true, true, false},
      {"task+cps+spd+clm+sld", true, true, true, true},
  };

  std::vector<AblationRow> rows;
  for (const Config& config : configs) {
    TrainConfig cfg = base_cfg;
    cfg.weights.enable_cps = config.cps;
    cfg.weights.enable_spd = config.spd;
    cfg.weights.enable_clm = config.clm;
    cfg.weights.enable_sld = config.sld;
    const TrainResult result = secure_finetune(baseline, train, cfg);
    const BenchRow bench =
        input_perturb_eval(result.params, test, ip_sigma, seeds, cfg.threads);
    AblationRow row;
    row.enabled_terms = config.name;
    row.ap = bench.ap_mean;
    row.mtta = bench.mtta_mean;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace secure
