// Command-line driver: dataset generation, baseline training, robust
// fine-tuning, perturbation benchmarks, certification, gradient checks and
// plotting. Exit codes: 0 success, 2 usage, 3 I/O, 4 numerical abort,
// 5 verification failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "secure/adversary.hpp"
#include "secure/data.hpp"
#include "secure/evalsuite.hpp"
#include "secure/losses.hpp"
#include "secure/model.hpp"
#include "secure/report.hpp"
#include "secure/rng.hpp"
#include "secure/tensor.hpp"
#include "secure/trainer.hpp"
#include "secure/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitVerification = 5;

struct GradcheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat JSON config files as CLI11 option sources; explicitly passed flags
/// always win over config values.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool,
                        std::string) const override {
    return "{}\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::FileError(std::string("malformed JSON config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::FileError("config root must be an object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      if (value.is_string()) {
        item.inputs = {value.get<std::string>()};
      } else if (value.is_array()) {
        for (const auto& entry : value) {
          item.inputs.push_back(entry.is_string() ? entry.get<std::string>()
                                                  : entry.dump());
        }
      } else {
        item.inputs = {value.dump()};
      }
      items.push_back(std::move(item));
    }
    return items;
  }
};

void enable_json_config(CLI::App* sub) {
  sub->config_formatter(std::make_shared<JsonConfig>());
  sub->set_config("--config", "", "JSON file supplying flag defaults");
}

std::vector<double> parse_sigma_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw secure::ConfigError("bad sigma value '" + item + "'");
    }
  }
  return out;
}

fs::path resolve_run_dir(const std::string& explicit_dir,
                         const std::string& command, std::uint64_t seed) {
  if (!explicit_dir.empty()) return explicit_dir;
  fs::path base = "runs";
  if (const char* env = std::getenv("SECURE_OUT_DIR")) base = env;
  return base / (secure::timestamp_utc() + "-" + command + "-seed" +
                 std::to_string(seed));
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw secure::IoError("cannot create directory " + dir.string());
}

secure::NormKind parse_norm(const std::string& name) {
  if (name == "l2" || name == "L2") return secure::NormKind::L2;
  if (name == "linf" || name == "Linf") return secure::NormKind::Linf;
  throw secure::ConfigError("unknown norm kind '" + name + "' (l2|linf)");
}

secure::PgdMode parse_mode(const std::string& name) {
  if (name == "per_sample") return secure::PgdMode::per_sample;
  if (name == "shared_batch") return secure::PgdMode::shared_batch;
  throw secure::ConfigError("unknown PGD mode '" + name +
                            "' (per_sample|shared_batch)");
}

std::vector<std::uint64_t> eval_seeds(std::uint64_t base, std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i)
    seeds[i] = secure::child_seed(base, i);
  return seeds;
}

// --- gen-data ---------------------------------------------------------

struct GenDataArgs {
  std::string out = "data";
  std::size_t num_videos = 200;
  double positive_frac = 0.5;
  std::size_t T = 50, n = 5, d = 32;
  int fps = 10;
  double signal = 2.0;
  double noise = 1.0;
  std::size_t ramp_len = 15;
  std::uint64_t seed = 0;
};

int run_gen_data(const GenDataArgs& args) {
  secure::SynthConfig cfg;
  cfg.num_videos = args.num_videos;
  cfg.positive_fraction = args.positive_frac;
  cfg.T = args.T;
  cfg.n = args.n;
  cfg.d = args.d;
  cfg.fps = args.fps;
  cfg.signal_strength = args.signal;
  cfg.noise_std = args.noise;
  cfg.ramp_len = args.ramp_len;

  const fs::path out(args.out);
  ensure_dir(out);

  cfg.split = "train";
  const secure::Dataset train = secure::generate_synthetic(cfg, args.seed);
  secure::save_dataset(train, out / "train");

  cfg.split = "test";
  cfg.num_videos = std::max<std::size_t>(2, args.num_videos / 2);
  const secure::Dataset test = secure::generate_synthetic(cfg, args.seed);
  secure::save_dataset(test, out / "test");

  const json echo{{"out", args.out},
                  {"num_videos", args.num_videos},
                  {"positive_frac", args.positive_frac},
                  {"T", args.T},
                  {"n", args.n},
                  {"d", args.d},
                  {"fps", args.fps},
                  {"signal", args.signal},
                  {"noise", args.noise},
                  {"ramp_len", args.ramp_len},
                  {"seed", args.seed}};
  secure::RunManifest manifest("gen-data", args.seed);
  manifest.set_config(echo.dump());
  manifest.add_output(out / "train" / "dataset.json");
  manifest.add_output(out / "test" / "dataset.json");
  manifest.write(out);

  std::cout << "wrote " << train.size() << " train / " << test.size()
            << " test videos under " << out << "\n";
  return kExitOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out_checkpoint = "baseline.ckpt";
  std::string run_dir;
  double lr = 1e-4;
  std::size_t batch_size = 10;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::size_t hidden = 64;
  std::size_t heads = 4;
};

int run_train(const TrainArgs& args) {
  const secure::Dataset ds = secure::load_dataset(args.data);
  secure::ModelConfig model_cfg;
  model_cfg.d = ds.d;
  model_cfg.H = args.hidden;
  model_cfg.heads = args.heads;
  secure::TrainConfig cfg;
  cfg.learning_rate = args.lr;
  cfg.batch_size = args.batch_size;
  cfg.epochs = args.epochs;
  cfg.seed = args.seed;

  const fs::path run_dir = resolve_run_dir(args.run_dir, "train", args.seed);
  ensure_dir(run_dir);

  const secure::TrainResult result =
      secure::train_baseline(ds, model_cfg, cfg);
  const fs::path ckpt(args.out_checkpoint);
  ensure_dir(ckpt.parent_path());
  secure::save_checkpoint(result.params, ckpt, "baseline", args.seed);
  result.log.write_step_csv(run_dir / "runlog.csv");
  result.log.write_epoch_csv(run_dir / "epochs.csv");

  const json echo{{"data", args.data},
                  {"out_checkpoint", args.out_checkpoint},
                  {"learning_rate", args.lr},
                  {"batch_size", args.batch_size},
                  {"epochs", args.epochs},
                  {"seed", args.seed},
                  {"hidden", args.hidden},
                  {"heads", args.heads}};
  secure::RunManifest manifest("train", args.seed);
  manifest.set_config(echo.dump());
  manifest.add_input(args.data);
  manifest.add_output(ckpt);
  manifest.add_output(run_dir / "runlog.csv");
  manifest.add_output(run_dir / "epochs.csv");
  manifest.write(run_dir);

  std::cout << "baseline checkpoint written to " << ckpt.string()
            << " (final L_task " << result.log.rows.back().losses.L_task
            << ")\n";
  return kExitOk;
}

// --- finetune-secure ---------------------------------------------------

struct FinetuneArgs {
  std::string baseline;
  std::string data;
  std::string out_checkpoint = "secure.ckpt";
  std::string run_dir;
  double lr = 1e-4;
  std::size_t batch_size = 10;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double lambda_cps = 50.0;
  double lambda_spd = 50.0;
  double lambda_clm = 0.01;
  double lambda_sld = 0.01;
  std::string ablation;  // comma list; empty keeps all terms enabled
  double epsilon = 0.01;
  double alpha = 0.002;
  std::size_t pgd_iters = 20;
  std::string pgd_norm = "l2";
  std::string pgd_mode = "per_sample";
};

int run_finetune(const FinetuneArgs& args) {
  const secure::Dataset ds = secure::load_dataset(args.data);
  const secure::ModelParams baseline = secure::load_checkpoint(args.baseline);

  secure::TrainConfig cfg;
  cfg.learning_rate = args.lr;
  cfg.batch_size = args.batch_size;
  cfg.epochs = args.epochs;
  cfg.seed = args.seed;
  cfg.pgd.epsilon = args.epsilon;
  cfg.pgd.alpha = args.alpha;
  cfg.pgd.iterations = args.pgd_iters;
  cfg.pgd.norm_kind = parse_norm(args.pgd_norm);
  cfg.pgd.mode = parse_mode(args.pgd_mode);
  cfg.weights.lambda_c_out = args.lambda_cps;
  cfg.weights.lambda_s_out = args.lambda_spd;
  cfg.weights.lambda_c_feat = args.lambda_clm;
  cfg.weights.lambda_s_feat = args.lambda_sld;
  if (!args.ablation.empty()) {
    cfg.weights.enable_cps = args.ablation.find("cps") != std::string::npos;
    cfg.weights.enable_spd = args.ablation.find("spd") != std::string::npos;
    cfg.weights.enable_clm = args.ablation.find("clm") != std::string::npos;
    cfg.weights.enable_sld = args.ablation.find("sld") != std::string::npos;
  }

  const fs::path run_dir =
      resolve_run_dir(args.run_dir, "finetune-secure", args.seed);
  ensure_dir(run_dir);

  const secure::TrainResult result = secure::secure_finetune(baseline, ds, cfg);
  const fs::path ckpt(args.out_checkpoint);
  ensure_dir(ckpt.parent_path());
  secure::save_checkpoint(result.params, ckpt, "secure", args.seed);
  result.log.write_step_csv(run_dir / "runlog.csv");
  result.log.write_epoch_csv(run_dir / "epochs.csv");

  const json echo{{"baseline", args.baseline},
                  {"data", args.data},
                  {"out_checkpoint", args.out_checkpoint},
                  {"learning_rate", args.lr},
                  {"batch_size", args.batch_size},
                  {"epochs", args.epochs},
                  {"seed", args.seed},
                  {"lambda_c_out", args.lambda_cps},
                  {"lambda_s_out", args.lambda_spd},
                  {"lambda_c_feat", args.lambda_clm},
                  {"lambda_s_feat", args.lambda_sld},
                  {"ablation", args.ablation},
                  {"epsilon", args.epsilon},
                  {"alpha", args.alpha},
                  {"pgd_iterations", args.pgd_iters},
                  {"pgd_norm", args.pgd_norm},
                  {"pgd_mode", args.pgd_mode}};
  secure::RunManifest manifest("finetune-secure", args.seed);
  manifest.set_config(echo.dump());
  manifest.add_input(args.baseline);
  manifest.add_input(args.data);
  manifest.add_output(ckpt);
  manifest.add_output(run_dir / "runlog.csv");
  manifest.add_output(run_dir / "epochs.csv");
  manifest.write(run_dir);

  std::cout << "secure checkpoint written to " << ckpt.string()
            << " (final L_total " << result.log.rows.back().losses.L_total
            << ")\n";
  return kExitOk;
}

// --- bench --------------------------------------------------------------

struct BenchArgs {
  std::vector<std::string> checkpoints;
  std::string data;
  std::string run_dir;
  std::string ip_sigmas = "0.1,0.2";
  std::string lp_sigmas = "0.1,0.2";
  std::size_t seeds = 3;
  std::uint64_t seed = 0;
  std::size_t plot_videos = 2;
};

int run_bench(const BenchArgs& args) {
  const secure::Dataset ds = secure::load_dataset(args.data);
  const std::vector<double> ip = parse_sigma_list(args.ip_sigmas);
  const std::vector<double> lp = parse_sigma_list(args.lp_sigmas);
  const auto noise_seeds =
      eval_seeds(args.seed, std::max<std::size_t>(1, args.seeds));

  const fs::path run_dir = resolve_run_dir(args.run_dir, "bench", args.seed);
  ensure_dir(run_dir);

  std::vector<secure::BenchRow> rows;
  std::vector<secure::TrajectorySeries> trajectories;
  for (const std::string& ckpt_path : args.checkpoints) {
    secure::CheckpointInfo info;
    const secure::ModelParams params =
        secure::load_checkpoint(ckpt_path, &info);
    const std::string model_name =
        info.role + ":" + fs::path(ckpt_path).stem().string();

    const secure::MetricResult clean = secure::evaluate_model(params, ds);
    secure::BenchRow clean_row;
    clean_row.model = model_name;
    clean_row.condition = "Clean";
    clean_row.ap_mean = clean.ap;
    clean_row.mtta_mean = clean.mtta_seconds;
    clean_row.seed_count = 1;
    rows.push_back(clean_row);

    for (const double sigma : ip) {
      secure::BenchRow row =
          secure::input_perturb_eval(params, ds, sigma, noise_seeds);
      row.model = model_name;
      rows.push_back(row);
    }
    for (const double sigma : lp) {
      secure::BenchRow row =
          secure::latent_perturb_eval(params, ds, sigma, noise_seeds);
      row.model = model_name;
      rows.push_back(row);
    }

    // Trajectories for the report command: clean vs the first IP condition.
    const std::size_t plot_count = std::min(args.plot_videos, ds.size());
    for (std::size_t v = 0; v < plot_count; ++v) {
      const secure::FeatureSequence& x = ds.features[v];
      trajectories.push_back({model_name + "/" + x.video_id, "clean",
                              secure::forward(x, params).p.values()});
      if (!ip.empty() && ip.front() > 0.0) {
        secure::Rng rng(secure::child_seed(
            secure::child_seed(noise_seeds[0], "input-perturb"), v));
        secure::FeatureSequence noisy = x;
        for (double& val : noisy.obj) val += rng.normal(0.0, ip.front());
        for (double& val : noisy.ctx) val += rng.normal(0.0, ip.front());
        char label[32];
        std::snprintf(label, sizeof label, "IP(%g)", ip.front());
        trajectories.push_back({model_name + "/" + x.video_id, label,
                                secure::forward(noisy, params).p.values()});
      }
    }
  }

  secure::write_bench_csv(rows, run_dir / "bench_report.csv");
  secure::write_bench_json(rows, run_dir / "bench_report.json");
  secure::write_trajectories_csv(trajectories, run_dir / "trajectories.csv");

  const json echo{{"checkpoints", args.checkpoints},
                  {"data", args.data},
                  {"ip_sigmas", args.ip_sigmas},
                  {"lp_sigmas", args.lp_sigmas},
                  {"seeds", args.seeds},
                  {"seed", args.seed}};
  secure::RunManifest manifest("bench", args.seed);
  manifest.set_config(echo.dump());
  manifest.add_input(args.data);
  for (const auto& c : args.checkpoints) manifest.add_input(c);
  manifest.add_output(run_dir / "bench_report.csv");
  manifest.add_output(run_dir / "bench_report.json");
  manifest.add_output(run_dir / "trajectories.csv");
  manifest.write(run_dir);

  for (const auto& row : rows) {
    std::cout << row.model << " " << row.condition << ": AP " << row.ap_mean
              << " mTTA " << row.mtta_mean << "s\n";
  }
  std::cout << "bench report written to " << run_dir.string() << "\n";
  return kExitOk;
}

// --- certify -------------------------------------------------------------

struct CertifyArgs {
  std::string checkpoint;
  std::string reference;
  std::string data;
  std::string run_dir;
  double epsilon = 0.01;
  std::size_t probes = 50;
  std::size_t pgd_iters = 20;
  double alpha = 0.002;
  std::string pgd_norm = "l2";
  std::uint64_t seed = 0;
};

int run_certify(const CertifyArgs& args) {
  const secure::Dataset ds = secure::load_dataset(args.data);
  const secure::ModelParams model = secure::load_checkpoint(args.checkpoint);
  const secure::ModelParams reference =
      args.reference.empty() ? model.clone(false)
                             : secure::load_checkpoint(args.reference);

  secure::PgdConfig pgd;
  pgd.epsilon = args.epsilon;
  pgd.alpha = args.alpha;
  pgd.iterations = args.pgd_iters;
  pgd.norm_kind = parse_norm(args.pgd_norm);

  const fs::path run_dir = resolve_run_dir(args.run_dir, "certify", args.seed);
  ensure_dir(run_dir);

  const secure::CertificationResult cert = secure::certify_secure(
      model, reference, ds, args.epsilon, pgd, args.probes, args.seed);

  const std::string name = fs::path(args.checkpoint).stem().string();
  secure::write_certification_csv({{name, cert}},
                                  run_dir / "certification.csv");
  secure::write_certification_json({{name, cert}},
                                   run_dir / "certification.json");

  const json echo{{"checkpoint", args.checkpoint},
                  {"reference", args.reference},
                  {"data", args.data},
                  {"epsilon", args.epsilon},
                  {"probes", args.probes},
                  {"pgd_iterations", args.pgd_iters},
                  {"alpha", args.alpha},
                  {"pgd_norm", args.pgd_norm},
                  {"seed", args.seed}};
  secure::RunManifest manifest("certify", args.seed);
  manifest.set_config(echo.dump());
  manifest.add_input(args.checkpoint);
  if (!args.reference.empty()) manifest.add_input(args.reference);
  manifest.add_input(args.data);
  manifest.add_output(run_dir / "certification.csv");
  manifest.add_output(run_dir / "certification.json");
  manifest.write(run_dir);

  std::cout << "gamma1 " << cert.gamma1_hat << " gamma2 " << cert.gamma2_hat
            << " beta1 " << cert.beta1_hat << " beta2 " << cert.beta2_hat
            << " (epsilon " << cert.epsilon << ")\n"
            << "certification written to " << run_dir.string() << "\n";
  return kExitOk;
}

// --- ablate ----------------------------------------------------------------

struct AblateArgs {
  std::string baseline;
  std::string train_data;
  std::string test_data;
  std::string run_dir;
  double sigma = 0.2;
  std::size_t seeds = 3;
  std::size_t epochs = 10;
  double lr = 1e-4;
  std::size_t batch_size = 10;
  std::uint64_t seed = 0;
  double epsilon = 0.01;
  double alpha = 0.002;
  std::size_t pgd_iters = 20;
};

int run_ablate(const AblateArgs& args) {
  const secure::Dataset train = secure::load_dataset(args.train_data);
  const secure::Dataset test = secure::load_dataset(args.test_data);
  const secure::ModelParams baseline = secure::load_checkpoint(args.baseline);

  secure::TrainConfig cfg;
  cfg.learning_rate = args.lr;
  cfg.batch_size = args.batch_size;
  cfg.epochs = args.epochs;
  cfg.seed = args.seed;
  cfg.pgd.epsilon = args.epsilon;
  cfg.pgd.alpha = args.alpha;
  cfg.pgd.iterations = args.pgd_iters;

  const fs::path run_dir = resolve_run_dir(args.run_dir, "ablate", args.seed);
  ensure_dir(run_dir);

  const auto rows = secure::ablation_run(
      baseline, train, test, cfg, args.sigma,
      eval_seeds(args.seed, args.seeds));
  secure::write_ablation_csv(rows, run_dir / "ablation.csv");
  secure::write_ablation_json(rows, run_dir / "ablation.json");

  const json echo{{"baseline", args.baseline},
                  {"train_data", args.train_data},
                  {"test_data", args.test_data},
                  {"sigma", args.sigma},
                  {"seeds", args.seeds},
                  {"epochs", args.epochs},
                  {"seed", args.seed}};
  secure::RunManifest manifest("ablate", args.seed);
  manifest.set_config(echo.dump());
  manifest.add_input(args.baseline);
  manifest.add_input(args.train_data);
  manifest.add_input(args.test_data);
  manifest.add_output(run_dir / "ablation.csv");
  manifest.add_output(run_dir / "ablation.json");
  manifest.write(run_dir);

  for (const auto& row : rows) {
    std::cout << row.enabled_terms << ": AP " << row.ap << " mTTA " << row.mtta
              << "s\n";
  }
  std::cout << "ablation table written to " << run_dir.string() << "\n";
  return kExitOk;
}

// --- gradcheck --------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
};

int run_gradcheck(const GradcheckArgs& args) {
  secure::Rng rng(secure::child_seed(args.seed, "gradcheck"));
  bool all_ok = true;

  const auto report_line = [&](const std::string& name,
                               const secure::FiniteDiffReport& report) {
    std::cout << (report.pass ? "  ok   " : "  FAIL ") << name
              << " max rel err " << report.max_rel_err << "\n";
    if (!report.pass) all_ok = false;
  };

  const auto random_point = [&](std::size_t len) {
    std::vector<double> v(len);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
  };
  using secure::Tensor;
  const std::vector<std::pair<std::string,
                              std::function<Tensor(const Tensor&)>>> checks{
      {"sigmoid", [](const Tensor& x) { return sum(sigmoid(x)); }},
      {"tanh", [](const Tensor& x) { return sum(secure::tanh(x)); }},
      {"exp", [](const Tensor& x) { return sum(secure::exp(x)); }},
      {"square", [](const Tensor& x) { return sum(square(x)); }},
      {"softmax", [](const Tensor& x) { return sum(square(softmax(x))); }},
      {"mean", [](const Tensor& x) { return mean(square(x)); }},
      {"log-of-sigmoid",
       [](const Tensor& x) { return sum(secure::log(sigmoid(x))); }},
  };
  for (const auto& [name, fn] : checks) {
    const Tensor point = Tensor::leaf({6}, random_point(6));
    report_line(name,
                secure::finite_diff_check(fn, point, 1e-5, args.tolerance));
  }

  // Model losses w.r.t. a sample of parameter coordinates on a small fixture.
  secure::SynthConfig data_cfg;
  data_cfg.num_videos = 4;
  data_cfg.T = 12;
  data_cfg.n = 2;
  data_cfg.d = 6;
  data_cfg.ramp_len = 4;
  const secure::Dataset ds = secure::generate_synthetic(data_cfg, args.seed);
  secure::ModelConfig model_cfg;
  model_cfg.d = data_cfg.d;
  model_cfg.H = 8;
  model_cfg.heads = 2;
  secure::ModelParams params = secure::init_params(model_cfg, args.seed);

  const auto batch_loss = [&](secure::ModelParams& p) {
    std::vector<secure::PredictionTrace> traces;
    std::vector<secure::Tensor> p_e;
    for (const auto& x : ds.features) {
      traces.push_back(secure::forward(x, p));
      p_e.push_back(traces.back().p_e);
    }
    const secure::Tensor l_a = secure::anticipation_loss(traces, ds.labels);
    const secure::Tensor l_e = secure::enhancement_loss(p_e, ds.labels);
    return secure::task_loss(l_a, l_e, p.rho1, p.rho2, p.mu1, p.mu2);
  };

  params.zero_grads();
  secure::backward(batch_loss(params));
  auto named = params.named_params();
  for (int probe = 0; probe < 10; ++probe) {
    const std::size_t pi = rng.uniform_int(0, named.size() - 1);
    secure::Tensor* t = named[pi].second;
    const std::size_t ci = rng.uniform_int(0, t->numel() - 1);
    const double analytic = t->grad().size() > ci ? t->grad()[ci] : 0.0;

    const double h = 1e-5;
    std::vector<double> values = t->values();
    const double orig = values[ci];
    values[ci] = orig + h;
    t->set_values(values);
    const double hi = batch_loss(params).scalar_value();
    values[ci] = orig - h;
    t->set_values(values);
    const double lo = batch_loss(params).scalar_value();
    values[ci] = orig;
    t->set_values(values);

    const double numeric = (hi - lo) / (2.0 * h);
    const double rel =
        std::fabs(analytic - numeric) /
        std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    std::cout << "  task-loss d/d(" << named[pi].first << "[" << ci
              << "]) rel err " << rel
              << (rel <= args.tolerance ? "" : "  FAIL") << "\n";
    if (rel > args.tolerance) all_ok = false;
  }

  std::cout << (all_ok ? "gradcheck passed" : "gradcheck FAILED")
            << " (tolerance " << args.tolerance << ")\n";
  if (!all_ok) throw GradcheckFailure("finite-difference check failed");
  return kExitOk;
}

// --- report ----------------------------------------------------------------

struct ReportArgs {
  std::string run_dir;
  std::string out_svg;
};

int run_report(const ReportArgs& args) {
  const fs::path dir(args.run_dir);
  const fs::path traj_csv = dir / "trajectories.csv";
  const fs::path runlog_csv = dir / "runlog.csv";
  if (!fs::exists(traj_csv) && !fs::exists(runlog_csv)) {
    throw secure::IoError("report: no trajectories.csv or runlog.csv in " +
                          dir.string());
  }
  const fs::path out_svg =
      args.out_svg.empty() ? dir / "report.svg" : fs::path(args.out_svg);

  if (fs::exists(traj_csv)) {
    const auto series = secure::read_trajectories_csv(traj_csv);
    secure::write_svg_chart("frame probabilities, clean vs perturbed", series,
                            out_svg);
    std::cout << "trajectory chart written to " << out_svg.string() << "\n";
  }
  if (fs::exists(runlog_csv)) {
    std::ifstream in(runlog_csv);
    std::string line;
    std::getline(in, line);
    secure::TrajectorySeries total{"L_total", "train", {}};
    secure::TrajectorySeries task{"L_task", "train", {}};
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string field;
      std::vector<std::string> fields;
      while (std::getline(ls, field, ',')) fields.push_back(field);
      if (fields.size() >= 10) {
        task.p.push_back(std::stod(fields[4]));
        total.p.push_back(std::stod(fields[9]));
      }
    }
    const fs::path loss_svg = out_svg.parent_path() / "losses.svg";
    secure::write_svg_chart("training loss per step", {task, total}, loss_svg);
    std::cout << "loss chart written to " << loss_svg.string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SECURE robust accident-anticipation toolkit"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--out", gen_args.out, "output directory");
  gen->add_option("--num-videos", gen_args.num_videos);
  gen->add_option("--positive-frac", gen_args.positive_frac);
  gen->add_option("--T", gen_args.T);
  gen->add_option("--n", gen_args.n);
  gen->add_option("--d", gen_args.d);
  gen->add_option("--fps", gen_args.fps);
  gen->add_option("--signal", gen_args.signal);
  gen->add_option("--noise", gen_args.noise);
  gen->add_option("--ramp-len", gen_args.ramp_len);
  gen->add_option("--seed", gen_args.seed);
  enable_json_config(gen);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train the baseline model");
  train->add_option("--data", train_args.data)->required();
  train->add_option("--out-checkpoint", train_args.out_checkpoint);
  train->add_option("--run-dir", train_args.run_dir);
  train->add_option("--lr", train_args.lr);
  train->add_option("--batch-size", train_args.batch_size);
  train->add_option("--epochs", train_args.epochs);
  train->add_option("--seed", train_args.seed);
  train->add_option("--hidden", train_args.hidden);
  train->add_option("--heads", train_args.heads);
  enable_json_config(train);

  FinetuneArgs ft_args;
  auto* ft = app.add_subcommand("finetune-secure",
                                "robust fine-tuning from a baseline");
  ft->add_option("--baseline", ft_args.baseline)->required();
  ft->add_option("--data", ft_args.data)->required();
  ft->add_option("--out-checkpoint", ft_args.out_checkpoint);
  ft->add_option("--run-dir", ft_args.run_dir);
  ft->add_option("--lr", ft_args.lr);
  ft->add_option("--batch-size", ft_args.batch_size);
  ft->add_option("--epochs", ft_args.epochs);
  ft->add_option("--seed", ft_args.seed);
  ft->add_option("--lambda-cps", ft_args.lambda_cps);
  ft->add_option("--lambda-spd", ft_args.lambda_spd);
  ft->add_option("--lambda-clm", ft_args.lambda_clm);
  ft->add_option("--lambda-sld", ft_args.lambda_sld);
  ft->add_option("--ablation", ft_args.ablation,
                 "comma list of enabled robustness terms (cps,spd,clm,sld)");
  ft->add_option("--epsilon", ft_args.epsilon);
  ft->add_option("--alpha", ft_args.alpha);
  ft->add_option("--pgd-iters", ft_args.pgd_iters);
  ft->add_option("--pgd-norm", ft_args.pgd_norm);
  ft->add_option("--pgd-mode", ft_args.pgd_mode);
  enable_json_config(ft);

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "clean/IP/LP benchmark");
  bench->add_option("--checkpoint", bench_args.checkpoints)->required();
  bench->add_option("--data", bench_args.data)->required();
  bench->add_option("--run-dir", bench_args.run_dir);
  bench->add_option("--ip-sigmas", bench_args.ip_sigmas);
  bench->add_option("--lp-sigmas", bench_args.lp_sigmas);
  bench->add_option("--seeds", bench_args.seeds);
  bench->add_option("--seed", bench_args.seed);
  bench->add_option("--plot-videos", bench_args.plot_videos);
  enable_json_config(bench);

  CertifyArgs cert_args;
  auto* certify =
      app.add_subcommand("certify", "empirical SECURE certification");
  certify->add_option("--checkpoint", cert_args.checkpoint)->required();
  certify->add_option("--reference", cert_args.reference);
  certify->add_option("--data", cert_args.data)->required();
  certify->add_option("--run-dir", cert_args.run_dir);
  certify->add_option("--epsilon", cert_args.epsilon);
  certify->add_option("--probes", cert_args.probes);
  certify->add_option("--pgd-iters", cert_args.pgd_iters);
  certify->add_option("--alpha", cert_args.alpha);
  certify->add_option("--pgd-norm", cert_args.pgd_norm);
  certify->add_option("--seed", cert_args.seed);
  enable_json_config(certify);

  AblateArgs ablate_args;
  auto* ablate =
      app.add_subcommand("ablate", "cumulative loss-term ablation sweep");
  ablate->add_option("--baseline", ablate_args.baseline)->required();
  ablate->add_option("--train-data", ablate_args.train_data)->required();
  ablate->add_option("--test-data", ablate_args.test_data)->required();
  ablate->add_option("--run-dir", ablate_args.run_dir);
  ablate->add_option("--sigma", ablate_args.sigma);
  ablate->add_option("--seeds", ablate_args.seeds);
  ablate->add_option("--epochs", ablate_args.epochs);
  ablate->add_option("--lr", ablate_args.lr);
  ablate->add_option("--batch-size", ablate_args.batch_size);
  ablate->add_option("--seed", ablate_args.seed);
  ablate->add_option("--epsilon", ablate_args.epsilon);
  ablate->add_option("--alpha", ablate_args.alpha);
  ablate->add_option("--pgd-iters", ablate_args.pgd_iters);
  enable_json_config(ablate);

  GradcheckArgs grad_args;
  auto* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--seed", grad_args.seed);
  gradcheck->add_option("--tolerance", grad_args.tolerance);

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "render SVG charts for a run");
  report->add_option("--run-dir", report_args.run_dir)->required();
  report->add_option("--out-svg", report_args.out_svg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return run_gen_data(gen_args);
    if (train->parsed()) return run_train(train_args);
    if (ft->parsed()) return run_finetune(ft_args);
    if (bench->parsed()) return run_bench(bench_args);
    if (certify->parsed()) return run_certify(cert_args);
    if (ablate->parsed()) return run_ablate(ablate_args);
    if (gradcheck->parsed()) return run_gradcheck(grad_args);
    if (report->parsed()) return run_report(report_args);
  } catch (const secure::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const secure::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const secure::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const GradcheckFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVerification;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
