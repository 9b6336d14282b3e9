#include <cmath>
#include <doctest.h>

#include "secure/data.hpp"
#include "secure/trainer.hpp"
#include "secure/util.hpp"

using namespace secure;

namespace {

Dataset tiny_dataset(std::uint64_t seed = 1) {
  SynthConfig cfg;
  cfg.num_videos = 8;
  cfg.positive_fraction = 0.5;
  cfg.T = 12;
  cfg.n = 2;
  cfg.d = 6;
  cfg.ramp_len = 4;
  return generate_synthetic(cfg, seed);
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.d = 6;
  cfg.H = 8;
  cfg.heads = 2;
  return cfg;
}

TrainConfig fast_train(std::size_t epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.seed = 5;
  cfg.pgd.iterations = 3;
  cfg.threads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("adam update matches a hand-stepped trace") {
  // Single parameter, constant gradient 0.5, lr 0.1.
  std::vector<double> value{1.0}, m{0.0}, v{0.0};
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double hm = 0.0, hv = 0.0, hw = 1.0;
  for (std::size_t t = 1; t <= 3; ++t) {
    adam_update(value, {0.5}, m, v, t, lr, b1, b2, eps);
    // Independent scalar arithmetic.
    hm = b1 * hm + (1 - b1) * 0.5;
    hv = b2 * hv + (1 - b2) * 0.25;
    const double mh = hm / (1 - std::pow(b1, static_cast<double>(t)));
    const double vh = hv / (1 - std::pow(b2, static_cast<double>(t)));
    hw -= lr * mh / (std::sqrt(vh) + eps);
    CHECK(value[0] == doctest::Approx(hw).epsilon(1e-15));
  }
  // First step moves by ~lr regardless of gradient scale.
  std::vector<double> w2{0.0}, m2{0.0}, v2{0.0};
  adam_update(w2, {1e-3}, m2, v2, 1, lr, b1, b2, eps);
  CHECK(w2[0] == doctest::Approx(-lr).epsilon(1e-4));
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  std::vector<double> value{2.5}, m{0.1}, v{0.01};
  adam_update(value, {0.0}, m, v, 4, 0.1, 0.9, 0.999, 1e-8);
  CHECK(value[0] == 2.5);
  CHECK(m[0] == doctest::Approx(0.09));   // moments keep decaying
  CHECK(v[0] == doctest::Approx(0.00999));
}

TEST_CASE("rho floor projection") {
  ModelParams params = init_params(tiny_model(), 1);
  params.rho1.set_values({-0.5});
  params.project_rho_floor();
  CHECK(params.rho1.scalar_value() == 1e-4);
  CHECK(params.rho2.scalar_value() == 1.0);
}

TEST_CASE("gradient clipping bounds the global norm") {
  ModelParams params = init_params(tiny_model(), 2);
  for (auto& [name, t] : params.named_params()) {
    t->zero_grad();
    auto& node = *t->node();
    for (double& g : node.grad) g = 5.0;
  }
  const double before = clip_gradients(params, 10.0);
  CHECK(before > 10.0);
  double sq = 0.0;
  for (auto& [name, t] : params.named_params())
    for (double g : t->grad()) sq += g * g;
  CHECK(std::sqrt(sq) == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("zero epochs return the initialization unchanged") {
  const Dataset ds = tiny_dataset();
  const TrainResult result = train_baseline(ds, tiny_model(), fast_train(0));
  CHECK(result.params.value_checksum() ==
        init_params(tiny_model(), fast_train(0).seed).value_checksum());
  CHECK(result.log.rows.empty());
}

TEST_CASE("baseline training reduces the task loss deterministically") {
  const Dataset ds = tiny_dataset();
  const TrainResult a = train_baseline(ds, tiny_model(), fast_train(3));
  REQUIRE_FALSE(a.log.rows.empty());
  CHECK(a.log.epochs.back().mean_losses.L_task <
        a.log.epochs.front().mean_losses.L_task);

  const TrainResult b = train_baseline(ds, tiny_model(), fast_train(3));
  CHECK(a.params.value_checksum() == b.params.value_checksum());
  for (std::size_t i = 0; i < a.log.rows.size(); ++i) {
    CHECK(a.log.rows[i].losses.L_total == b.log.rows[i].losses.L_total);
  }

  SUBCASE("thread count does not change the result") {
    TrainConfig serial = fast_train(3);
    serial.threads = 1;
    const TrainResult c = train_baseline(ds, tiny_model(), serial);
    CHECK(a.params.value_checksum() == c.params.value_checksum());
  }
}

TEST_CASE("secure_finetune with all terms off continues baseline training") {
  const Dataset ds = tiny_dataset();
  const TrainResult base = train_baseline(ds, tiny_model(), fast_train(2));

  TrainConfig cfg = fast_train(2);
  cfg.seed = 17;
  cfg.weights.lambda_c_out = 0.0;
  cfg.weights.lambda_s_out = 0.0;
  cfg.weights.lambda_c_feat = 0.0;
  cfg.weights.lambda_s_feat = 0.0;

  const TrainResult continued = train_baseline_from(base.params, ds, cfg);
  const TrainResult finetuned = secure_finetune(base.params, ds, cfg);
  CHECK(continued.params.value_checksum() ==
        finetuned.params.value_checksum());
  REQUIRE(continued.log.rows.size() == finetuned.log.rows.size());
  for (std::size_t i = 0; i < continued.log.rows.size(); ++i) {
    CHECK(continued.log.rows[i].losses.L_total ==
          finetuned.log.rows[i].losses.L_total);  // bitwise
  }

  SUBCASE("flag-off equals lambda-zero exactly") {
    TrainConfig flags_off = fast_train(2);
    flags_off.seed = 17;
    flags_off.weights.enable_cps = false;
    flags_off.weights.enable_spd = false;
    flags_off.weights.enable_clm = false;
    flags_off.weights.enable_sld = false;
    const TrainResult by_flags = secure_finetune(base.params, ds, flags_off);
    CHECK(by_flags.params.value_checksum() ==
          finetuned.params.value_checksum());
  }
}

TEST_CASE("secure_finetune trains against the frozen reference") {
  const Dataset ds = tiny_dataset();
  const TrainResult base = train_baseline(ds, tiny_model(), fast_train(2));
  const std::uint64_t base_checksum = base.params.value_checksum();

  TrainConfig cfg = fast_train(2);
  cfg.pgd.epsilon = 0.01;
  cfg.pgd.iterations = 3;
  const TrainResult tuned = secure_finetune(base.params, ds, cfg);

  // The input baseline (theta*) is untouched; the tuned model moved.
  CHECK(base.params.value_checksum() == base_checksum);
  CHECK(tuned.params.value_checksum() != base_checksum);
  for (const auto& row : tuned.log.rows) {
    CHECK(row.losses.L_cps >= 0.0);
    CHECK(row.losses.L_spd >= 0.0);
    CHECK(std::isfinite(row.losses.L_total));
  }
}

TEST_CASE("divergence guard aborts on runaway steps") {
  const Dataset ds = tiny_dataset();
  TrainConfig cfg = fast_train(2);
  cfg.learning_rate = 1e18;  // drives the loss non-finite within an epoch
  cfg.grad_clip = 1e30;
  CHECK_THROWS_AS(train_baseline(ds, tiny_model(), cfg), DivergenceError);
}

TEST_CASE("run log CSV shape") {
  const Dataset ds = tiny_dataset();
  const TrainResult result = train_baseline(ds, tiny_model(), fast_train(1));
  const auto dir = std::filesystem::temp_directory_path() / "secure_runlog";
  std::filesystem::create_directories(dir);
  result.log.write_step_csv(dir / "runlog.csv");
  result.log.write_epoch_csv(dir / "epochs.csv");

  const auto text = read_file_bytes(dir / "runlog.csv");
  const std::string content(text.begin(), text.end());
  CHECK(content.find("epoch,step,L_a,L_e,L_task") == 0);
  // Two batches of four videos for one epoch.
  CHECK(std::count(content.begin(), content.end(), '\n') == 3);
}
