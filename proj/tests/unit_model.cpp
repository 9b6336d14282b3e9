#include <cmath>
#include <cstring>
#include <doctest.h>
#include <filesystem>

#include "oracles.hpp"
#include "secure/model.hpp"
#include "secure/rng.hpp"
#include "secure/util.hpp"

using namespace secure;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d = 6;
  cfg.H = 8;
  cfg.heads = 2;
  return cfg;
}

FeatureSequence random_sequence(std::size_t T, std::size_t n, std::size_t d,
                                std::uint64_t seed) {
  Rng rng(seed);
  FeatureSequence x;
  x.video_id = "fixture";
  x.T = T;
  x.n = n;
  x.d = d;
  x.obj = rng.normal_vector(T * n * d);
  x.ctx = rng.normal_vector(T * d);
  return x;
}

ModelParams zero_params(const ModelConfig& cfg) {
  ModelParams p = init_params(cfg, 0);
  for (auto& [name, t] : p.named_params()) {
    if (name == "rho1" || name == "rho2") continue;
    t->set_values(std::vector<double>(t->numel(), 0.0));
  }
  return p;
}

}  // namespace

TEST_CASE("init_params honors the contract") {
  const ModelConfig cfg = tiny_config();
  const ModelParams a = init_params(cfg, 123);
  const ModelParams b = init_params(cfg, 123);
  CHECK(a.value_checksum() == b.value_checksum());
  CHECK(a.rho1.scalar_value() == 1.0);
  CHECK(a.rho2.scalar_value() == 1.0);

  // Weight magnitudes stay within the +-1/sqrt(fan_in) bound.
  for (const auto& [name, t] : a.named_params()) {
    if (t->rank() != 2) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(t->shape()[1]));
    for (double v : t->values()) {
      CHECK(std::fabs(v) <= bound);
    }
  }

  ModelConfig bad = cfg;
  bad.H = 7;
  CHECK_THROWS_AS(init_params(bad, 0), ConfigError);
  bad = cfg;
  bad.heads = 3;
  CHECK_THROWS_AS(init_params(bad, 0), ConfigError);
}

TEST_CASE("ofa attention") {
  const ModelConfig cfg = tiny_config();
  const ModelParams params = init_params(cfg, 5);
  Rng rng(17);

  SUBCASE("single object bypasses the weighting") {
    const std::vector<double> obj_row = rng.normal_vector(cfg.d);
    const Tensor obj = Tensor::leaf({1, cfg.d}, obj_row);
    const Tensor ctx = Tensor::leaf({cfg.d}, rng.normal_vector(cfg.d));
    const Tensor out = ofa_attention(obj, ctx, params);
    const Tensor expected =
        matmul(params.ofa_wo, matmul(params.ofa_wv, Tensor::leaf({cfg.d},
                                                                 obj_row)));
    for (std::size_t i = 0; i < out.numel(); ++i) {
      CHECK(out.value_at(i) ==
            doctest::Approx(expected.value_at(i)).epsilon(1e-12));
    }
  }

  SUBCASE("identical rows split the weights evenly") {
    const std::vector<double> row = rng.normal_vector(cfg.d);
    std::vector<double> two_rows = row;
    two_rows.insert(two_rows.end(), row.begin(), row.end());
    const Tensor obj = Tensor::leaf({2, cfg.d}, two_rows);
    const Tensor ctx = Tensor::leaf({cfg.d}, rng.normal_vector(cfg.d));
    std::vector<double> attn;
    ofa_attention(obj, ctx, params, &attn);
    REQUIRE(attn.size() == 2);
    CHECK(attn[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(attn[1] == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("three objects match the direct formula") {
    const std::size_t n = 3;
    const FeatureSequence x = random_sequence(1, n, cfg.d, 23);
    const Tensor obj = Tensor::leaf({n, cfg.d}, x.obj);
    const Tensor ctx = Tensor::leaf({cfg.d}, x.ctx);
    std::vector<double> attn;
    const Tensor out = ofa_attention(obj, ctx, params, &attn);

    // Independent dense evaluation.
    const auto matvec = [&](const Tensor& m, const std::vector<double>& v) {
      std::vector<double> r(m.shape()[0], 0.0);
      for (std::size_t i = 0; i < m.shape()[0]; ++i)
        for (std::size_t j = 0; j < m.shape()[1]; ++j)
          r[i] += m.value_at(i * m.shape()[1] + j) * v[j];
      return r;
    };
    const std::vector<double> q = matvec(params.ofa_wq, x.ctx);
    std::vector<std::vector<double>> keys, vals;
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<double> row(x.obj.begin() + i * cfg.d,
                                    x.obj.begin() + (i + 1) * cfg.d);
      keys.push_back(matvec(params.ofa_wk, row));
      vals.push_back(matvec(params.ofa_wv, row));
    }
    const std::vector<double> summary =
        oracles::direct_attention(q, keys, vals);
    const std::vector<double> expected = matvec(params.ofa_wo, summary);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(out.value_at(i) == doctest::Approx(expected[i]).epsilon(1e-10));
    }

    double total = 0.0;
    for (double a : attn) {
      CHECK(a >= 0.0);
      total += a;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("context refinement matches a direct two-layer evaluation") {
  const ModelConfig cfg = tiny_config();
  const ModelParams params = init_params(cfg, 31);
  Rng rng(32);
  const std::vector<double> ctx = rng.normal_vector(cfg.d);
  const Tensor out = context_refine(Tensor::leaf({cfg.d}, ctx), params);

  std::vector<double> hidden(cfg.d, 0.0);
  for (std::size_t i = 0; i < cfg.d; ++i) {
    double acc = params.ctx_b1.value_at(i);
    for (std::size_t j = 0; j < cfg.d; ++j)
      acc += params.ctx_w1.value_at(i * cfg.d + j) * ctx[j];
    hidden[i] = std::tanh(acc);
  }
  for (std::size_t i = 0; i < cfg.d; ++i) {
    double acc = params.ctx_b2.value_at(i);
    for (std::size_t j = 0; j < cfg.d; ++j)
      acc += params.ctx_w2.value_at(i * cfg.d + j) * hidden[j];
    CHECK(out.value_at(i) == doctest::Approx(acc).epsilon(1e-12));
  }

  SUBCASE("zero weights give zero output") {
    const ModelParams zeros = zero_params(cfg);
    const Tensor z = context_refine(Tensor::leaf({cfg.d}, ctx), zeros);
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z.value_at(i) == 0.0);
  }
}

TEST_CASE("gru cell") {
  const ModelConfig cfg = tiny_config();

  SUBCASE("all-zero parameters halve the previous state") {
    const ModelParams zeros = zero_params(cfg);
    Rng rng(41);
    const std::vector<double> h_prev = rng.normal_vector(cfg.H);
    const Tensor h_next =
        gru_cell(zeros.gru2, Tensor::zeros({cfg.H}),
                 Tensor::leaf({cfg.H}, h_prev));
    for (std::size_t i = 0; i < cfg.H; ++i) {
      CHECK(h_next.value_at(i) ==
            doctest::Approx(0.5 * h_prev[i]).epsilon(1e-12));
    }
    const Tensor fixed = gru_cell(zeros.gru2, Tensor::zeros({cfg.H}),
                                  Tensor::zeros({cfg.H}));
    for (std::size_t i = 0; i < cfg.H; ++i) CHECK(fixed.value_at(i) == 0.0);
  }

  SUBCASE("random case matches a step-by-step gate evaluation") {
    const ModelParams params = init_params(cfg, 43);
    Rng rng(44);
    const std::vector<double> x = rng.normal_vector(cfg.H);
    const std::vector<double> h = rng.normal_vector(cfg.H);
    const Tensor out = gru_cell(params.gru2, Tensor::leaf({cfg.H}, x),
                                Tensor::leaf({cfg.H}, h));

    const auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b,
                          const std::vector<double>& hh) {
      std::vector<double> r(cfg.H);
      for (std::size_t i = 0; i < cfg.H; ++i) {
        double acc = b.value_at(i);
        for (std::size_t j = 0; j < cfg.H; ++j) {
          acc += w.value_at(i * cfg.H + j) * x[j];
          acc += u.value_at(i * cfg.H + j) * hh[j];
        }
        r[i] = acc;
      }
      return r;
    };
    const auto z_pre = gate(params.gru2.wz, params.gru2.uz, params.gru2.bz, h);
    const auto r_pre = gate(params.gru2.wr, params.gru2.ur, params.gru2.br, h);
    const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (std::size_t i = 0; i < cfg.H; ++i) {
      const double z = sig(z_pre[i]);
      double cand = params.gru2.bh.value_at(i);
      for (std::size_t j = 0; j < cfg.H; ++j) {
        cand += params.gru2.wh.value_at(i * cfg.H + j) * x[j];
        cand += params.gru2.uh.value_at(i * cfg.H + j) * (sig(r_pre[j]) * h[j]);
      }
      cand = std::tanh(cand);
      const double expected = (1.0 - z) * h[i] + z * cand;
      CHECK(out.value_at(i) == doctest::Approx(expected).epsilon(1e-10));
    }
  }
}

TEST_CASE("positional encoding values") {
  const Tensor pe = positional_encoding(4, 8);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pe.value_at(2 * i) == 0.0);        // sin 0
    CHECK(pe.value_at(2 * i + 1) == 1.0);    // cos 0
  }
  CHECK(pe.value_at(8) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  CHECK(pe.value_at(8) == doctest::Approx(0.84147).epsilon(1e-5));
  for (double v : pe.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(positional_encoding(4, 7), std::invalid_argument);
}

TEST_CASE("forward contract") {
  const ModelConfig cfg = tiny_config();
  const FeatureSequence x = random_sequence(10, 3, cfg.d, 51);

  SUBCASE("shapes and ranges") {
    const ModelParams params = init_params(cfg, 52);
    const PredictionTrace trace = forward(x, params);
    REQUIRE(trace.p.numel() == x.T);
    for (double p : trace.p.values()) {
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
    CHECK(trace.p_e.numel() == 1);
    CHECK(trace.h1.shape() == Shape{x.T, cfg.H});
    CHECK(trace.h2.shape() == Shape{x.T, cfg.H});
    CHECK(trace.latent.numel() == x.T * cfg.H);
    // Flattening order: first H entries are h2 at frame 1.
    for (std::size_t i = 0; i < cfg.H; ++i) {
      CHECK(trace.latent.value_at(i) == trace.h2.value_at(i));
    }
  }

  SUBCASE("all-zero parameters pin every probability at 0.5") {
    const ModelParams zeros = zero_params(cfg);
    const PredictionTrace trace = forward(x, zeros);
    for (double p : trace.p.values()) CHECK(p == 0.5);
    CHECK(trace.p_e.scalar_value() == 0.5);
  }

  SUBCASE("bit-identical traces for identical inputs") {
    const ModelParams params = init_params(cfg, 53);
    const PredictionTrace a = forward(x, params);
    const PredictionTrace b = forward(x, params);
    CHECK(a.p.values() == b.p.values());
    CHECK(a.p_e.scalar_value() == b.p_e.scalar_value());
  }

  SUBCASE("frame probabilities are causal") {
    const ModelParams params = init_params(cfg, 54);
    const PredictionTrace full = forward(x, params);
    const std::size_t cut = 5;
    FeatureSequence truncated = x;
    for (std::size_t i = cut * x.n * x.d; i < truncated.obj.size(); ++i)
      truncated.obj[i] = 0.0;
    for (std::size_t i = cut * x.d; i < truncated.ctx.size(); ++i)
      truncated.ctx[i] = 0.0;
    const PredictionTrace head = forward(truncated, params);
    for (std::size_t t = 0; t < cut; ++t) {
      CHECK(full.p.value_at(t) == head.p.value_at(t));  // bitwise
    }
  }

  SUBCASE("aux pooling is permutation invariant only with PE off") {
    const ModelParams params = init_params(cfg, 55);
    ForwardOptions opts;
    opts.use_positional_encoding = false;
    const PredictionTrace plain = forward(x, params, opts);
    std::vector<std::size_t> perm(x.T);
    for (std::size_t i = 0; i < x.T; ++i) perm[i] = (i + 3) % x.T;

    // Permuting the h2 rows with PE off leaves the mean-pooled attention
    // output (and so p_e) unchanged.
    std::vector<double> rows = plain.h2.values();
    std::vector<double> perm_rows(rows.size());
    for (std::size_t t = 0; t < x.T; ++t) {
      std::copy(rows.begin() + perm[t] * cfg.H,
                rows.begin() + (perm[t] + 1) * cfg.H,
                perm_rows.begin() + t * cfg.H);
    }
    const Tensor pooled_a =
        mean_axis0(multi_head_self_attention(Tensor::leaf({x.T, cfg.H}, rows),
                                             params));
    const Tensor pooled_b = mean_axis0(multi_head_self_attention(
        Tensor::leaf({x.T, cfg.H}, perm_rows), params));
    for (std::size_t i = 0; i < cfg.H; ++i) {
      CHECK(pooled_a.value_at(i) ==
            doctest::Approx(pooled_b.value_at(i)).epsilon(1e-12));
    }
  }

  SUBCASE("aux attention rows are a probability distribution") {
    const ModelParams params = init_params(cfg, 56);
    std::vector<std::vector<double>> attn;
    multi_head_self_attention(
        Tensor::leaf({x.T, cfg.H}, forward(x, params).h2.values()), params,
        &attn);
    REQUIRE(attn.size() == cfg.heads);
    for (const auto& head : attn) {
      for (std::size_t row = 0; row < x.T; ++row) {
        double total = 0.0;
        for (std::size_t col = 0; col < x.T; ++col) {
          const double w = head[row * x.T + col];
          CHECK(w >= 0.0);
          total += w;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }

  SUBCASE("shape mismatch is rejected") {
    const ModelParams params = init_params(cfg, 57);
    FeatureSequence bad = x;
    bad.d = cfg.d + 1;
    bad.obj.resize(bad.T * bad.n * bad.d);
    bad.ctx.resize(bad.T * bad.d);
    CHECK_THROWS_AS(forward(bad, params), std::invalid_argument);
  }
}

TEST_CASE("forward differentiates end to end") {
  const ModelConfig cfg = tiny_config();
  const FeatureSequence x = random_sequence(6, 2, cfg.d, 61);
  ModelParams params = init_params(cfg, 62);

  const auto loss_value = [&] {
    const PredictionTrace trace = forward(x, params);
    return mean(square(trace.p));
  };
  params.zero_grads();
  backward(loss_value());

  Rng rng(63);
  auto named = params.named_params();
  for (int probe = 0; probe < 10; ++probe) {
    const std::size_t pi = rng.uniform_int(0, named.size() - 1);
    Tensor* t = named[pi].second;
    const std::size_t ci = rng.uniform_int(0, t->numel() - 1);
    const double analytic = t->grad().size() > ci ? t->grad()[ci] : 0.0;
    const double h = 1e-5;
    std::vector<double> values = t->values();
    const double orig = values[ci];
    values[ci] = orig + h;
    t->set_values(values);
    const double hi = loss_value().scalar_value();
    values[ci] = orig - h;
    t->set_values(values);
    const double lo = loss_value().scalar_value();
    values[ci] = orig;
    t->set_values(values);
    const double numeric = (hi - lo) / (2.0 * h);
    const double rel = std::fabs(analytic - numeric) /
                       std::max({1.0, std::fabs(analytic),
                                 std::fabs(numeric)});
    CAPTURE(named[pi].first);
    CHECK(rel <= 1e-4);
  }
}

TEST_CASE("checkpoint round-trip preserves every bit") {
  const ModelConfig cfg = tiny_config();
  const ModelParams params = init_params(cfg, 71);
  const auto dir = std::filesystem::temp_directory_path() / "secure_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.ckpt";
  save_checkpoint(params, path, "baseline", 71);

  CheckpointInfo info;
  const ModelParams loaded = load_checkpoint(path, &info);
  CHECK(info.role == "baseline");
  CHECK(info.seed == 71);
  CHECK(loaded.value_checksum() == params.value_checksum());

  SUBCASE("repeated saves are byte-identical") {
    const auto path2 = dir / "model2.ckpt";
    save_checkpoint(params, path2, "baseline", 71);
    CHECK(checksum_file(path) == checksum_file(path2));
  }
  SUBCASE("garbage is rejected") {
    const auto bad = dir / "bad.ckpt";
    write_file_bytes(bad, "not a checkpoint", 16);
    CHECK_THROWS_AS(load_checkpoint(bad), IoError);
  }
}
