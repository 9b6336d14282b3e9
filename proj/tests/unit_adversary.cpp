#include <cmath>
#include <doctest.h>

#include "secure/adversary.hpp"
#include "secure/rng.hpp"

using namespace secure;

TEST_CASE("projection") {
  SUBCASE("L2 radial scaling") {
    // ||(0.012, 0.016)|| = 0.02 -> halved onto the 0.01 sphere.
    std::vector<double> delta{0.012, 0.016};
    project(delta, 0.01, NormKind::L2);
    CHECK(delta[0] == doctest::Approx(0.006).epsilon(1e-12));
    CHECK(delta[1] == doctest::Approx(0.008).epsilon(1e-12));
  }
  SUBCASE("inside the ball is untouched bit-for-bit") {
    std::vector<double> delta{0.003, -0.004};
    const std::vector<double> original = delta;
    project(delta, 0.01, NormKind::L2);
    CHECK(delta == original);
  }
  SUBCASE("idempotence is exact") {
    Rng rng(3);
    for (int round = 0; round < 50; ++round) {
      std::vector<double> delta = rng.normal_vector(6);
      const double eps = rng.uniform(0.01, 1.0);
      const NormKind kind = round % 2 ? NormKind::L2 : NormKind::Linf;
      project(delta, eps, kind);
      const std::vector<double> once = delta;
      project(delta, eps, kind);
      CHECK(delta == once);
    }
  }
  SUBCASE("Linf clamps per coordinate") {
    std::vector<double> delta{0.03, -0.005};
    project(delta, 0.01, NormKind::Linf);
    CHECK(delta[0] == 0.01);
    CHECK(delta[1] == -0.005);
  }
  SUBCASE("L2 projection beats random feasible points") {
    Rng rng(5);
    for (int round = 0; round < 30; ++round) {
      const std::size_t dim = 4;
      std::vector<double> original = rng.normal_vector(dim);
      const double eps = rng.uniform(0.05, 0.5);
      std::vector<double> projected = original;
      project(projected, eps, NormKind::L2);
      double proj_dist = 0.0;
      for (std::size_t i = 0; i < dim; ++i)
        proj_dist += (projected[i] - original[i]) * (projected[i] - original[i]);
      for (int probe = 0; probe < 200; ++probe) {
        std::vector<double> z = rng.normal_vector(dim);
        project(z, eps, NormKind::L2);  // feasible point
        double dist = 0.0;
        for (std::size_t i = 0; i < dim; ++i)
          dist += (z[i] - original[i]) * (z[i] - original[i]);
        CHECK(proj_dist <= dist + 1e-12);
      }
    }
  }
  SUBCASE("perturbation-level projection constrains the joint norm") {
    Perturbation p;
    p.obj_delta = {0.3, 0.0};
    p.ctx_delta = {0.0, 0.4};
    p.norm_kind = NormKind::L2;
    p.epsilon = 0.05;
    const Perturbation projected = project(p);
    CHECK(projected.norm() <= 0.05 + 1e-9);
    CHECK(projected.obj_delta[0] == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(projected.ctx_delta[1] == doctest::Approx(0.04).epsilon(1e-12));
  }
}

TEST_CASE("pgd step") {
  SUBCASE("single ascent step") {
    std::vector<double> delta{0.0, 0.0};
    pgd_step(delta, std::vector<double>{1.0, -2.0}, 0.002);
    CHECK(delta[0] == doctest::Approx(0.002).epsilon(1e-15));
    CHECK(delta[1] == doctest::Approx(-0.004).epsilon(1e-15));
  }
  SUBCASE("zero gradient is stationary") {
    std::vector<double> delta{0.01, -0.02};
    const std::vector<double> before = delta;
    pgd_step(delta, std::vector<double>{0.0, 0.0}, 0.002);
    CHECK(delta == before);
  }
  SUBCASE("size mismatch rejected") {
    std::vector<double> delta{0.0, 0.0};
    CHECK_THROWS_AS(pgd_step(delta, std::vector<double>{1.0}, 0.1),
                    std::invalid_argument);
  }
}

namespace {

// Quadratic surrogate (w . delta)^2 for w = (3,4).
Tensor quadratic_objective(const Tensor& delta) {
  const Tensor w = Tensor::leaf({2}, {3.0, 4.0});
  return square(sum(mul(w, delta)));
}

}  // namespace

TEST_CASE("pgd on the linear surrogate") {
  PgdConfig cfg;  // defaults: epsilon 0.01, alpha 0.002, 20 iterations, L2
  // The quadratic objective has zero gradient at the origin, so the test
  // seeds a small non-orthogonal start.
  const std::vector<double> init{1e-6, 1e-6};

  SUBCASE("20 iterations align the perturbation with w") {
    const PgdTrace trace =
        pgd_maximize(quadratic_objective, 2, cfg, init, true);
    const double norm = vector_l2_norm(trace.delta);
    REQUIRE(norm > 0.0);
    const double cosine =
        (3.0 * trace.delta[0] + 4.0 * trace.delta[1]) / (5.0 * norm);
    CHECK(std::fabs(cosine) >= 0.99);
    CHECK(norm <= cfg.epsilon + 1e-9);
    // Closed-form maximizer is +-0.01 (0.6, 0.8); direction matches.
    CHECK(std::fabs(trace.delta[0] / norm) ==
          doctest::Approx(0.6).epsilon(0.05));
    CHECK(std::fabs(trace.delta[1] / norm) ==
          doctest::Approx(0.8).epsilon(0.05));
  }

  SUBCASE("objective history is non-decreasing") {
    const PgdTrace trace =
        pgd_maximize(quadratic_objective, 2, cfg, init, true);
    REQUIRE(trace.objective_history.size() == cfg.iterations + 1);
    for (std::size_t i = 1; i < trace.objective_history.size(); ++i) {
      CHECK(trace.objective_history[i] >=
            trace.objective_history[i - 1] - 1e-15);
    }
  }

  SUBCASE("epsilon zero pins delta at the origin") {
    PgdConfig degenerate = cfg;
    degenerate.epsilon = 0.0;
    const PgdTrace trace =
        pgd_maximize(quadratic_objective, 2, degenerate, init);
    CHECK(trace.delta == std::vector<double>{0.0, 0.0});
  }
}

TEST_CASE("shared_batch accumulates the batch-mean gradient") {
  // Two samples with gradients (1,0) and (3,0); the shared update moves
  // delta by alpha * mean = (0.004, 0).
  std::vector<double> delta{0.0, 0.0};
  const std::vector<double> g1{1.0, 0.0};
  const std::vector<double> g2{3.0, 0.0};
  std::vector<double> mean{(g1[0] + g2[0]) / 2.0, (g1[1] + g2[1]) / 2.0};
  pgd_step(delta, mean, 0.002);
  CHECK(delta[0] == doctest::Approx(0.004).epsilon(1e-15));
  CHECK(delta[1] == 0.0);
}

namespace {

FeatureSequence tiny_sequence(std::uint64_t seed) {
  Rng rng(seed);
  FeatureSequence x;
  x.video_id = "pgd";
  x.T = 6;
  x.n = 2;
  x.d = 4;
  x.obj = rng.normal_vector(x.T * x.n * x.d);
  x.ctx = rng.normal_vector(x.T * x.d);
  return x;
}

double stability_objective(const FeatureSequence& x, const ModelParams& theta,
                           const Perturbation& delta) {
  const PredictionTrace clean = forward(x, theta);
  FeatureSequence shifted = x;
  for (std::size_t i = 0; i < shifted.obj.size(); ++i)
    shifted.obj[i] += delta.obj_delta[i];
  for (std::size_t i = 0; i < shifted.ctx.size(); ++i)
    shifted.ctx[i] += delta.ctx_delta[i];
  const PredictionTrace pert = forward(shifted, theta);
  return d_out(clean.p.detached(), pert.p.detached()).scalar_value() +
         d_feat(clean.latent.detached(), pert.latent.detached())
             .scalar_value();
}

}  // namespace

TEST_CASE("find_worst_case") {
  ModelConfig model_cfg;
  model_cfg.d = 4;
  model_cfg.H = 6;
  model_cfg.heads = 2;
  const ModelParams theta = init_params(model_cfg, 7);
  const FeatureSequence x = tiny_sequence(8);

  PgdConfig cfg;
  cfg.epsilon = 0.05;
  cfg.alpha = 0.01;
  cfg.iterations = 20;

  SUBCASE("epsilon zero returns the zero perturbation") {
    PgdConfig degenerate = cfg;
    degenerate.epsilon = 0.0;
    const auto deltas = find_worst_case({&x}, theta, degenerate);
    REQUIRE(deltas.size() == 1);
    CHECK(deltas[0].norm() == 0.0);
    CHECK(stability_objective(x, theta, deltas[0]) == 0.0);
  }

  SUBCASE("result respects the ball and is deterministic") {
    const auto a = find_worst_case({&x}, theta, cfg);
    const auto b = find_worst_case({&x}, theta, cfg);
    REQUIRE(a.size() == 1);
    CHECK(a[0].norm() <= cfg.epsilon + 1e-9);
    CHECK(a[0].obj_delta == b[0].obj_delta);
    CHECK(a[0].ctx_delta == b[0].ctx_delta);
  }

  SUBCASE("PGD beats 50 random perturbations of the same norm") {
    const auto deltas = find_worst_case({&x}, theta, cfg);
    const double pgd_value = stability_objective(x, theta, deltas[0]);

    Rng rng(9);
    const std::size_t dim = x.obj.size() + x.ctx.size();
    for (int probe = 0; probe < 50; ++probe) {
      std::vector<double> direction = rng.normal_vector(dim);
      const double norm = vector_l2_norm(direction);
      Perturbation random;
      random.norm_kind = NormKind::L2;
      random.epsilon = cfg.epsilon;
      random.obj_delta.assign(direction.begin(),
                              direction.begin() + x.obj.size());
      random.ctx_delta.assign(direction.begin() + x.obj.size(),
                              direction.end());
      for (double& v : random.obj_delta) v *= cfg.epsilon / norm;
      for (double& v : random.ctx_delta) v *= cfg.epsilon / norm;
      CHECK(pgd_value >= stability_objective(x, theta, random));
    }
  }

  SUBCASE("shared_batch returns one delta for all samples") {
    const FeatureSequence y = tiny_sequence(10);
    PgdConfig shared = cfg;
    shared.mode = PgdMode::shared_batch;
    const auto deltas = find_worst_case({&x, &y}, theta, shared);
    REQUIRE(deltas.size() == 2);
    CHECK(deltas[0].obj_delta == deltas[1].obj_delta);
    CHECK(deltas[0].ctx_delta == deltas[1].ctx_delta);
    CHECK(deltas[0].norm() <= shared.epsilon + 1e-9);
  }

  SUBCASE("per_sample deltas differ across samples") {
    const FeatureSequence y = tiny_sequence(11);
    const auto deltas = find_worst_case({&x, &y}, theta, cfg);
    REQUIRE(deltas.size() == 2);
    CHECK(deltas[0].obj_delta != deltas[1].obj_delta);
  }
}
