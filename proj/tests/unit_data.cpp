#include <cstdio>
#include <doctest.h>
#include <filesystem>
#include <fstream>

#include "secure/data.hpp"
#include "secure/util.hpp"

using namespace secure;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.num_videos = 6;
  cfg.positive_fraction = 0.5;
  cfg.T = 16;
  cfg.n = 3;
  cfg.d = 8;
  cfg.ramp_len = 5;
  return cfg;
}

fs::path temp_dir(const char* tag) {
  const fs::path dir = fs::temp_directory_path() /
                       (std::string("secure_test_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::uint64_t dataset_checksum(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& seq : ds.features) {
    h = fnv1a64(seq.video_id.data(), seq.video_id.size(), h);
    h = fnv1a64(seq.obj, h);
    h = fnv1a64(seq.ctx, h);
  }
  for (const auto& label : ds.labels) {
    h = fnv1a64(&label.l_v, sizeof label.l_v, h);
    h = fnv1a64(&label.tau, sizeof label.tau, h);
  }
  return h;
}

double mean_projection(const FeatureSequence& seq,
                       const std::vector<double>& u, std::size_t frame) {
  // Projection of the mean over (objects + context) onto u. frame is 1-based.
  std::vector<double> mean(seq.d, 0.0);
  for (std::size_t o = 0; o < seq.n; ++o) {
    for (std::size_t j = 0; j < seq.d; ++j)
      mean[j] += seq.obj[((frame - 1) * seq.n + o) * seq.d + j];
  }
  for (std::size_t j = 0; j < seq.d; ++j)
    mean[j] += seq.ctx[(frame - 1) * seq.d + j];
  double proj = 0.0;
  for (std::size_t j = 0; j < seq.d; ++j)
    proj += mean[j] / static_cast<double>(seq.n + 1) * u[j];
  return proj;
}

}  // namespace

TEST_CASE("generation is deterministic and balanced") {
  const SynthConfig cfg = small_config();
  const Dataset a = generate_synthetic(cfg, 42);
  const Dataset b = generate_synthetic(cfg, 42);
  CHECK(dataset_checksum(a) == dataset_checksum(b));

  std::size_t positives = 0;
  for (const auto& label : a.labels) positives += label.l_v;
  CHECK(positives == 3);

  SUBCASE("exact 2/2 split for 4 videos at 0.5") {
    SynthConfig four = cfg;
    four.num_videos = 4;
    const Dataset ds = generate_synthetic(four, 9);
    std::size_t pos = 0;
    for (const auto& label : ds.labels) pos += label.l_v;
    CHECK(pos == 2);
  }

  SUBCASE("different seed changes the bytes") {
    const Dataset c = generate_synthetic(cfg, 43);
    CHECK(dataset_checksum(a) != dataset_checksum(c));
  }
}

TEST_CASE("tau lands in the anticipation window") {
  SynthConfig cfg = small_config();
  cfg.num_videos = 40;
  cfg.T = 50;
  const Dataset ds = generate_synthetic(cfg, 3);
  for (std::size_t v = 0; v < ds.size(); ++v) {
    if (ds.labels[v].l_v == 0) continue;
    CHECK(ds.labels[v].tau >= 30);  // 0.6 T
    CHECK(ds.labels[v].tau <= 45);  // 0.9 T
  }
}

TEST_CASE("positive ramp projection is non-decreasing") {
  SynthConfig cfg = small_config();
  cfg.num_videos = 12;
  const Dataset ds = generate_synthetic(cfg, 7);
  const auto u = risk_direction(cfg.d, 7);
  for (std::size_t v = 0; v < ds.size(); ++v) {
    if (ds.labels[v].l_v == 0) continue;
    const std::size_t tau = ds.labels[v].tau;
    const std::size_t start = tau > cfg.ramp_len ? tau - cfg.ramp_len : 1;
    double prev = mean_projection(ds.features[v], u, start);
    for (std::size_t t = start + 1; t <= tau; ++t) {
      const double cur = mean_projection(ds.features[v], u, t);
      CHECK(cur >= prev - 1e-9);
      prev = cur;
    }
  }
}

TEST_CASE("zero signal removes the class difference in the u direction") {
  SynthConfig cfg = small_config();
  cfg.signal_strength = 0.0;
  const Dataset ds = generate_synthetic(cfg, 21);
  const auto u = risk_direction(cfg.d, 21);
  // With no ramp every video's u-projection is constant over frames.
  for (std::size_t v = 0; v < ds.size(); ++v) {
    const double first = mean_projection(ds.features[v], u, 1);
    for (std::size_t t = 2; t <= cfg.T; ++t) {
      CHECK(mean_projection(ds.features[v], u, t) ==
            doctest::Approx(first).epsilon(1e-6));
    }
  }
}

TEST_CASE("invalid generator configs name the field") {
  SynthConfig cfg = small_config();
  cfg.positive_fraction = 1.0;
  CHECK_THROWS_WITH_AS(generate_synthetic(cfg, 0),
                       "generate_synthetic: positive_fraction must be in (0,1)",
                       ConfigError);
  cfg = small_config();
  cfg.T = 5;
  CHECK_THROWS_WITH_AS(generate_synthetic(cfg, 0),
                       "generate_synthetic: T must be >= 10", ConfigError);
}

TEST_CASE("SECF round-trip is lossless") {
  const fs::path dir = temp_dir("secf_roundtrip");
  const Dataset ds = generate_synthetic(small_config(), 5);
  save_dataset(ds, dir);
  const Dataset loaded = load_dataset(dir);

  REQUIRE(loaded.size() == ds.size());
  CHECK(loaded.T == ds.T);
  CHECK(loaded.n == ds.n);
  CHECK(loaded.d == ds.d);
  CHECK(loaded.fps == ds.fps);
  CHECK(dataset_checksum(loaded) == dataset_checksum(ds));

  SUBCASE("second save is byte-identical") {
    const fs::path dir2 = temp_dir("secf_roundtrip2");
    save_dataset(loaded, dir2);
    CHECK(checksum_file(dir / "dataset.json") ==
          checksum_file(dir2 / "dataset.json"));
    for (const auto& seq : ds.features) {
      CHECK(checksum_file(dir / (seq.video_id + ".secf")) ==
            checksum_file(dir2 / (seq.video_id + ".secf")));
    }
  }
}

TEST_CASE("corrupt SECF inputs are rejected with a reason") {
  const fs::path dir = temp_dir("secf_corrupt");
  const Dataset ds = generate_synthetic(small_config(), 5);
  save_dataset(ds, dir);

  SUBCASE("truncated blob") {
    const fs::path blob = dir / (ds.features[0].video_id + ".secf");
    const auto bytes = read_file_bytes(blob);
    write_file_bytes(blob, bytes.data(), bytes.size() / 2);
    CHECK_THROWS_WITH_AS(load_dataset(dir),
                         doctest::Contains("unexpected end of data"), IoError);
  }
  SUBCASE("missing blob names the video id") {
    fs::remove(dir / (ds.features[1].video_id + ".secf"));
    CHECK_THROWS_WITH_AS(load_dataset(dir),
                         doctest::Contains(ds.features[1].video_id.c_str()),
                         IoError);
  }
  SUBCASE("malformed manifest") {
    write_file_atomic(dir / "dataset.json", "{not json");
    CHECK_THROWS_AS(load_dataset(dir), IoError);
  }
}
