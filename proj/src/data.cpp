#include "secure/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "secure/rng.hpp"
#include "secure/util.hpp"

namespace secure {

namespace {

void validate_config(const SynthConfig& cfg) {
  if (cfg.num_videos < 2)
    throw ConfigError("generate_synthetic: num_videos must be >= 2");
  if (!(cfg.positive_fraction > 0.0 && cfg.positive_fraction < 1.0))
    throw ConfigError("generate_synthetic: positive_fraction must be in (0,1)");
  if (cfg.T < 10) throw ConfigError("generate_synthetic: T must be >= 10");
  if (cfg.n < 1) throw ConfigError("generate_synthetic: n must be >= 1");
  if (cfg.d < 1) throw ConfigError("generate_synthetic: d must be >= 1");
  if (cfg.fps < 1) throw ConfigError("generate_synthetic: fps must be >= 1");
  if (cfg.noise_std < 0.0)
    throw ConfigError("generate_synthetic: noise_std must be >= 0");
  if (cfg.signal_strength < 0.0)
    throw ConfigError("generate_synthetic: signal_strength must be >= 0");
  if (cfg.ramp_len < 1)
    throw ConfigError("generate_synthetic: ramp_len must be >= 1");
}

double quantize32(double v) { return static_cast<double>(static_cast<float>(v)); }

// One feature vector: per-frame noise orthogonal to u, plus the video's
// frame-constant offset and the ramp coefficient along u.
void fill_vector(Rng& rng, const std::vector<double>& u, double noise_std,
                 double along_u, double* out, std::size_t d) {
  double dot = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = rng.normal(0.0, noise_std);
    dot += out[i] * u[i];
  }
  for (std::size_t i = 0; i < d; ++i) {
    out[i] += (along_u - dot) * u[i];
    out[i] = quantize32(out[i]);
  }
}

}  // namespace

std::vector<double> risk_direction(std::size_t d, std::uint64_t seed) {
  Rng rng(child_seed(seed, "risk-direction"));
  std::vector<double> u = rng.normal_vector(d);
  double norm = 0.0;
  for (double v : u) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    u.assign(d, 0.0);
    u[0] = 1.0;
    return u;
  }
  for (double& v : u) v /= norm;
  return u;
}

Dataset generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  const std::vector<double> u = risk_direction(cfg.d, seed);

  Dataset ds;
  ds.T = cfg.T;
  ds.n = cfg.n;
  ds.d = cfg.d;
  ds.fps = cfg.fps;
  ds.split = cfg.split;
  ds.seed = seed;

  auto positives = static_cast<std::size_t>(
      std::llround(cfg.positive_fraction * static_cast<double>(cfg.num_videos)));
  positives = std::clamp<std::size_t>(positives, 1, cfg.num_videos - 1);

  const std::uint64_t video_base = child_seed(seed, cfg.split + "/videos");
  for (std::size_t v = 0; v < cfg.num_videos; ++v) {
    Rng rng(child_seed(video_base, v));
    VideoLabel label;
    label.fps = cfg.fps;
    label.l_v = v < positives ? 1 : 0;

    double ramp_start = 0.0, ramp_span = 1.0;
    if (label.l_v == 1) {
      const auto lo = static_cast<std::uint64_t>(
          std::ceil(0.6 * static_cast<double>(cfg.T)));
      const auto hi = static_cast<std::uint64_t>(
          std::floor(0.9 * static_cast<double>(cfg.T)));
      label.tau = rng.uniform_int(lo, hi);
      ramp_start = static_cast<double>(
          std::max<std::size_t>(1, label.tau - std::min(label.tau - 1,
                                                        cfg.ramp_len)));
      ramp_span = static_cast<double>(label.tau) - ramp_start;
      if (ramp_span <= 0.0) ramp_span = 1.0;
    }

    // Frame-constant noise along u, one draw per slot (n objects + context).
    std::vector<double> offsets = rng.normal_vector(cfg.n + 1, 0.0,
                                                    cfg.noise_std);

    FeatureSequence seq;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "%s_%04zu", cfg.split.c_str(), v);
    seq.video_id = idbuf;
    seq.T = cfg.T;
    seq.n = cfg.n;
    seq.d = cfg.d;
    seq.obj.resize(cfg.T * cfg.n * cfg.d);
    seq.ctx.resize(cfg.T * cfg.d);

    for (std::size_t t = 1; t <= cfg.T; ++t) {
      double ramp = 0.0;
      if (label.l_v == 1) {
        const auto td = static_cast<double>(t);
        if (td >= static_cast<double>(label.tau)) {
          ramp = cfg.signal_strength;
        } else if (td >= ramp_start) {
          ramp = cfg.signal_strength * (td - ramp_start) / ramp_span;
        }
      }
      for (std::size_t o = 0; o < cfg.n; ++o) {
        fill_vector(rng, u, cfg.noise_std, offsets[o] + ramp,
                    &seq.obj[((t - 1) * cfg.n + o) * cfg.d], cfg.d);
      }
      fill_vector(rng, u, cfg.noise_std, offsets[cfg.n] + ramp,
                  &seq.ctx[(t - 1) * cfg.d], cfg.d);
    }
    ds.features.push_back(std::move(seq));
    ds.labels.push_back(label);
  }
  return ds;
}

// --- SECF serialization ----------------------------------------------------

namespace {

void write_blob(const std::filesystem::path& path,
                const FeatureSequence& seq) {
  std::vector<float> buf;
  buf.reserve(seq.obj.size() + seq.ctx.size());
  for (double v : seq.obj) buf.push_back(static_cast<float>(v));
  for (double v : seq.ctx) buf.push_back(static_cast<float>(v));
  write_file_bytes(path, buf.data(), buf.size() * sizeof(float));
}

void read_blob(const std::filesystem::path& path, FeatureSequence& seq,
               const std::string& video_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("load_dataset: missing blob for video '" + video_id +
                  "': " + path.string());
  }
  const std::size_t want = seq.obj.size() + seq.ctx.size();
  std::vector<float> buf(want);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(want * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != want * sizeof(float)) {
    throw IoError("load_dataset: unexpected end of data in " + path.string() +
                  " at offset " + std::to_string(in.gcount()));
  }
  for (std::size_t i = 0; i < seq.obj.size(); ++i)
    seq.obj[i] = static_cast<double>(buf[i]);
  for (std::size_t i = 0; i < seq.ctx.size(); ++i)
    seq.ctx[i] = static_cast<double>(buf[seq.obj.size() + i]);
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("save_dataset: cannot create " + dir.string());

  nlohmann::json manifest;
  manifest["format"] = "SECF";
  manifest["T"] = ds.T;
  manifest["n"] = ds.n;
  manifest["d"] = ds.d;
  manifest["fps"] = ds.fps;
  manifest["split"] = ds.split;
  manifest["seed"] = ds.seed;
  auto videos = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& seq = ds.features[i];
    const auto& label = ds.labels[i];
    const std::string blob = seq.video_id + ".secf";
    videos.push_back({{"video_id", seq.video_id},
                      {"l_v", label.l_v},
                      {"tau", label.tau},
                      {"blob_file", blob}});
    write_blob(dir / blob, seq);
  }
  manifest["videos"] = std::move(videos);
  write_file_atomic(dir / "dataset.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "dataset.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("load_dataset: cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_dataset: malformed manifest " + manifest_path.string() +
                  ": " + e.what());
  }

  Dataset ds;
  try {
    ds.T = manifest.at("T").get<std::size_t>();
    ds.n = manifest.at("n").get<std::size_t>();
    ds.d = manifest.at("d").get<std::size_t>();
    ds.fps = manifest.at("fps").get<int>();
    ds.split = manifest.value("split", std::string("train"));
    ds.seed = manifest.value("seed", std::uint64_t{0});
    for (const auto& v : manifest.at("videos")) {
      FeatureSequence seq;
      seq.video_id = v.at("video_id").get<std::string>();
      seq.T = ds.T;
      seq.n = ds.n;
      seq.d = ds.d;
      seq.obj.resize(ds.T * ds.n * ds.d);
      seq.ctx.resize(ds.T * ds.d);
      VideoLabel label;
      label.l_v = v.at("l_v").get<int>();
      label.tau = v.at("tau").get<std::size_t>();
      label.fps = ds.fps;
      if (label.l_v == 1 && (label.tau < 1 || label.tau > ds.T)) {
        throw IoError("load_dataset: video '" + seq.video_id +
                      "' has tau out of range");
      }
      read_blob(dir / v.at("blob_file").get<std::string>(), seq, seq.video_id);
      ds.features.push_back(std::move(seq));
      ds.labels.push_back(label);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_dataset: malformed manifest " + manifest_path.string() +
                  ": " + e.what());
  }
  if (ds.features.empty())
    throw IoError("load_dataset: dataset has no videos");
  return ds;
}

}  // namespace secure
