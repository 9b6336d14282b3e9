#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace secure {

/// Video-level ground truth: accident flag, accident frame (1-based, only
/// meaningful for positives) and frame rate.
struct VideoLabel {
  int l_v = 0;
  std::size_t tau = 0;
  int fps = 10;
};

/// Per-video model input: object features (T x n x d) and frame context
/// features (T x d), both row-major.
struct FeatureSequence {
  std::string video_id;
  std::size_t T = 0, n = 0, d = 0;
  std::vector<double> obj;  // T*n*d
  std::vector<double> ctx;  // T*d
};

struct Dataset {
  std::size_t T = 0, n = 0, d = 0;
  int fps = 10;
  std::string split = "train";
  std::uint64_t seed = 0;
  std::vector<FeatureSequence> features;
  std::vector<VideoLabel> labels;

  std::size_t size() const { return features.size(); }
};

struct SynthConfig {
  std::size_t num_videos = 200;
  double positive_fraction = 0.5;
  std::size_t T = 50;
  std::size_t n = 5;
  std::size_t d = 32;
  int fps = 10;
  double signal_strength = 2.0;
  double noise_std = 1.0;
  std::size_t ramp_len = 15;
  std::string split = "train";
};

/// Deterministic synthetic accident scenarios. Positives embed a ramp along
/// a per-seed unit "risk direction" u into every object and context vector,
/// rising linearly from frame max(1, tau - ramp_len) to signal_strength at
/// tau and holding afterwards; tau is drawn uniformly from [0.6T, 0.9T].
/// Noise along u is drawn once per video per slot (frame-constant) and the
/// remaining per-frame noise is orthogonal to u, so the u-projection of the
/// mean frame features is exactly the baseline offset plus the ramp. The
/// same construction applies to negatives (ramp zero), so at
/// signal_strength = 0 the two classes are generated identically.
/// Values are quantized to 32-bit floats to match the on-disk format.
Dataset generate_synthetic(const SynthConfig& cfg, std::uint64_t seed);

/// The per-seed risk direction used by generate_synthetic; shared between
/// splits so train and test carry the same signal.
std::vector<double> risk_direction(std::size_t d, std::uint64_t seed);

/// SECF layout: <dir>/dataset.json manifest plus one little-endian float32
/// blob per video (object features first, then context features).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace secure
