#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "secure/evalsuite.hpp"
#include "secure/trainer.hpp"

namespace secure {

void write_bench_csv(const std::vector<BenchRow>& rows,
                     const std::filesystem::path& p);
void write_bench_json(const std::vector<BenchRow>& rows,
                      const std::filesystem::path& p);
void write_certification_csv(const std::vector<std::pair<std::string,
                                                         CertificationResult>>&
                                 results,
                             const std::filesystem::path& p);
void write_certification_json(
    const std::vector<std::pair<std::string, CertificationResult>>& results,
    const std::filesystem::path& p);
void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& p);
void write_ablation_json(const std::vector<AblationRow>& rows,
                         const std::filesystem::path& p);

/// One probability trajectory to plot: clean and perturbed series share a
/// video id and condition label.
struct TrajectorySeries {
  std::string video_id;
  std::string condition;  // "clean" or a perturbation label
  std::vector<double> p;
};

void write_trajectories_csv(const std::vector<TrajectorySeries>& series,
                            const std::filesystem::path& p);
std::vector<TrajectorySeries> read_trajectories_csv(
    const std::filesystem::path& p);

/// Minimal dependency-free line chart; one polyline per series.
void write_svg_chart(const std::string& title,
                     const std::vector<TrajectorySeries>& series,
                     const std::filesystem::path& p);

/// Per-run metadata: command, echoed config, inputs, outputs with content
/// checksums, wall-clock stamps. Written once, atomically, when the command
/// finishes; the deterministic artifacts live next to it.
class RunManifest {
 public:
  RunManifest(std::string command, std::uint64_t seed);
  void set_config(const std::string& config_json_text);
  void add_input(const std::filesystem::path& p);
  void add_output(const std::filesystem::path& p);  // checksummed at write
  void write(const std::filesystem::path& run_dir) const;

 private:
  std::string command_;
  std::uint64_t seed_;
  std::string config_json_;
  std::vector<std::string> inputs_;
  std::vector<std::filesystem::path> outputs_;
  std::string started_at_;
};

std::string timestamp_utc();

}  // namespace secure
