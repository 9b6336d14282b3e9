#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "secure/data.hpp"
#include "secure/tensor.hpp"

namespace secure {

struct ModelConfig {
  std::size_t d = 32;      // feature dimension
  std::size_t H = 64;      // GRU hidden size (even)
  std::size_t heads = 4;   // auxiliary attention heads (divides H)
};

struct GruParams {
  Tensor wz, uz, bz;  // update gate
  Tensor wr, ur, br;  // reset gate
  Tensor wh, uh, bh;  // candidate
};

/// All trainable weights. rho1/rho2 are the learnable uncertainty scalars of
/// the task loss; mu1/mu2 are fixed weights.
struct ModelParams {
  std::size_t d = 0, H = 0, heads = 0;
  double mu1 = 1.0, mu2 = 1.0;

  Tensor ofa_wq, ofa_wk, ofa_wv, ofa_wo;      // object focus attention, d x d
  Tensor ctx_w1, ctx_b1, ctx_w2, ctx_b2;      // context refinement
  GruParams gru1;                              // input 2d -> H
  GruParams gru2;                              // input H -> H
  Tensor head_w1, head_b1, head_w2, head_b2;  // frame head H -> H -> 1
  Tensor mha_wq, mha_wk, mha_wv, mha_wo;      // auxiliary attention, H x H
  Tensor aux_w1, aux_b1, aux_w2, aux_b2;      // auxiliary head H -> H -> 1
  Tensor rho1, rho2;                           // positive scalars

  std::vector<std::pair<std::string, Tensor*>> named_params();
  std::vector<std::pair<std::string, const Tensor*>> named_params() const;

  /// Deep copy of the current values into fresh leaves.
  ModelParams clone(bool requires_grad) const;
  void copy_values_from(const ModelParams& other);
  void zero_grads();
  /// Keeps rho1/rho2 strictly positive after an optimizer step.
  void project_rho_floor(double floor = 1e-4);
  std::uint64_t value_checksum() const;
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct ForwardOptions {
  bool use_positional_encoding = true;  // diagnostic off-switch
};

/// Everything the forward pass produces for one video.
struct PredictionTrace {
  Tensor p;             // {T} frame probabilities
  Tensor p_e;           // {1} auxiliary probability
  Tensor h1;            // {T,H} first-layer hidden states
  Tensor h2;            // {T,H} second-layer hidden states
  Tensor latent;        // {T*H} flattened h2, the representation h(x)
  Tensor refined_obj;   // {T,d} attention-pooled object summaries
  Tensor refined_ctx;   // {T,d}
};

/// Scaled dot-product attention over the frame's objects with the context
/// vector as query; returns the output-projected summary. attn_out, when
/// given, receives the attention weights.
Tensor ofa_attention(const Tensor& obj_t, const Tensor& ctx_t,
                     const ModelParams& params,
                     std::vector<double>* attn_out = nullptr);

Tensor context_refine(const Tensor& ctx_t, const ModelParams& params);

/// Standard GRU step, convention h' = (1-z) h + z h~.
Tensor gru_cell(const GruParams& g, const Tensor& x_t, const Tensor& h_prev);

/// Sinusoidal encoding, PE[t,2i] = sin(t/10000^(2i/H)), PE[t,2i+1] = cos.
Tensor positional_encoding(std::size_t T, std::size_t H);

/// Multi-head self-attention over {T,H} rows; per-row attention weights for
/// each head are appended to attn_out when given.
Tensor multi_head_self_attention(const Tensor& x, const ModelParams& params,
                                 std::vector<std::vector<double>>* attn_out =
                                     nullptr);

PredictionTrace forward(const Tensor& obj, const Tensor& ctx,
                        const ModelParams& params,
                        const ForwardOptions& opts = {});
PredictionTrace forward(const FeatureSequence& x, const ModelParams& params,
                        const ForwardOptions& opts = {});

/// Flattened h2 as a value vector (the SECURE latent h(x)).
std::vector<double> latent_view(const PredictionTrace& trace);

/// Checkpoint: "SECKPT1\n" magic, uint32 header length, JSON header
/// (dims, seed, role, parameter table), then float64 LE blobs in header
/// order.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& p,
                     const std::string& role, std::uint64_t seed);
struct CheckpointInfo {
  std::string role;
  std::uint64_t seed = 0;
};
ModelParams load_checkpoint(const std::filesystem::path& p,
                            CheckpointInfo* info = nullptr);

}  // namespace secure
