#include "secure/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "secure/rng.hpp"
#include "secure/util.hpp"

namespace secure {

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_params() {
  return {
      {"ofa_wq", &ofa_wq},   {"ofa_wk", &ofa_wk},   {"ofa_wv", &ofa_wv},
      {"ofa_wo", &ofa_wo},   {"ctx_w1", &ctx_w1},   {"ctx_b1", &ctx_b1},
      {"ctx_w2", &ctx_w2},   {"ctx_b2", &ctx_b2},   {"gru1_wz", &gru1.wz},
      {"gru1_uz", &gru1.uz}, {"gru1_bz", &gru1.bz}, {"gru1_wr", &gru1.wr},
      {"gru1_ur", &gru1.ur}, {"gru1_br", &gru1.br}, {"gru1_wh", &gru1.wh},
      {"gru1_uh", &gru1.uh}, {"gru1_bh", &gru1.bh}, {"gru2_wz", &gru2.wz},
      {"gru2_uz", &gru2.uz}, {"gru2_bz", &gru2.bz}, {"gru2_wr", &gru2.wr},
      {"gru2_ur", &gru2.ur}, {"gru2_br", &gru2.br}, {"gru2_wh", &gru2.wh},
      {"gru2_uh", &gru2.uh}, {"gru2_bh", &gru2.bh}, {"head_w1", &head_w1},
      {"head_b1", &head_b1}, {"head_w2", &head_w2}, {"head_b2", &head_b2},
      {"mha_wq", &mha_wq},   {"mha_wk", &mha_wk},   {"mha_wv", &mha_wv},
      {"mha_wo", &mha_wo},   {"aux_w1", &aux_w1},   {"aux_b1", &aux_b1},
      {"aux_w2", &aux_w2},   {"aux_b2", &aux_b2},   {"rho1", &rho1},
      {"rho2", &rho2},
  };
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_params()
    const {
  auto mutable_view = const_cast<ModelParams*>(this)->named_params();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, t] : mutable_view) out.emplace_back(name, t);
  return out;
}

ModelParams ModelParams::clone(bool requires_grad) const {
  ModelParams out;
  out.d = d;
  out.H = H;
  out.heads = heads;
  out.mu1 = mu1;
  out.mu2 = mu2;
  auto src = named_params();
  auto dst = out.named_params();
  for (std::size_t i = 0; i < src.size(); ++i) {
    *dst[i].second = src[i].second->detached(requires_grad);
  }
  return out;
}

void ModelParams::copy_values_from(const ModelParams& other) {
  auto src = other.named_params();
  auto dst = named_params();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i].second->set_values(src[i].second->values());
  }
}

void ModelParams::zero_grads() {
  for (auto& [name, t] : named_params()) t->zero_grad();
}

void ModelParams::project_rho_floor(double floor) {
  for (Tensor* rho : {&rho1, &rho2}) {
    if (rho->values()[0] < floor) rho->set_values({floor});
  }
}

std::uint64_t ModelParams::value_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, t] : named_params()) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(t->values(), h);
  }
  return h;
}

namespace {

Tensor init_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::leaf({rows, cols}, std::move(v), true);
}

Tensor init_bias(std::size_t len) {
  return Tensor::zeros({len}, true);
}

GruParams init_gru(Rng& rng, std::size_t in, std::size_t hidden) {
  GruParams g;
  g.wz = init_matrix(rng, hidden, in);
  g.uz = init_matrix(rng, hidden, hidden);
  g.bz = init_bias(hidden);
  g.wr = init_matrix(rng, hidden, in);
  g.ur = init_matrix(rng, hidden, hidden);
  g.br = init_bias(hidden);
  g.wh = init_matrix(rng, hidden, in);
  g.uh = init_matrix(rng, hidden, hidden);
  g.bh = init_bias(hidden);
  return g;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.H % 2 != 0)
    throw ConfigError("init_params: H must be even for positional encoding");
  if (cfg.heads == 0 || cfg.H % cfg.heads != 0)
    throw ConfigError("init_params: heads must divide H");
  if (cfg.d == 0) throw ConfigError("init_params: d must be positive");

  Rng rng(child_seed(seed, "init-params"));
  ModelParams p;
  p.d = cfg.d;
  p.H = cfg.H;
  p.heads = cfg.heads;
  p.ofa_wq = init_matrix(rng, cfg.d, cfg.d);
  p.ofa_wk = init_matrix(rng, cfg.d, cfg.d);
  p.ofa_wv = init_matrix(rng, cfg.d, cfg.d);
  p.ofa_wo = init_matrix(rng, cfg.d, cfg.d);
  p.ctx_w1 = init_matrix(rng, cfg.d, cfg.d);
  p.ctx_b1 = init_bias(cfg.d);
  p.ctx_w2 = init_matrix(rng, cfg.d, cfg.d);
  p.ctx_b2 = init_bias(cfg.d);
  p.gru1 = init_gru(rng, 2 * cfg.d, cfg.H);
  p.gru2 = init_gru(rng, cfg.H, cfg.H);
  p.head_w1 = init_matrix(rng, cfg.H, cfg.H);
  p.head_b1 = init_bias(cfg.H);
  p.head_w2 = init_matrix(rng, 1, cfg.H);
  p.head_b2 = init_bias(1);
  p.mha_wq = init_matrix(rng, cfg.H, cfg.H);
  p.mha_wk = init_matrix(rng, cfg.H, cfg.H);
  p.mha_wv = init_matrix(rng, cfg.H, cfg.H);
  p.mha_wo = init_matrix(rng, cfg.H, cfg.H);
  p.aux_w1 = init_matrix(rng, cfg.H, cfg.H);
  p.aux_b1 = init_bias(cfg.H);
  p.aux_w2 = init_matrix(rng, 1, cfg.H);
  p.aux_b2 = init_bias(1);
  p.rho1 = Tensor::scalar(1.0, true);  // uncertainty coefficients start at 1
  p.rho2 = Tensor::scalar(1.0, true);
  return p;
}

Tensor ofa_attention(const Tensor& obj_t, const Tensor& ctx_t,
                     const ModelParams& params,
                     std::vector<double>* attn_out) {
  if (obj_t.rank() != 2 || obj_t.shape()[1] != params.d ||
      ctx_t.shape() != Shape{params.d}) {
    throw std::invalid_argument("ofa_attention: shape mismatch " +
                                shape_str(obj_t.shape()) + " / " +
                                shape_str(ctx_t.shape()));
  }
  const Tensor q = matmul(params.ofa_wq, ctx_t);               // {d}
  const Tensor keys = matmul(obj_t, transpose(params.ofa_wk));  // {n,d}
  const Tensor vals = matmul(obj_t, transpose(params.ofa_wv));  // {n,d}
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params.d));
  const Tensor scores = scale(matmul(keys, q), inv_sqrt_d);     // {n}
  const Tensor attn = softmax(scores);
  if (attn_out) *attn_out = attn.values();
  const Tensor summary = matmul(transpose(vals), attn);         // {d}
  return matmul(params.ofa_wo, summary);
}

Tensor context_refine(const Tensor& ctx_t, const ModelParams& params) {
  const Tensor hidden =
      tanh(add(matmul(params.ctx_w1, ctx_t), params.ctx_b1));
  return add(matmul(params.ctx_w2, hidden), params.ctx_b2);
}

Tensor gru_cell(const GruParams& g, const Tensor& x_t, const Tensor& h_prev) {
  const Tensor z =
      sigmoid(add(add(matmul(g.wz, x_t), matmul(g.uz, h_prev)), g.bz));
  const Tensor r =
      sigmoid(add(add(matmul(g.wr, x_t), matmul(g.ur, h_prev)), g.br));
  const Tensor cand =
      tanh(add(add(matmul(g.wh, x_t), matmul(g.uh, mul(r, h_prev))), g.bh));
  const Tensor ones = Tensor::leaf({z.numel()}, std::vector<double>(z.numel(), 1.0));
  return add(mul(sub(ones, z), h_prev), mul(z, cand));
}

Tensor positional_encoding(std::size_t T, std::size_t H) {
  if (H % 2 != 0)
    throw std::invalid_argument("positional_encoding: H must be even");
  std::vector<double> pe(T * H);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < H / 2; ++i) {
      const double freq =
          std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                static_cast<double>(H));
      pe[t * H + 2 * i] = std::sin(static_cast<double>(t) / freq);
      pe[t * H + 2 * i + 1] = std::cos(static_cast<double>(t) / freq);
    }
  }
  return Tensor::leaf({T, H}, std::move(pe));
}

Tensor multi_head_self_attention(const Tensor& x, const ModelParams& params,
                                 std::vector<std::vector<double>>* attn_out) {
  const std::size_t H = params.H, heads = params.heads, hd = H / heads;
  const Tensor q = matmul(x, transpose(params.mha_wq));  // {T,H}
  const Tensor k = matmul(x, transpose(params.mha_wk));
  const Tensor v = matmul(x, transpose(params.mha_wv));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * hd, (h + 1) * hd);
    const Tensor kh = slice_cols(k, h * hd, (h + 1) * hd);
    const Tensor vh = slice_cols(v, h * hd, (h + 1) * hd);
    const Tensor attn = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt));
    if (attn_out) attn_out->push_back(attn.values());
    head_outputs.push_back(matmul(attn, vh));  // {T,hd}
  }
  return matmul(concat_cols(head_outputs), transpose(params.mha_wo));
}

PredictionTrace forward(const Tensor& obj, const Tensor& ctx,
                        const ModelParams& params, const ForwardOptions& opts) {
  if (obj.rank() != 3 || obj.shape()[1] == 0 || obj.shape()[2] != params.d ||
      ctx.rank() != 2 || ctx.shape()[1] != params.d ||
      ctx.shape()[0] != obj.shape()[0]) {
    throw std::invalid_argument("forward: input shapes " +
                                shape_str(obj.shape()) + " / " +
                                shape_str(ctx.shape()) +
                                " do not match model d=" +
                                std::to_string(params.d));
  }
  const std::size_t T = obj.shape()[0];
  const std::size_t H = params.H;

  PredictionTrace trace;
  std::vector<Tensor> probs, h1_rows, h2_rows, obj_rows, ctx_rows;
  probs.reserve(T);
  Tensor h1_prev = Tensor::zeros({H});
  Tensor h2_prev = Tensor::zeros({H});
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor obj_t = slice(obj, t);  // {n,d}
    const Tensor ctx_t = slice(ctx, t);  // {d}
    const Tensor refined_obj = ofa_attention(obj_t, ctx_t, params);
    const Tensor refined_ctx = context_refine(ctx_t, params);
    const Tensor fused = concat({refined_obj, refined_ctx});  // {2d}
    const Tensor h1 = gru_cell(params.gru1, fused, h1_prev);
    const Tensor h2 = gru_cell(params.gru2, h1, h2_prev);
    const Tensor hidden = tanh(add(matmul(params.head_w1, h2), params.head_b1));
    const Tensor logit = add(matmul(params.head_w2, hidden), params.head_b2);
    probs.push_back(sigmoid(logit));
    h1_rows.push_back(h1);
    h2_rows.push_back(h2);
    obj_rows.push_back(refined_obj);
    ctx_rows.push_back(refined_ctx);
    h1_prev = h1;
    h2_prev = h2;
  }
  trace.p = concat(probs);                 // {T}
  trace.h1 = stack_rows(h1_rows);          // {T,H}
  trace.h2 = stack_rows(h2_rows);          // {T,H}
  trace.latent = reshape(trace.h2, {T * H});
  trace.refined_obj = stack_rows(obj_rows);
  trace.refined_ctx = stack_rows(ctx_rows);

  Tensor enc = trace.h2;
  if (opts.use_positional_encoding) {
    enc = add(enc, positional_encoding(T, H));
  }
  const Tensor pooled = mean_axis0(multi_head_self_attention(enc, params));
  const Tensor aux_hidden =
      tanh(add(matmul(params.aux_w1, pooled), params.aux_b1));
  trace.p_e =
      sigmoid(add(matmul(params.aux_w2, aux_hidden), params.aux_b2));
  return trace;
}

PredictionTrace forward(const FeatureSequence& x, const ModelParams& params,
                        const ForwardOptions& opts) {
  const Tensor obj = Tensor::leaf({x.T, x.n, x.d}, x.obj);
  const Tensor ctx = Tensor::leaf({x.T, x.d}, x.ctx);
  return forward(obj, ctx, params, opts);
}

std::vector<double> latent_view(const PredictionTrace& trace) {
  return trace.latent.values();
}

// --- checkpoint io ---------------------------------------------------------

namespace {
constexpr char kMagic[] = "SECKPT1\n";
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& p,
                     const std::string& role, std::uint64_t seed) {
  nlohmann::json header;
  header["d"] = params.d;
  header["H"] = params.H;
  header["heads"] = params.heads;
  header["mu1"] = params.mu1;
  header["mu2"] = params.mu2;
  header["t_agnostic"] = true;  // weights are shared across frames
  header["seed"] = seed;
  header["role"] = role;
  auto table = nlohmann::json::array();
  for (const auto& [name, t] : params.named_params()) {
    table.push_back({{"name", name}, {"shape", t->shape()},
                     {"count", t->numel()}});
  }
  header["params"] = std::move(table);
  const std::string header_text = header.dump();

  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_checkpoint: cannot open " + p.string());
  out.write(kMagic, 8);
  const auto len = static_cast<std::uint32_t>(header_text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header_text.data(), static_cast<std::streamsize>(len));
  for (const auto& [name, t] : params.named_params()) {
    out.write(reinterpret_cast<const char*>(t->values().data()),
              static_cast<std::streamsize>(t->numel() * sizeof(double)));
  }
  if (!out) throw IoError("save_checkpoint: short write to " + p.string());
}

ModelParams load_checkpoint(const std::filesystem::path& p,
                            CheckpointInfo* info) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + p.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError("load_checkpoint: " + p.string() +
                  " is not a SECKPT1 checkpoint");
  }
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string header_text(len, '\0');
  in.read(header_text.data(), len);
  if (!in) throw IoError("load_checkpoint: truncated header in " + p.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_checkpoint: malformed header in " + p.string() + ": " +
                  e.what());
  }

  ModelConfig cfg;
  cfg.d = header.at("d").get<std::size_t>();
  cfg.H = header.at("H").get<std::size_t>();
  cfg.heads = header.at("heads").get<std::size_t>();
  ModelParams params = init_params(cfg, 0);
  params.mu1 = header.value("mu1", 1.0);
  params.mu2 = header.value("mu2", 1.0);
  if (info) {
    info->role = header.value("role", std::string("baseline"));
    info->seed = header.value("seed", std::uint64_t{0});
  }

  auto named = params.named_params();
  const auto& table = header.at("params");
  if (table.size() != named.size()) {
    throw IoError("load_checkpoint: parameter table size mismatch in " +
                  p.string());
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& entry = table[i];
    if (entry.at("name").get<std::string>() != named[i].first) {
      throw IoError("load_checkpoint: unexpected parameter '" +
                    entry.at("name").get<std::string>() + "' in " + p.string());
    }
    const auto count = entry.at("count").get<std::size_t>();
    if (count != named[i].second->numel()) {
      throw IoError("load_checkpoint: size mismatch for parameter '" +
                    named[i].first + "' in " + p.string());
    }
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) {
      throw IoError("load_checkpoint: unexpected end of data reading '" +
                    named[i].first + "' from " + p.string());
    }
    named[i].second->set_values(values);
  }
  return params;
}

}  // namespace secure
