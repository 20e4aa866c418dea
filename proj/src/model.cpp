#include "skillprobe/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "skillprobe/error.hpp"
#include "skillprobe/io.hpp"
#include "skillprobe/kernels.hpp"

namespace skillprobe {

void ModelConfig::validate() const {
  if (d < 1 || n_layers < 1 || m < 1 || n_heads < 1 || vocab_size < 1 || max_seq_len < 1) {
    fail(ErrorCode::kInvalidArgument, "model config counts must all be >= 1");
  }
  if (d % n_heads != 0) {
    fail(ErrorCode::kInvalidArgument, "d must be divisible by n_heads");
  }
  if (head_dim() % 2 != 0) {
    fail(ErrorCode::kInvalidArgument, "head dimension must be even for rotary encoding");
  }
}

ParamLayout::ParamLayout(const ModelConfig& cfg) {
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto m = static_cast<std::size_t>(cfg.m);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  std::size_t at = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    std::size_t count = 1;
    for (auto s : shape) count *= s;
    tensors.push_back({std::move(name), at, std::move(shape)});
    const std::size_t off = at;
    at += count;
    return off;
  };
  tok_emb = add("tok_emb", {v, d});
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerOffsets o{};
    o.attn_norm = add(p + "attn_norm", {d});
    o.wq = add(p + "wq", {d, d});
    o.wk = add(p + "wk", {d, d});
    o.wv = add(p + "wv", {d, d});
    o.wo = add(p + "wo", {d, d});
    o.ffn_norm = add(p + "ffn_norm", {d});
    o.w1 = add(p + "w1", {m, d});
    o.w2 = add(p + "w2", {m, d});
    o.w3 = add(p + "w3", {d, m});
    layers.push_back(o);
  }
  final_norm = add("final_norm", {d});
  head = cfg.tied_head ? tok_emb : add("head", {v, d});
  total = at;
}

WeightsView::WeightsView(const ModelConfig& cfg, std::span<const double> data)
    : cfg_(cfg), layout_(cfg), data_(data) {
  if (data.size() != layout_.total) {
    fail(ErrorCode::kShapeError, "weight buffer has " + std::to_string(data.size()) +
                                     " values, config needs " + std::to_string(layout_.total));
  }
}

LayerWeights WeightsView::layer(int l) const {
  const auto& o = layout_.layers[static_cast<std::size_t>(l)];
  const double* p = data_.data();
  return {p + o.attn_norm, p + o.wq, p + o.wk, p + o.wv, p + o.wo,
          p + o.ffn_norm,  p + o.w1, p + o.w2, p + o.w3};
}

std::string hash_weights(std::span<const double> weights) {
  std::string bytes;
  append_f64le(bytes, weights);
  return sha256_hex(bytes);
}

ModelParams::ModelParams(ModelConfig cfg, std::vector<double> weights) : cfg_(cfg) {
  cfg_.validate();
  const ParamLayout layout(cfg_);
  if (weights.size() != layout.total) {
    fail(ErrorCode::kShapeError, "weight buffer has " + std::to_string(weights.size()) +
                                     " values, config needs " + std::to_string(layout.total));
  }
  if (!std::all_of(weights.begin(), weights.end(), [](double x) { return std::isfinite(x); })) {
    fail(ErrorCode::kShapeError, "model weights contain non-finite values");
  }
  hash_ = hash_weights(weights);
  weights_ = std::make_shared<const std::vector<double>>(std::move(weights));
}

std::vector<double> ModelParams::initial_weights(const ModelConfig& cfg) {
  cfg.validate();
  const ParamLayout layout(cfg);
  std::vector<double> w(layout.total, 0.0);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](std::size_t off, std::size_t count, double scale) {
    for (std::size_t i = 0; i < count; ++i) w[off + i] = scale * normal(rng);
  };
  auto ones = [&](std::size_t off, std::size_t count) {
    std::fill_n(w.begin() + static_cast<std::ptrdiff_t>(off), count, 1.0);
  };
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto m = static_cast<std::size_t>(cfg.m);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  const double base = 0.02;
  const double resid = base / std::sqrt(2.0 * cfg.n_layers);
  fill(layout.tok_emb, v * d, base);
  for (const auto& o : layout.layers) {
    ones(o.attn_norm, d);
    fill(o.wq, d * d, base);
    fill(o.wk, d * d, base);
    fill(o.wv, d * d, base);
    fill(o.wo, d * d, resid);
    ones(o.ffn_norm, d);
    fill(o.w1, m * d, base);
    fill(o.w2, m * d, base);
    fill(o.w3, d * m, resid);
  }
  ones(layout.final_norm, d);
  if (!cfg.tied_head) fill(layout.head, v * d, base);
  return w;
}

ModelParams ModelParams::initialize(const ModelConfig& cfg) {
  return ModelParams(cfg, initial_weights(cfg));
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// y = g * x / rms(x); stores 1/rms per row.
void rmsnorm_forward(const double* x, const double* g, double* y, double* inv_rms,
                     std::size_t rows, std::size_t d) {
  const auto& K = kernels::active();
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xt = x + t * d;
    const double ms = K.dot(xt, xt, d) / static_cast<double>(d);
    const double r = 1.0 / std::sqrt(ms + kNormEps);
    inv_rms[t] = r;
    double* yt = y + t * d;
    for (std::size_t j = 0; j < d; ++j) yt[j] = g[j] * xt[j] * r;
  }
}

// dx += d(rmsnorm)/dx^T dy ; dg += dy * x / rms.
void rmsnorm_backward(const double* x, const double* g, const double* inv_rms, const double* dy,
                      double* dx, double* dg, std::size_t rows, std::size_t d) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xt = x + t * d;
    const double* dyt = dy + t * d;
    const double r = inv_rms[t];
    double proj = 0.0;
    for (std::size_t j = 0; j < d; ++j) proj += g[j] * dyt[j] * xt[j];
    const double coef = proj * r * r * r / static_cast<double>(d);
    double* dxt = dx + t * d;
    for (std::size_t j = 0; j < d; ++j) dxt[j] += r * g[j] * dyt[j] - coef * xt[j];
    if (dg) {
      for (std::size_t j = 0; j < d; ++j) dg[j] += dyt[j] * xt[j] * r;
    }
  }
}

void build_rope(const ModelConfig& cfg, std::size_t seq_len, Workspace& ws) {
  const auto half = static_cast<std::size_t>(cfg.head_dim() / 2);
  if (ws.rope_head_dim == cfg.head_dim() && ws.rope_cos.size() == seq_len * half) return;
  ws.rope_head_dim = cfg.head_dim();
  ws.rope_cos.resize(seq_len * half);
  ws.rope_sin.resize(seq_len * half);
  for (std::size_t t = 0; t < seq_len; ++t) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::pow(kRopeBase, -2.0 * static_cast<double>(i) /
                                                  static_cast<double>(cfg.head_dim()));
      const double angle = static_cast<double>(t) * freq;
      ws.rope_cos[t * half + i] = std::cos(angle);
      ws.rope_sin[t * half + i] = std::sin(angle);
    }
  }
}

// Rotates consecutive pairs within each head; `sign` = -1 applies the inverse.
void apply_rope(double* x, std::size_t seq_len, const ModelConfig& cfg, const Workspace& ws,
                double sign) {
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto hd = static_cast<std::size_t>(cfg.head_dim());
  const std::size_t half = hd / 2;
  for (std::size_t t = 0; t < seq_len; ++t) {
    const double* c = ws.rope_cos.data() + t * half;
    const double* s = ws.rope_sin.data() + t * half;
    for (int h = 0; h < cfg.n_heads; ++h) {
      double* xh = x + t * d + static_cast<std::size_t>(h) * hd;
      for (std::size_t i = 0; i < half; ++i) {
        const double x0 = xh[2 * i];
        const double x1 = xh[2 * i + 1];
        const double sn = sign * s[i];
        xh[2 * i] = x0 * c[i] - x1 * sn;
        xh[2 * i + 1] = x0 * sn + x1 * c[i];
      }
    }
  }
}

void check_length(const ModelConfig& cfg, std::size_t seq_len) {
  if (seq_len > static_cast<std::size_t>(cfg.max_seq_len)) {
    fail(ErrorCode::kSequenceLength, "sequence length " + std::to_string(seq_len) +
                                         " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
}

}  // namespace

double silu(double z) { return z * sigmoid(z); }

std::vector<double> ffn_activation(std::span<const double> h, const LayerWeights& layer,
                                   const ModelConfig& cfg) {
  if (h.size() != static_cast<std::size_t>(cfg.d)) {
    fail(ErrorCode::kShapeError, "hidden state has dimension " + std::to_string(h.size()) +
                                     ", expected " + std::to_string(cfg.d));
  }
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto m = static_cast<std::size_t>(cfg.m);
  const auto& K = kernels::active();
  std::vector<double> act(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double g = K.dot(layer.w1 + i * d, h.data(), d);
    const double u = K.dot(layer.w2 + i * d, h.data(), d);
    act[i] = g * silu(u);
  }
  return act;
}

std::vector<double> ffn_output(std::span<const double> h, const LayerWeights& layer,
                               const ModelConfig& cfg) {
  const auto act = ffn_activation(h, layer, cfg);
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto m = static_cast<std::size_t>(cfg.m);
  std::vector<double> out(d);
  kernels::active().matmul_nt(act.data(), layer.w3, out.data(), 1, d, m);
  return out;
}

void append_embeddings(const WeightsView& w, std::span<const TokenId> ids,
                       std::vector<double>& out) {
  const auto d = static_cast<std::size_t>(w.config().d);
  for (TokenId id : ids) {
    if (id < 0 || id >= w.config().vocab_size) {
      fail(ErrorCode::kShapeError, "token id " + std::to_string(id) + " outside vocabulary");
    }
    const double* row = w.tok_emb() + static_cast<std::size_t>(id) * d;
    out.insert(out.end(), row, row + d);
  }
}

void forward(const WeightsView& w, std::span<const double> x0, std::size_t seq_len,
             std::size_t logits_from, Workspace& ws) {
  const ModelConfig& cfg = w.config();
  check_length(cfg, seq_len);
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto m = static_cast<std::size_t>(cfg.m);
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto H = static_cast<std::size_t>(cfg.n_heads);
  const auto hd = static_cast<std::size_t>(cfg.head_dim());
  const std::size_t T = seq_len;
  if (x0.size() != T * d) {
    fail(ErrorCode::kShapeError, "embedded sequence has " + std::to_string(x0.size()) +
                                     " values, expected " + std::to_string(T * d));
  }
  logits_from = std::min(logits_from, T);
  const auto& K = kernels::active();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  ws.seq_len = T;
  ws.logits_from = logits_from;
  ws.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  build_rope(cfg, T, ws);

  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> tmp_d(T * d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights lw = w.layer(l);
    auto& c = ws.layers[static_cast<std::size_t>(l)];
    c.x_in = x;
    c.inv_rms_attn.resize(T);
    c.a.resize(T * d);
    rmsnorm_forward(x.data(), lw.attn_norm, c.a.data(), c.inv_rms_attn.data(), T, d);
    c.q.resize(T * d);
    c.k.resize(T * d);
    c.v.resize(T * d);
    K.matmul_nt(c.a.data(), lw.wq, c.q.data(), T, d, d);
    K.matmul_nt(c.a.data(), lw.wk, c.k.data(), T, d, d);
    K.matmul_nt(c.a.data(), lw.wv, c.v.data(), T, d, d);
    apply_rope(c.q.data(), T, cfg, ws, 1.0);
    apply_rope(c.k.data(), T, cfg, ws, 1.0);

    c.probs.assign(H * T * T, 0.0);
    c.attn_out.assign(T * d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t t = 0; t < T; ++t) {
        const double* qt = c.q.data() + t * d + off;
        double* p = c.probs.data() + (h * T + t) * T;
        double mx = -INFINITY;
        for (std::size_t s = 0; s <= t; ++s) {
          const double* ks = c.k.data() + s * d + off;
          double acc = 0.0;
          for (std::size_t j = 0; j < hd; ++j) acc += qt[j] * ks[j];
          p[s] = acc * scale;
          mx = std::max(mx, p[s]);
        }
        double z = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          p[s] = std::exp(p[s] - mx);
          z += p[s];
        }
        const double inv = 1.0 / z;
        double* ot = c.attn_out.data() + t * d + off;
        for (std::size_t s = 0; s <= t; ++s) {
          p[s] *= inv;
          const double* vs = c.v.data() + s * d + off;
          for (std::size_t j = 0; j < hd; ++j) ot[j] += p[s] * vs[j];
        }
      }
    }
    K.matmul_nt(c.attn_out.data(), lw.wo, tmp_d.data(), T, d, d);
    for (std::size_t i = 0; i < T * d; ++i) x[i] += tmp_d[i];
    c.x_mid = x;

    c.inv_rms_ffn.resize(T);
    c.b.resize(T * d);
    rmsnorm_forward(x.data(), lw.ffn_norm, c.b.data(), c.inv_rms_ffn.data(), T, d);
    c.u1.resize(T * m);
    c.u2.resize(T * m);
    c.act.resize(T * m);
    K.matmul_nt(c.b.data(), lw.w1, c.u1.data(), T, m, d);
    K.matmul_nt(c.b.data(), lw.w2, c.u2.data(), T, m, d);
    for (std::size_t i = 0; i < T * m; ++i) c.act[i] = c.u1[i] * silu(c.u2[i]);
    K.matmul_nt(c.act.data(), lw.w3, tmp_d.data(), T, d, m);
    for (std::size_t i = 0; i < T * d; ++i) x[i] += tmp_d[i];
  }
  ws.x_final = std::move(x);
  ws.inv_rms_final.resize(T);
  ws.f.resize(T * d);
  rmsnorm_forward(ws.x_final.data(), w.final_norm(), ws.f.data(), ws.inv_rms_final.data(), T, d);
  const std::size_t rows = T - logits_from;
  ws.logits.resize(rows * V);
  if (rows > 0) {
    K.matmul_nt(ws.f.data() + logits_from * d, w.head(), ws.logits.data(), rows, V, d);
  }
}

void backward(const WeightsView& w, const Workspace& ws, std::span<const double> dlogits,
              std::span<double> dx0, std::span<double> dweights) {
  const ModelConfig& cfg = w.config();
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto m = static_cast<std::size_t>(cfg.m);
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto H = static_cast<std::size_t>(cfg.n_heads);
  const auto hd = static_cast<std::size_t>(cfg.head_dim());
  const std::size_t T = ws.seq_len;
  const std::size_t lf = ws.logits_from;
  const std::size_t rows = T - lf;
  if (dlogits.size() != rows * V) {
    fail(ErrorCode::kShapeError, "dlogits has the wrong size");
  }
  const bool want_w = !dweights.empty();
  if (want_w && dweights.size() != w.layout().total) {
    fail(ErrorCode::kShapeError, "gradient buffer does not match the weight layout");
  }
  if (!dx0.empty() && dx0.size() != T * d) {
    fail(ErrorCode::kShapeError, "input gradient buffer has the wrong size");
  }
  const auto& K = kernels::active();
  const ParamLayout& L = w.layout();
  double* G = want_w ? dweights.data() : nullptr;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<double> df(T * d, 0.0);
  if (rows > 0) {
    K.matmul_nn_acc(dlogits.data(), w.head(), df.data() + lf * d, rows, V, d);
    if (G) K.matmul_tn_acc(dlogits.data(), ws.f.data() + lf * d, G + L.head, rows, V, d);
  }
  std::vector<double> dx(T * d, 0.0);
  rmsnorm_backward(ws.x_final.data(), w.final_norm(), ws.inv_rms_final.data(), df.data(),
                   dx.data(), G ? G + L.final_norm : nullptr, T, d);

  std::vector<double> dact(T * m), du1(T * m), du2(T * m);
  std::vector<double> db(T * d), dattn(T * d), dq(T * d), dk(T * d), dv(T * d), da(T * d);
  std::vector<double> dp(T);
  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const LayerWeights lw = w.layer(l);
    const LayerOffsets& o = L.layers[static_cast<std::size_t>(l)];
    const auto& c = ws.layers[static_cast<std::size_t>(l)];

    // Feed-forward block: x_out = x_mid + W3 (u1 * silu(u2)).
    std::fill(dact.begin(), dact.end(), 0.0);
    K.matmul_nn_acc(dx.data(), lw.w3, dact.data(), T, d, m);
    if (G) K.matmul_tn_acc(dx.data(), c.act.data(), G + o.w3, T, d, m);
    for (std::size_t i = 0; i < T * m; ++i) {
      const double z = c.u2[i];
      const double sg = sigmoid(z);
      du1[i] = dact[i] * z * sg;
      du2[i] = dact[i] * c.u1[i] * sg * (1.0 + z * (1.0 - sg));
    }
    std::fill(db.begin(), db.end(), 0.0);
    K.matmul_nn_acc(du1.data(), lw.w1, db.data(), T, m, d);
    K.matmul_nn_acc(du2.data(), lw.w2, db.data(), T, m, d);
    if (G) {
      K.matmul_tn_acc(du1.data(), c.b.data(), G + o.w1, T, m, d);
      K.matmul_tn_acc(du2.data(), c.b.data(), G + o.w2, T, m, d);
    }
    rmsnorm_backward(c.x_mid.data(), lw.ffn_norm, c.inv_rms_ffn.data(), db.data(), dx.data(),
                     G ? G + o.ffn_norm : nullptr, T, d);

    // Attention block: x_mid = x_in + Wo attn_out.
    std::fill(dattn.begin(), dattn.end(), 0.0);
    K.matmul_nn_acc(dx.data(), lw.wo, dattn.data(), T, d, d);
    if (G) K.matmul_tn_acc(dx.data(), c.attn_out.data(), G + o.wo, T, d, d);
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = h * hd;
      for (std::size_t t = 0; t < T; ++t) {
        const double* p = c.probs.data() + (h * T + t) * T;
        const double* got = dattn.data() + t * d + off;
        double dot_pdp = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          const double* vs = c.v.data() + s * d + off;
          double acc = 0.0;
          for (std::size_t j = 0; j < hd; ++j) acc += got[j] * vs[j];
          dp[s] = acc;
          dot_pdp += p[s] * acc;
          double* dvs = dv.data() + s * d + off;
          for (std::size_t j = 0; j < hd; ++j) dvs[j] += p[s] * got[j];
        }
        const double* qt = c.q.data() + t * d + off;
        double* dqt = dq.data() + t * d + off;
        for (std::size_t s = 0; s <= t; ++s) {
          const double ds = p[s] * (dp[s] - dot_pdp) * scale;
          if (ds == 0.0) continue;
          const double* ks = c.k.data() + s * d + off;
          double* dks = dk.data() + s * d + off;
          for (std::size_t j = 0; j < hd; ++j) {
            dqt[j] += ds * ks[j];
            dks[j] += ds * qt[j];
          }
        }
      }
    }
    apply_rope(dq.data(), T, cfg, ws, -1.0);
    apply_rope(dk.data(), T, cfg, ws, -1.0);
    std::fill(da.begin(), da.end(), 0.0);
    K.matmul_nn_acc(dq.data(), lw.wq, da.data(), T, d, d);
    K.matmul_nn_acc(dk.data(), lw.wk, da.data(), T, d, d);
    K.matmul_nn_acc(dv.data(), lw.wv, da.data(), T, d, d);
    if (G) {
      K.matmul_tn_acc(dq.data(), c.a.data(), G + o.wq, T, d, d);
      K.matmul_tn_acc(dk.data(), c.a.data(), G + o.wk, T, d, d);
      K.matmul_tn_acc(dv.data(), c.a.data(), G + o.wv, T, d, d);
    }
    rmsnorm_backward(c.x_in.data(), lw.attn_norm, c.inv_rms_attn.data(), da.data(), dx.data(),
                     G ? G + o.attn_norm : nullptr, T, d);
  }
  if (!dx0.empty()) std::copy(dx.begin(), dx.end(), dx0.begin());
}

double cross_entropy_row(const double* logits, std::size_t vocab, TokenId target,
                         double* dlogits, double scale) {
  double mx = -INFINITY;
  for (std::size_t i = 0; i < vocab; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < vocab; ++i) z += std::exp(logits[i] - mx);
  const double log_z = mx + std::log(z);
  const auto tgt = static_cast<std::size_t>(target);
  if (dlogits) {
    for (std::size_t i = 0; i < vocab; ++i) {
      dlogits[i] = scale * std::exp(logits[i] - log_z);
    }
    dlogits[tgt] -= scale;
  }
  return log_z - logits[tgt];
}

CaptureResult forward_with_capture(const ModelParams& params,
                                   std::span<const double> embedded_sequence,
                                   std::span<const std::size_t> capture_slots) {
  const ModelConfig& cfg = params.config();
  const auto d = static_cast<std::size_t>(cfg.d);
  if (embedded_sequence.size() % d != 0) {
    fail(ErrorCode::kShapeError, "embedded sequence length is not a multiple of d");
  }
  const std::size_t T = embedded_sequence.size() / d;
  check_length(cfg, T);
  for (std::size_t slot : capture_slots) {
    if (slot >= T) {
      fail(ErrorCode::kInvalidArgument, "capture slot " + std::to_string(slot) +
                                            " is outside the sequence");
    }
  }
  Workspace ws;
  forward(params.view(), embedded_sequence, T, 0, ws);
  CaptureResult out;
  out.logits = std::move(ws.logits);
  out.records.reserve(static_cast<std::size_t>(cfg.n_layers * cfg.m) * capture_slots.size());
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int i = 0; i < cfg.m; ++i) {
      for (std::size_t k = 0; k < capture_slots.size(); ++k) {
        const double v = ws.activations(l, capture_slots[k], cfg.m)[static_cast<std::size_t>(i)];
        out.records.push_back({l, i, static_cast<int>(k), v});
      }
    }
  }
  return out;
}

}  // namespace skillprobe
