#pragma once

// Straight-line reference decoder used only by the tests. It shares nothing
// with the library's forward pass beyond the documented checkpoint section
// order: tensors are located by walking that order by hand.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

struct Dims {
  int d, n_layers, m, n_heads, vocab;
  bool tied;
};

struct Layer {
  Vec attn_norm, ffn_norm;
  Mat wq, wk, wv, wo, w1, w2, w3;
};

struct Weights {
  Dims dims;
  Mat tok_emb;
  std::vector<Layer> layers;
  Vec final_norm;
  Mat head;
};

inline Mat take_mat(std::span<const double> flat, std::size_t& at, int rows, int cols) {
  Mat out(rows, Vec(cols));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[r][c] = flat[at++];
  return out;
}

inline Vec take_vec(std::span<const double> flat, std::size_t& at, int n) {
  Vec out(n);
  for (int i = 0; i < n; ++i) out[i] = flat[at++];
  return out;
}

inline Weights unpack(const Dims& dims, std::span<const double> flat) {
  Weights w{dims, {}, {}, {}, {}};
  std::size_t at = 0;
  w.tok_emb = take_mat(flat, at, dims.vocab, dims.d);
  for (int l = 0; l < dims.n_layers; ++l) {
    Layer L;
    L.attn_norm = take_vec(flat, at, dims.d);
    L.wq = take_mat(flat, at, dims.d, dims.d);
    L.wk = take_mat(flat, at, dims.d, dims.d);
    L.wv = take_mat(flat, at, dims.d, dims.d);
    L.wo = take_mat(flat, at, dims.d, dims.d);
    L.ffn_norm = take_vec(flat, at, dims.d);
    L.w1 = take_mat(flat, at, dims.m, dims.d);
    L.w2 = take_mat(flat, at, dims.m, dims.d);
    L.w3 = take_mat(flat, at, dims.d, dims.m);
    w.layers.push_back(std::move(L));
  }
  w.final_norm = take_vec(flat, at, dims.d);
  w.head = dims.tied ? w.tok_emb : take_mat(flat, at, dims.vocab, dims.d);
  return w;
}

inline Vec matvec(const Mat& a, const Vec& x) {
  Vec y(a.size(), 0.0);
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < x.size(); ++c) y[r] += a[r][c] * x[c];
  return y;
}

inline Vec rmsnorm(const Vec& x, const Vec& g) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double r = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + 1e-5);
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = g[i] * x[i] * r;
  return y;
}

inline void rope(Vec& x, int pos, int n_heads) {
  const int hd = static_cast<int>(x.size()) / n_heads;
  for (int h = 0; h < n_heads; ++h) {
    for (int i = 0; i < hd / 2; ++i) {
      const double theta = pos * std::pow(10000.0, -2.0 * i / hd);
      double& a = x[h * hd + 2 * i];
      double& b = x[h * hd + 2 * i + 1];
      const double a0 = a, b0 = b;
      a = a0 * std::cos(theta) - b0 * std::sin(theta);
      b = a0 * std::sin(theta) + b0 * std::cos(theta);
    }
  }
}

inline double silu(double z) { return z / (1.0 + std::exp(-z)); }

struct Trace {
  Mat logits;                   // [t][vocab]
  std::vector<Mat> activations;  // [layer][t][m]
};

inline Trace run(const Weights& w, const Mat& x0) {
  const Dims& D = w.dims;
  const int T = static_cast<int>(x0.size());
  const int hd = D.d / D.n_heads;
  Mat x = x0;
  Trace tr;
  for (const Layer& L : w.layers) {
    Mat q(T), k(T), v(T);
    for (int t = 0; t < T; ++t) {
      const Vec a = rmsnorm(x[t], L.attn_norm);
      q[t] = matvec(L.wq, a);
      k[t] = matvec(L.wk, a);
      v[t] = matvec(L.wv, a);
      rope(q[t], t, D.n_heads);
      rope(k[t], t, D.n_heads);
    }
    Mat attn(T, Vec(D.d, 0.0));
    for (int h = 0; h < D.n_heads; ++h) {
      for (int t = 0; t < T; ++t) {
        Vec score(t + 1);
        double mx = -1e300;
        for (int s = 0; s <= t; ++s) {
          double dot = 0.0;
          for (int j = 0; j < hd; ++j) dot += q[t][h * hd + j] * k[s][h * hd + j];
          score[s] = dot / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, score[s]);
        }
        double z = 0.0;
        for (int s = 0; s <= t; ++s) z += std::exp(score[s] - mx);
        for (int s = 0; s <= t; ++s) {
          const double p = std::exp(score[s] - mx) / z;
          for (int j = 0; j < hd; ++j) attn[t][h * hd + j] += p * v[s][h * hd + j];
        }
      }
    }
    Mat acts(T);
    for (int t = 0; t < T; ++t) {
      const Vec o = matvec(L.wo, attn[t]);
      for (int j = 0; j < D.d; ++j) x[t][j] += o[j];
      const Vec b = rmsnorm(x[t], L.ffn_norm);
      const Vec u1 = matvec(L.w1, b);
      const Vec u2 = matvec(L.w2, b);
      Vec act(D.m);
      for (int i = 0; i < D.m; ++i) act[i] = u1[i] * silu(u2[i]);
      const Vec f = matvec(L.w3, act);
      for (int j = 0; j < D.d; ++j) x[t][j] += f[j];
      acts[t] = std::move(act);
    }
    tr.activations.push_back(std::move(acts));
  }
  for (int t = 0; t < T; ++t) tr.logits.push_back(matvec(w.head, rmsnorm(x[t], w.final_norm)));
  return tr;
}

// -log softmax(logits)[target], with the full probability vector materialized.
inline double nll(const Vec& logits, int target) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  Vec p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= z;
  return -std::log(p[static_cast<std::size_t>(target)]);
}

// Prompt-tuning loss: rows = BOS, instruction bytes, prompt rows, completion
// bytes (minus the last); targets are the completion bytes.
inline double prompt_loss(const Weights& w, const std::string& instruction, const Mat& prompt,
                          const std::string& completion, int bos) {
  Mat x;
  x.push_back(w.tok_emb[bos]);
  for (unsigned char c : instruction) x.push_back(w.tok_emb[c]);
  const int prompt_end = static_cast<int>(x.size() + prompt.size());
  for (const Vec& p : prompt) x.push_back(p);
  for (std::size_t j = 0; j + 1 < completion.size(); ++j) {
    x.push_back(w.tok_emb[static_cast<unsigned char>(completion[j])]);
  }
  const Trace tr = run(w, x);
  double loss = 0.0;
  for (std::size_t j = 0; j < completion.size(); ++j) {
    loss += nll(tr.logits[prompt_end - 1 + j], static_cast<unsigned char>(completion[j]));
  }
  return loss / static_cast<double>(completion.size());
}

// Naive two-pass Pearson r.
inline double pearson(const Vec& a, const Vec& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Mann-Whitney ROC-AUC of `score` for positives (label 1) over negatives.
inline double roc_auc(const Vec& score, const Vec& label) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (label[i] != 1.0) continue;
    for (std::size_t j = 0; j < score.size(); ++j) {
      if (label[j] != 0.0) continue;
      pairs += 1.0;
      if (score[i] > score[j]) wins += 1.0;
      else if (score[i] == score[j]) wins += 0.5;
    }
  }
  return pairs > 0.0 ? wins / pairs : 0.5;
}

}  // namespace oracle
