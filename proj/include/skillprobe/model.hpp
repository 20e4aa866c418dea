#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "skillprobe/tokenizer.hpp"

namespace skillprobe {

struct ModelConfig {
  int d = 64;
  int n_layers = 4;
  int m = 256;  // FFN width
  int n_heads = 4;
  int vocab_size = kByteVocabSize;
  int max_seq_len = 512;
  std::uint64_t seed = 0;
  bool tied_head = false;

  int head_dim() const { return d / n_heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

inline constexpr double kNormEps = 1e-5;
inline constexpr double kRopeBase = 10000.0;

struct LayerOffsets {
  std::size_t attn_norm, wq, wk, wv, wo, ffn_norm, w1, w2, w3;
};

// Offsets of every tensor in the flat weight buffer. The order here is the
// checkpoint section order: tok_emb, then per layer attn_norm, wq, wk, wv,
// wo, ffn_norm, w1, w2, w3, then final_norm and (untied only) head.
struct ParamLayout {
  explicit ParamLayout(const ModelConfig& cfg);

  std::size_t tok_emb = 0;
  std::vector<LayerOffsets> layers;
  std::size_t final_norm = 0;
  std::size_t head = 0;  // == tok_emb when tied
  std::size_t total = 0;

  struct Tensor {
    std::string name;
    std::size_t offset;
    std::vector<std::size_t> shape;
  };
  std::vector<Tensor> tensors;
};

// Row-major: wq/wk/wv/wo are d x d, w1/w2 are m x d, w3 is d x m.
struct LayerWeights {
  const double* attn_norm;
  const double* wq;
  const double* wk;
  const double* wv;
  const double* wo;
  const double* ffn_norm;
  const double* w1;
  const double* w2;
  const double* w3;
};

class WeightsView {
 public:
  WeightsView(const ModelConfig& cfg, std::span<const double> data);

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  std::span<const double> data() const { return data_; }

  const double* tok_emb() const { return data_.data() + layout_.tok_emb; }
  LayerWeights layer(int l) const;
  const double* final_norm() const { return data_.data() + layout_.final_norm; }
  const double* head() const { return data_.data() + layout_.head; }

 private:
  ModelConfig cfg_;
  ParamLayout layout_;
  std::span<const double> data_;
};

// Immutable model weights. Training code builds a new value at the end
// instead of mutating one.
class ModelParams {
 public:
  ModelParams(ModelConfig cfg, std::vector<double> weights);

  // Seeded initialization from cfg.seed.
  static ModelParams initialize(const ModelConfig& cfg);
  static std::vector<double> initial_weights(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::span<const double> data() const { return *weights_; }
  WeightsView view() const { return WeightsView(cfg_, *weights_); }
  // SHA-256 over the f64le weight bytes.
  const std::string& content_hash() const { return hash_; }

 private:
  ModelConfig cfg_;
  std::shared_ptr<const std::vector<double>> weights_;
  std::string hash_;
};

std::string hash_weights(std::span<const double> weights);

double silu(double z);

// Per-neuron activation (W1[i,:] . h) * SiLU(W2[i,:] . h) for i in [0, m).
std::vector<double> ffn_activation(std::span<const double> h, const LayerWeights& layer,
                                   const ModelConfig& cfg);
// W3 * ffn_activation(h).
std::vector<double> ffn_output(std::span<const double> h, const LayerWeights& layer,
                               const ModelConfig& cfg);

// Intermediates kept from a forward pass for the backward pass and for
// activation capture. Reused across calls to avoid reallocation.
struct Workspace {
  struct Layer {
    std::vector<double> x_in, inv_rms_attn, a, q, k, v, probs, attn_out;
    std::vector<double> x_mid, inv_rms_ffn, b, u1, u2, act;
  };
  std::size_t seq_len = 0;
  std::size_t logits_from = 0;
  std::vector<Layer> layers;
  std::vector<double> x_final, inv_rms_final, f, logits;
  std::vector<double> rope_cos, rope_sin;
  int rope_head_dim = 0;

  // act of layer l at position t, m entries.
  std::span<const double> activations(int layer, std::size_t t, int m) const {
    return {layers[layer].act.data() + t * m, static_cast<std::size_t>(m)};
  }
};

// Runs the decoder over `x0` (seq_len x d embedded rows). Logits are computed
// for positions [logits_from, seq_len) only and stored row-major in ws.logits.
void forward(const WeightsView& w, std::span<const double> x0, std::size_t seq_len,
             std::size_t logits_from, Workspace& ws);

// Back-propagates `dlogits` (rows for positions [ws.logits_from, seq_len)).
// Writes the input gradient to dx0 when non-empty and accumulates weight
// gradients into dweights (layout-sized) when non-empty.
void backward(const WeightsView& w, const Workspace& ws, std::span<const double> dlogits,
              std::span<double> dx0, std::span<double> dweights);

// Token embedding rows for `ids`, appended to `out`.
void append_embeddings(const WeightsView& w, std::span<const TokenId> ids,
                       std::vector<double>& out);

// -log softmax(logits)[target]. When `dlogits` is non-null it receives
// scale * (softmax(logits) - onehot(target)).
double cross_entropy_row(const double* logits, std::size_t vocab, TokenId target,
                         double* dlogits, double scale);

struct ActivationRecord {
  int layer;
  int neuron;
  int position;  // index into the capture slot list
  double value;
};

struct CaptureResult {
  std::vector<double> logits;  // seq_len x vocab_size
  std::vector<ActivationRecord> records;  // ordered by (layer, neuron, position)
};

CaptureResult forward_with_capture(const ModelParams& params,
                                   std::span<const double> embedded_sequence,
                                   std::span<const std::size_t> capture_slots);

}  // namespace skillprobe
