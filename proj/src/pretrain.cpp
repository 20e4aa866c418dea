#include "skillprobe/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "skillprobe/error.hpp"
#include "skillprobe/optim.hpp"

namespace skillprobe {

std::vector<TokenId> pretrain_tokens(const Sample& sample, const ModelConfig& cfg) {
  std::vector<TokenId> ids{kBos};
  const auto ins = tokenize(sample.instruction);
  const auto comp = tokenize(sample.completion);
  ids.insert(ids.end(), ins.begin(), ins.end());
  ids.push_back(static_cast<TokenId>('\n'));
  ids.insert(ids.end(), comp.begin(), comp.end());
  ids.push_back(kEos);
  if (ids.size() > static_cast<std::size_t>(cfg.max_seq_len)) {
    ids.resize(static_cast<std::size_t>(cfg.max_seq_len));
  }
  return ids;
}

double sequence_lm_loss(const WeightsView& w, std::span<const TokenId> ids, Workspace& ws,
                        std::span<double> grad) {
  if (ids.size() < 2) fail(ErrorCode::kInvalidArgument, "sequence needs at least two tokens");
  const ModelConfig& cfg = w.config();
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const std::size_t T = ids.size() - 1;  // last token is only a target
  std::vector<double> x;
  x.reserve(T * d);
  append_embeddings(w, ids.first(T), x);
  forward(w, x, T, 0, ws);

  const bool want = !grad.empty();
  std::vector<double> dlogits(want ? T * V : 0);
  const double scale = 1.0 / static_cast<double>(T);
  double loss = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    loss += cross_entropy_row(ws.logits.data() + t * V, V, ids[t + 1],
                              want ? dlogits.data() + t * V : nullptr, scale);
  }
  loss *= scale;
  if (want) {
    std::vector<double> dx(T * d);
    backward(w, ws, dlogits, dx, grad);
    double* demb = grad.data() + w.layout().tok_emb;
    for (std::size_t t = 0; t < T; ++t) {
      double* row = demb + static_cast<std::size_t>(ids[t]) * d;
      for (std::size_t j = 0; j < d; ++j) row[j] += dx[t * d + j];
    }
  }
  return loss;
}

double mean_lm_loss(const ModelParams& params, const Corpus& corpus) {
  if (corpus.samples.empty()) fail(ErrorCode::kEmptyCorpus, "corpus has no samples");
  const WeightsView w = params.view();
  Workspace ws;
  double total = 0.0;
  for (const Sample& s : corpus.samples) {
    total += sequence_lm_loss(w, pretrain_tokens(s, params.config()), ws);
  }
  return total / static_cast<double>(corpus.size());
}

ModelParams pretrain(const ModelConfig& cfg, const Corpus& corpus, const PretrainOptions& opts,
                     const StepCallback& on_step) {
  if (corpus.samples.empty()) fail(ErrorCode::kEmptyCorpus, "pretraining corpus is empty");
  if (opts.batch_size < 1) fail(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  std::vector<double> weights = ModelParams::initial_weights(cfg);
  if (opts.steps == 0) return ModelParams(cfg, std::move(weights));

  std::vector<std::vector<TokenId>> seqs;
  seqs.reserve(corpus.size());
  for (const Sample& s : corpus.samples) seqs.push_back(pretrain_tokens(s, cfg));

  AdamW opt(weights.size(), AdamWConfig{opts.lr, 0.9, 0.999, 1e-8, 0.0});
  std::vector<double> grad(weights.size());
  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(opts.seed);
  std::size_t cursor = order.size();
  Workspace ws;
  for (std::size_t step = 0; step < opts.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const WeightsView w(cfg, weights);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < opts.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch_loss += sequence_lm_loss(w, seqs[order[cursor++]], ws, grad);
    }
    const double inv = 1.0 / static_cast<double>(opts.batch_size);
    batch_loss *= inv;
    if (!std::isfinite(batch_loss)) {
      fail(ErrorCode::kTrainingDiverged, "pretraining loss became non-finite at step " +
                                             std::to_string(step));
    }
    for (double& g : grad) g *= inv;
    clip_grad_norm(grad, opts.grad_clip);
    opt.step(weights, grad);
    if (on_step) on_step(step, batch_loss);
  }
  return ModelParams(cfg, std::move(weights));
}

}  // namespace skillprobe
