#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "skillprobe/corpus.hpp"
#include "skillprobe/model.hpp"

namespace skillprobe {

struct PretrainOptions {
  std::size_t steps = 1000;
  double lr = 3e-3;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;  // batch order; weight init comes from ModelConfig::seed
  double grad_clip = 1.0;
};

// BOS + instruction + '\n' + completion + EOS, truncated to max_seq_len.
std::vector<TokenId> pretrain_tokens(const Sample& sample, const ModelConfig& cfg);

// Mean next-token cross-entropy over one sequence. When `grad` is non-empty
// the weight gradient of that loss is accumulated into it.
double sequence_lm_loss(const WeightsView& w, std::span<const TokenId> ids, Workspace& ws,
                        std::span<double> grad = {});

// Mean over samples of the per-sample mean next-token loss.
double mean_lm_loss(const ModelParams& params, const Corpus& corpus);

using StepCallback = std::function<void(std::size_t step, double batch_loss)>;

// Next-token training of every weight with AdamW; deterministic under
// (config, corpus, options). Throws TrainingDiverged on a non-finite loss.
ModelParams pretrain(const ModelConfig& cfg, const Corpus& corpus, const PretrainOptions& opts,
                     const StepCallback& on_step = {});

}  // namespace skillprobe
