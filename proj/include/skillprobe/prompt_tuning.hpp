#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "skillprobe/corpus.hpp"
#include "skillprobe/model.hpp"

namespace skillprobe {

struct TuneConfig {
  std::size_t tokens = 20;  // soft prompt length l
  double lr = 3e-3;
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// l soft-prompt vectors of width d, stored row-major.
struct SoftPrompt {
  std::size_t length = 0;
  std::size_t dim = 0;
  std::vector<double> vectors;

  struct Meta {
    double lr = 0.0;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    std::string model_hash;
    bool operator==(const Meta&) const = default;
  } meta;

  std::span<const double> row(std::size_t k) const { return {vectors.data() + k * dim, dim}; }
  std::string content_hash() const;
  bool operator==(const SoftPrompt&) const = default;
};

inline constexpr double kPromptInitScale = 0.02;

// Gaussian(0, 0.02) initialization.
SoftPrompt init_prompt(std::size_t length, std::size_t dim, std::uint64_t seed);

// Sequence layout: BOS, instruction bytes, l prompt slots, completion bytes
// (the final completion byte is only a target).
struct PromptLayout {
  std::size_t prompt_begin = 0;  // first prompt slot
  std::size_t prompt_end = 0;    // one past the last prompt slot
  std::size_t seq_len = 0;       // input rows fed to the model
  std::vector<TokenId> instruction;  // BOS + instruction bytes
  std::vector<TokenId> completion;

  std::vector<std::size_t> prompt_slots() const;
};

// Throws SequenceLength when 1 + |x| + l + |y| exceeds max_seq_len.
PromptLayout prompt_layout(const ModelConfig& cfg, const Sample& sample, std::size_t prompt_len,
                           bool with_completion = true);

// Embedded rows for the layout with the prompt rows spliced in.
std::vector<double> embed_with_prompt(const WeightsView& w, const PromptLayout& layout,
                                      const SoftPrompt& prompt);

// Mean over completion tokens of -log Pr(y_j | Emb(x), p_1..p_l, Emb(y_<j)).
double prompt_loss(const ModelParams& params, const SoftPrompt& prompt, const Sample& sample);

// Same loss; writes d loss / d prompt (l x d) into `grad`.
double prompt_loss_and_grad(const ModelParams& params, const SoftPrompt& prompt,
                            const Sample& sample, std::span<double> grad, Workspace& ws);

struct TuneStep {
  std::size_t step;
  double batch_loss;
};
using TuneCallback = std::function<void(const TuneStep&)>;

// Optimizes only the prompt vectors with AdamW on fixed-order, per-epoch
// shuffled mini-batches; the model stays untouched.
SoftPrompt train_prompt(const ModelParams& params, const Corpus& train, const TuneConfig& cfg,
                        const TuneCallback& on_step = {});

// Max over prompt coordinates of |analytic - central FD| / max(|analytic|,
// |FD|, 1e-8).
double grad_check(const ModelParams& params, const SoftPrompt& prompt, const Sample& sample,
                  double epsilon);

// Prompt checkpoint directory: manifest.json {format, l, d, dtype, seed, lr,
// steps, model_hash, content_hash} + prompt.bin (l x d little-endian).
void save_prompt(const SoftPrompt& prompt, const std::filesystem::path& dir,
                 const char* dtype = "f64le");
SoftPrompt load_prompt(const std::filesystem::path& dir);

}  // namespace skillprobe
