#include "skillprobe/prompt_tuning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"

#include "skillprobe/error.hpp"
#include "skillprobe/io.hpp"
#include "skillprobe/optim.hpp"

namespace skillprobe {

void TuneConfig::validate() const {
  if (tokens < 1) fail(ErrorCode::kInvalidArgument, "soft prompt needs at least one token");
  if (!(lr > 0.0)) fail(ErrorCode::kInvalidArgument, "learning rate must be > 0");
  if (batch_size < 1) fail(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  if (weight_decay < 0.0) fail(ErrorCode::kInvalidArgument, "weight decay must be >= 0");
}

std::string SoftPrompt::content_hash() const {
  std::string bytes;
  append_f64le(bytes, vectors);
  return sha256_hex(bytes);
}

SoftPrompt init_prompt(std::size_t length, std::size_t dim, std::uint64_t seed) {
  if (length < 1 || dim < 1) fail(ErrorCode::kInvalidArgument, "prompt shape must be >= 1");
  SoftPrompt p;
  p.length = length;
  p.dim = dim;
  p.vectors.resize(length * dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kPromptInitScale);
  for (double& v : p.vectors) v = normal(rng);
  p.meta.seed = seed;
  return p;
}

std::vector<std::size_t> PromptLayout::prompt_slots() const {
  std::vector<std::size_t> slots(prompt_end - prompt_begin);
  std::iota(slots.begin(), slots.end(), prompt_begin);
  return slots;
}

PromptLayout prompt_layout(const ModelConfig& cfg, const Sample& sample, std::size_t prompt_len,
                           bool with_completion) {
  PromptLayout lay;
  lay.instruction.push_back(kBos);
  const auto ins = tokenize(sample.instruction);
  lay.instruction.insert(lay.instruction.end(), ins.begin(), ins.end());
  lay.completion = tokenize(sample.completion);
  lay.prompt_begin = lay.instruction.size();
  lay.prompt_end = lay.prompt_begin + prompt_len;
  const std::size_t full = lay.prompt_end + lay.completion.size();
  if (full > static_cast<std::size_t>(cfg.max_seq_len)) {
    fail(ErrorCode::kSequenceLength, "sample '" + sample.id + "' needs " + std::to_string(full) +
                                         " positions, max_seq_len is " +
                                         std::to_string(cfg.max_seq_len));
  }
  if (with_completion) {
    if (lay.completion.empty()) {
      fail(ErrorCode::kInvalidArgument, "sample '" + sample.id + "' has an empty completion");
    }
    lay.seq_len = full - 1;
  } else {
    lay.completion.clear();
    lay.seq_len = lay.prompt_end;
  }
  return lay;
}

std::vector<double> embed_with_prompt(const WeightsView& w, const PromptLayout& layout,
                                      const SoftPrompt& prompt) {
  const auto d = static_cast<std::size_t>(w.config().d);
  if (prompt.dim != d || prompt.length != layout.prompt_end - layout.prompt_begin) {
    fail(ErrorCode::kShapeError, "soft prompt shape does not match the model/layout");
  }
  std::vector<double> x;
  x.reserve(layout.seq_len * d);
  append_embeddings(w, layout.instruction, x);
  x.insert(x.end(), prompt.vectors.begin(), prompt.vectors.end());
  const std::size_t n_comp = layout.seq_len - layout.prompt_end;
  append_embeddings(w, std::span(layout.completion).first(n_comp), x);
  return x;
}

namespace {

double loss_impl(const ModelParams& params, const SoftPrompt& prompt, const Sample& sample,
                 std::span<double> grad, Workspace& ws) {
  const ModelConfig& cfg = params.config();
  if (prompt.dim != static_cast<std::size_t>(cfg.d)) {
    fail(ErrorCode::kShapeError, "soft prompt width " + std::to_string(prompt.dim) +
                                     " does not match model d " + std::to_string(cfg.d));
  }
  const WeightsView w = params.view();
  const PromptLayout lay = prompt_layout(cfg, sample, prompt.length);
  const auto x = embed_with_prompt(w, lay, prompt);
  const std::size_t first = lay.prompt_end - 1;  // predicts y_1
  forward(w, x, lay.seq_len, first, ws);
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const std::size_t n = lay.completion.size();
  const double scale = 1.0 / static_cast<double>(n);
  const bool want = !grad.empty();
  std::vector<double> dlogits(want ? n * V : 0);
  double loss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    loss += cross_entropy_row(ws.logits.data() + j * V, V, lay.completion[j],
                              want ? dlogits.data() + j * V : nullptr, scale);
  }
  loss *= scale;
  if (want) {
    if (grad.size() != prompt.vectors.size()) {
      fail(ErrorCode::kShapeError, "prompt gradient buffer has the wrong size");
    }
    const auto d = static_cast<std::size_t>(cfg.d);
    std::vector<double> dx(lay.seq_len * d);
    backward(w, ws, dlogits, dx, {});
    std::copy_n(dx.begin() + static_cast<std::ptrdiff_t>(lay.prompt_begin * d),
                prompt.vectors.size(), grad.begin());
  }
  return loss;
}

}  // namespace

double prompt_loss(const ModelParams& params, const SoftPrompt& prompt, const Sample& sample) {
  Workspace ws;
  return loss_impl(params, prompt, sample, {}, ws);
}

double prompt_loss_and_grad(const ModelParams& params, const SoftPrompt& prompt,
                            const Sample& sample, std::span<double> grad, Workspace& ws) {
  return loss_impl(params, prompt, sample, grad, ws);
}

SoftPrompt train_prompt(const ModelParams& params, const Corpus& train, const TuneConfig& cfg,
                        const TuneCallback& on_step) {
  cfg.validate();
  if (train.samples.empty()) fail(ErrorCode::kEmptyCorpus, "tuning corpus is empty");
  const auto d = static_cast<std::size_t>(params.config().d);
  SoftPrompt prompt = init_prompt(cfg.tokens, d, cfg.seed);
  prompt.meta = {cfg.lr, cfg.steps, cfg.seed, params.content_hash()};
  if (cfg.steps == 0) return prompt;

  AdamW opt(prompt.vectors.size(), AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  std::vector<double> grad(prompt.vectors.size());
  std::vector<double> sample_grad(prompt.vectors.size());
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::size_t cursor = order.size();
  Workspace ws;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch_loss += loss_impl(params, prompt, train.samples[order[cursor++]], sample_grad, ws);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += sample_grad[i];
    }
    const double inv = 1.0 / static_cast<double>(cfg.batch_size);
    batch_loss *= inv;
    if (!std::isfinite(batch_loss)) {
      fail(ErrorCode::kTrainingDiverged,
           "prompt tuning loss became non-finite at step " + std::to_string(step));
    }
    for (double& g : grad) g *= inv;
    opt.step(prompt.vectors, grad);
    if (on_step) on_step({step, batch_loss});
  }
  return prompt;
}

double grad_check(const ModelParams& params, const SoftPrompt& prompt, const Sample& sample,
                  double epsilon) {
  Workspace ws;
  std::vector<double> analytic(prompt.vectors.size());
  loss_impl(params, prompt, sample, analytic, ws);
  SoftPrompt probe = prompt;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.vectors.size(); ++i) {
    const double orig = probe.vectors[i];
    probe.vectors[i] = orig + epsilon;
    const double up = loss_impl(params, probe, sample, {}, ws);
    probe.vectors[i] = orig - epsilon;
    const double down = loss_impl(params, probe, sample, {}, ws);
    probe.vectors[i] = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

void save_prompt(const SoftPrompt& prompt, const std::filesystem::path& dir, const char* dtype) {
  const std::string dt(dtype);
  std::string blob;
  if (dt == "f64le") {
    append_f64le(blob, prompt.vectors);
  } else if (dt == "f32le") {
    append_f32le(blob, std::span<const double>(prompt.vectors));
  } else {
    fail(ErrorCode::kInvalidArgument, "prompt dtype must be f64le or f32le");
  }
  nlohmann::ordered_json j;
  j["format"] = "skillprobe-prompt/1";
  j["l"] = prompt.length;
  j["d"] = prompt.dim;
  j["dtype"] = dt;
  j["seed"] = prompt.meta.seed;
  j["lr"] = prompt.meta.lr;
  j["steps"] = prompt.meta.steps;
  j["model_hash"] = prompt.meta.model_hash;
  j["content_hash"] = prompt.content_hash();
  j["blob"] = "prompt.bin";
  write_file_atomic(dir / "prompt.bin", blob);
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

SoftPrompt load_prompt(const std::filesystem::path& dir) {
  try {
    const auto j = nlohmann::json::parse(read_file(dir / "manifest.json"));
    SoftPrompt p;
    p.length = j.at("l").get<std::size_t>();
    p.dim = j.at("d").get<std::size_t>();
    p.meta.seed = j.at("seed").get<std::uint64_t>();
    p.meta.lr = j.at("lr").get<double>();
    p.meta.steps = j.at("steps").get<std::size_t>();
    p.meta.model_hash = j.at("model_hash").get<std::string>();
    const auto dtype = j.at("dtype").get<std::string>();
    const std::string blob = read_file(dir / j.value("blob", std::string("prompt.bin")));
    if (dtype == "f64le") {
      p.vectors = decode_f64le(blob);
    } else if (dtype == "f32le") {
      p.vectors = decode_f32le(blob);
    } else {
      fail(ErrorCode::kParseError, "unknown prompt dtype '" + dtype + "'");
    }
    if (p.length < 1 || p.vectors.size() != p.length * p.dim) {
      fail(ErrorCode::kShapeError, dir.string() + ": prompt blob does not hold l x d values");
    }
    if (!std::all_of(p.vectors.begin(), p.vectors.end(), [](double v) { return std::isfinite(v); })) {
      fail(ErrorCode::kShapeError, dir.string() + ": prompt contains non-finite values");
    }
    if (dtype == "f64le" && p.content_hash() != j.at("content_hash").get<std::string>()) {
      fail(ErrorCode::kValidationFailed, dir.string() + ": prompt hash does not match manifest");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, (dir / "manifest.json").string() + ": " + e.what());
  }
}

}  // namespace skillprobe
