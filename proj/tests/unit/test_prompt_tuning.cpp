#include <cmath>
#include <random>

#include "doctest.h"
#include "oracle/naive_transformer.hpp"
#include "skillprobe/corpus.hpp"
#include "skillprobe/error.hpp"
#include "skillprobe/io.hpp"
#include "skillprobe/prompt_tuning.hpp"
#include "test_util.hpp"

using namespace skillprobe;

namespace {

ModelParams zero_blocks(const ModelConfig& cfg, std::uint64_t seed) {
  const ModelParams base = test::random_params(cfg, seed);
  std::vector<double> w(base.data().begin(), base.data().end());
  const ParamLayout lay(cfg);
  for (const auto& o : lay.layers) {
    std::fill_n(w.begin() + static_cast<std::ptrdiff_t>(o.wo), cfg.d * cfg.d, 0.0);
    std::fill_n(w.begin() + static_cast<std::ptrdiff_t>(o.w3), cfg.d * cfg.m, 0.0);
  }
  return ModelParams(cfg, std::move(w));
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kUsage;
}

}  // namespace

TEST_SUITE("prompt_tuning") {

TEST_CASE("init prompt is seeded N(0, 0.02)") {
  const SoftPrompt a = init_prompt(20, 64, 3);
  CHECK(a.vectors.size() == 20 * 64);
  CHECK(a == init_prompt(20, 64, 3));
  CHECK(a.vectors != init_prompt(20, 64, 4).vectors);
  double ss = 0.0;
  for (double v : a.vectors) ss += v * v;
  CHECK(std::sqrt(ss / static_cast<double>(a.vectors.size())) == doctest::Approx(0.02).epsilon(0.1));
  CHECK_THROWS_AS(init_prompt(0, 4, 1), Error);
}

TEST_CASE("layout places the prompt after the instruction") {
  const ModelConfig cfg = test::tiny_config();
  const Sample s{"a", "abc", "xy", {}};
  const PromptLayout lay = prompt_layout(cfg, s, 3);
  CHECK(lay.prompt_begin == 4);
  CHECK(lay.prompt_end == 7);
  CHECK(lay.seq_len == 8);
  CHECK(lay.instruction.front() == kBos);
  CHECK(lay.prompt_slots() == std::vector<std::size_t>{4, 5, 6});
  const PromptLayout bare = prompt_layout(cfg, s, 3, false);
  CHECK(bare.seq_len == 7);
  CHECK(bare.completion.empty());
  ModelConfig small = cfg;
  small.max_seq_len = 8;
  CHECK(code_of([&] { prompt_layout(small, s, 3); }) == ErrorCode::kSequenceLength);
}

TEST_CASE("prompt loss matches the naive oracle") {
  ModelConfig cfg = test::tiny_config(11);
  cfg.n_layers = 1;
  const ModelParams p = test::random_params(cfg, 21);
  const SoftPrompt prompt = init_prompt(3, 16, 5);
  const auto w = oracle::unpack({16, 1, cfg.m, cfg.n_heads, cfg.vocab_size, false}, p.data());
  oracle::Mat rows;
  for (std::size_t k = 0; k < prompt.length; ++k) rows.emplace_back(prompt.row(k).begin(), prompt.row(k).end());
  for (const Sample& s : gen_two_skill(6, 2).samples) {
    const double got = prompt_loss(p, prompt, s);
    const double want = oracle::prompt_loss(w, s.instruction, rows, s.completion, kBos);
    CHECK(std::abs(got - want) < 1e-10);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("uniform logits give ln(vocab)") {
  const ModelConfig cfg = test::tiny_config();
  std::vector<double> w(ModelParams::initial_weights(cfg));
  const ParamLayout lay(cfg);
  std::fill_n(w.begin() + static_cast<std::ptrdiff_t>(lay.head), cfg.vocab_size * cfg.d, 0.0);
  const ModelParams p(cfg, w);
  const SoftPrompt prompt = init_prompt(2, 16, 1);
  CHECK(prompt_loss(p, prompt, Sample{"a", "question", "answer", {}}) ==
        doctest::Approx(std::log(259.0)).epsilon(1e-12));
}

TEST_CASE("dominant true logit drives the loss to zero") {
  const ModelConfig cfg = test::tiny_config();
  const ModelParams base = zero_blocks(cfg, 3);
  std::vector<double> w(base.data().begin(), base.data().end());
  const ParamLayout lay(cfg);
  std::fill_n(w.begin() + static_cast<std::ptrdiff_t>(lay.head), cfg.vocab_size * cfg.d, 0.0);
  std::fill_n(w.begin() + static_cast<std::ptrdiff_t>(lay.final_norm), cfg.d, 1.0);
  w[lay.head + static_cast<std::size_t>('z') * 16 + 0] = 100.0;
  const ModelParams p(cfg, w);
  SoftPrompt prompt = init_prompt(2, 16, 1);
  std::fill(prompt.vectors.begin(), prompt.vectors.end(), 0.0);
  prompt.vectors[16 + 0] = 1.0;  // last prompt row = e0
  CHECK(prompt_loss(p, prompt, Sample{"a", "q", "z", {}}) < 1e-12);
}

TEST_CASE("gradient check on a tiny model") {
  ModelConfig cfg = test::tiny_config();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    cfg.seed = seed;
    const ModelParams p = test::random_params(cfg, 100 + seed);
    const SoftPrompt prompt = init_prompt(2, 16, seed);
    const Sample s = gen_two_skill(2, seed).samples[0];
    CHECK(grad_check(p, prompt, s, 1e-5) < 1e-4);
  }
}

TEST_CASE("linear-softmax closed form gradient") {
  // Attention and FFN outputs are zeroed, so the logits at the last prompt
  // slot are head * rmsnorm(p_l) and every other prompt row has no effect.
  const ModelConfig cfg = test::tiny_config();
  const ModelParams p = zero_blocks(cfg, 8);
  SoftPrompt prompt = init_prompt(3, 16, 2);
  for (double& v : prompt.vectors) v *= 20.0;
  const Sample s{"a", "hello", "k", {}};
  Workspace ws;
  std::vector<double> grad(prompt.vectors.size());
  const double loss = prompt_loss_and_grad(p, prompt, s, grad, ws);

  const WeightsView w = p.view();
  const int d = cfg.d;
  const double* x = prompt.vectors.data() + 2 * d;
  double ss = 0.0;
  for (int j = 0; j < d; ++j) ss += x[j] * x[j];
  const double r = 1.0 / std::sqrt(ss / d + kNormEps);
  std::vector<double> f(d);
  for (int j = 0; j < d; ++j) f[j] = w.final_norm()[j] * x[j] * r;
  std::vector<double> z(cfg.vocab_size);
  double mx = -1e300;
  for (int v = 0; v < cfg.vocab_size; ++v) {
    for (int j = 0; j < d; ++j) z[v] += w.head()[v * d + j] * f[j];
    mx = std::max(mx, z[v]);
  }
  double sum = 0.0;
  for (double& v : z) sum += (v = std::exp(v - mx));
  for (double& v : z) v /= sum;
  CHECK(loss == doctest::Approx(-std::log(z['k'])).epsilon(1e-12));
  z['k'] -= 1.0;
  std::vector<double> df(d, 0.0);
  for (int v = 0; v < cfg.vocab_size; ++v)
    for (int j = 0; j < d; ++j) df[j] += w.head()[v * d + j] * z[v];
  double proj = 0.0;
  for (int j = 0; j < d; ++j) proj += w.final_norm()[j] * df[j] * x[j];
  for (int j = 0; j < d; ++j) {
    const double want = r * w.final_norm()[j] * df[j] - proj * r * r * r / d * x[j];
    CHECK(std::abs(grad[2 * d + j] - want) < 1e-10);
    CHECK(std::abs(grad[j]) < 1e-14);
    CHECK(std::abs(grad[d + j]) < 1e-14);
  }
}

TEST_CASE("training only moves the prompt and is deterministic") {
  const ModelConfig cfg = test::tiny_config(4);
  const ModelParams p = test::random_params(cfg, 4, 0.1);
  const std::string hash_before = p.content_hash();
  const std::vector<double> bytes_before(p.data().begin(), p.data().end());
  const Corpus train = gen_two_skill(16, 3);
  TuneConfig tc;
  tc.tokens = 2;
  tc.steps = 0;
  tc.seed = 9;
  const SoftPrompt init = train_prompt(p, train, tc);
  CHECK(init.vectors == init_prompt(2, 16, 9).vectors);
  CHECK(init.meta.model_hash == hash_before);

  tc.steps = 30;
  tc.lr = 3e-2;
  tc.batch_size = 4;
  const SoftPrompt a = train_prompt(p, train, tc);
  const SoftPrompt b = train_prompt(p, train, tc);
  CHECK(a == b);
  CHECK(a.meta.steps == 30);
  CHECK(p.content_hash() == hash_before);
  CHECK(hash_weights(p.data()) == hash_before);
  CHECK(std::equal(bytes_before.begin(), bytes_before.end(), p.data().begin()));

  double before = 0.0, after = 0.0;
  for (const auto& s : train.samples) {
    before += prompt_loss(p, init, s);
    after += prompt_loss(p, a, s);
  }
  CHECK(after < before);

  TuneConfig bad = tc;
  bad.lr = 0.0;
  CHECK(code_of([&] { train_prompt(p, train, bad); }) == ErrorCode::kInvalidArgument);
  SoftPrompt wide = init_prompt(2, 8, 1);
  CHECK(code_of([&] { prompt_loss(p, wide, train.samples[0]); }) == ErrorCode::kShapeError);
}

TEST_CASE("prompt checkpoint round trip") {
  test::TempDir dir;
  SoftPrompt p = init_prompt(4, 16, 6);
  p.meta = {3e-3, 300, 6, "abc"};
  save_prompt(p, dir.path / "p");
  CHECK(load_prompt(dir.path / "p") == p);
  CHECK(read_file(dir.path / "p" / "prompt.bin").size() == 4 * 16 * 8);
  const std::string manifest = read_file(dir.path / "p" / "manifest.json");
  for (const char* key : {"\"l\"", "\"d\"", "\"dtype\"", "\"seed\"", "\"lr\"", "\"steps\"", "\"model_hash\""}) {
    CHECK(manifest.find(key) != std::string::npos);
  }
  save_prompt(p, dir.path / "p32", "f32le");
  const SoftPrompt narrow = load_prompt(dir.path / "p32");
  CHECK(narrow.length == 4);
  CHECK(narrow.vectors[5] == static_cast<double>(static_cast<float>(p.vectors[5])));
  write_file_atomic(dir.path / "p" / "prompt.bin", "short");
  CHECK_THROWS_AS(load_prompt(dir.path / "p"), Error);
}

}  // TEST_SUITE
