#include <cmath>
#include <random>

#include "doctest.h"
#include "oracle/naive_transformer.hpp"
#include "skillprobe/checkpoint.hpp"
#include "skillprobe/corpus.hpp"
#include "skillprobe/error.hpp"
#include "skillprobe/io.hpp"
#include "skillprobe/model.hpp"
#include "skillprobe/pretrain.hpp"
#include "skillprobe/tokenizer.hpp"
#include "test_util.hpp"

using namespace skillprobe;

namespace {

oracle::Weights oracle_weights(const ModelParams& p) {
  const auto& c = p.config();
  return oracle::unpack({c.d, c.n_layers, c.m, c.n_heads, c.vocab_size, c.tied_head}, p.data());
}

std::vector<double> random_rows(std::size_t rows, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(rows * d);
  for (double& v : x) v = g(rng);
  return x;
}

oracle::Mat as_mat(const std::vector<double>& x, std::size_t d) {
  oracle::Mat m;
  for (std::size_t i = 0; i < x.size(); i += d) m.emplace_back(x.begin() + i, x.begin() + i + d);
  return m;
}

std::vector<double> with_tensor(std::vector<double> w, const ModelConfig& cfg,
                                const std::string& name, double value) {
  for (const auto& t : ParamLayout(cfg).tensors) {
    if (t.name == name) {
      std::size_t n = 1;
      for (auto s : t.shape) n *= s;
      std::fill_n(w.begin() + static_cast<std::ptrdiff_t>(t.offset), n, value);
    }
  }
  return w;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("tokenizer round trip and specials") {
  CHECK(tokenize("").empty());
  const auto ids = tokenize("ab");
  REQUIRE(ids.size() == 2);
  CHECK(ids[0] < kByteVocabSize);
  CHECK(ids[1] < kByteVocabSize);
  for (const auto& s : gen_two_skill(20, 4).samples) {
    CHECK(detokenize(tokenize(s.instruction)) == s.instruction);
  }
  const std::string utf8 = "caf\xc3\xa9 \xe2\x86\x92";
  CHECK(detokenize(tokenize(utf8)) == utf8);
  const std::vector<TokenId> with_specials{kBos, 'h', 'i', kEos, kPad};
  CHECK(detokenize(with_specials) == "hi");
  const std::vector<TokenId> bad{300};
  CHECK_THROWS_AS(detokenize(bad), Error);
}

TEST_CASE("config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ModelConfig{};
  c.m = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("ffn activation: hand-evaluated neuron") {
  ModelConfig cfg = test::tiny_config();
  cfg.d = 4;
  cfg.m = 3;
  cfg.n_heads = 2;
  std::vector<double> w(ParamLayout(cfg).total, 0.0);
  const ParamLayout lay(cfg);
  const auto& o = lay.layers[0];
  w[o.w1 + 1 * 4 + 0] = 2.0;  // W1 row 1 = [2, 0, 0, 0]
  w[o.w2 + 1 * 4 + 0] = 1.0;  // W2 row 1 = [1, 0, 0, 0]
  const ModelParams p(cfg, w);
  const std::vector<double> h{1, 0, 0, 0};
  const auto act = ffn_activation(h, p.view().layer(0), cfg);
  CHECK(act[1] == doctest::Approx(2.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK(act[1] == doctest::Approx(1.462117).epsilon(1e-6));
  CHECK(act[0] == 0.0);
  const std::vector<double> zero(4, 0.0);
  for (double a : ffn_activation(zero, p.view().layer(0), cfg)) CHECK(a == 0.0);
  const std::vector<double> wrong(5, 0.0);
  CHECK_THROWS_AS(ffn_activation(wrong, p.view().layer(0), cfg), Error);
}

TEST_CASE("ffn output equals W3 times the activations") {
  const ModelConfig cfg = test::tiny_config();
  const ModelParams p = test::random_params(cfg, 3);
  const auto layer = p.view().layer(0);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto h = random_rows(1, 16, s);
    const auto act = ffn_activation(h, layer, cfg);
    const auto out = ffn_output(h, layer, cfg);
    for (int r = 0; r < cfg.d; ++r) {
      double ref = 0.0;
      for (int i = 0; i < cfg.m; ++i) ref += layer.w3[r * cfg.m + i] * act[i];
      CHECK(std::abs(out[r] - ref) <= 1e-12);
    }
  }
}

TEST_CASE("forward matches the naive oracle") {
  for (bool tied : {false, true}) {
    ModelConfig cfg = test::tiny_config(5);
    cfg.n_layers = 2;
    cfg.tied_head = tied;
    const ModelParams p = test::random_params(cfg, 9);
    const auto x = random_rows(11, 16, 2);
    Workspace ws;
    forward(p.view(), x, 11, 0, ws);
    const auto tr = oracle::run(oracle_weights(p), as_mat(x, 16));
    double worst = 0.0;
    for (std::size_t t = 0; t < 11; ++t) {
      for (int v = 0; v < cfg.vocab_size; ++v) {
        worst = std::max(worst, std::abs(ws.logits[t * cfg.vocab_size + v] - tr.logits[t][v]));
      }
      for (int l = 0; l < 2; ++l) {
        const auto act = ws.activations(l, t, cfg.m);
        for (int i = 0; i < cfg.m; ++i) worst = std::max(worst, std::abs(act[i] - tr.activations[l][t][i]));
      }
    }
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("capture is observation only and causal") {
  const ModelConfig cfg = test::tiny_config();
  const ModelParams p = test::random_params(cfg, 4);
  const auto x = random_rows(9, 16, 3);
  const CaptureResult none = forward_with_capture(p, x, {});
  CHECK(none.records.empty());
  Workspace ws;
  forward(p.view(), x, 9, 0, ws);
  CHECK(none.logits == ws.logits);

  const std::vector<std::size_t> slots{2, 3, 5};
  const auto prefix = std::vector<double>(x.begin(), x.begin() + 6 * 16);
  const CaptureResult a = forward_with_capture(p, prefix, slots);
  const CaptureResult b = forward_with_capture(p, x, slots);
  REQUIRE(a.records.size() == static_cast<std::size_t>(cfg.n_layers * cfg.m) * slots.size());
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t r = 0; r < a.records.size(); ++r) {
    CHECK(a.records[r].value == b.records[r].value);
  }
  CHECK(a.records[0].layer == 0);
  CHECK(a.records[0].neuron == 0);
  CHECK(a.records[1].position == 1);
  const std::vector<std::size_t> outside{9};
  CHECK_THROWS_AS(forward_with_capture(p, x, outside), Error);
}

TEST_CASE("zeroed attention leaves activations equal to the FFN of the normalized stream") {
  const ModelConfig cfg = test::tiny_config();
  auto w = test::random_params(cfg, 6).data();
  std::vector<double> buf(w.begin(), w.end());
  buf = with_tensor(buf, cfg, "layers.0.wo", 0.0);
  const ModelParams p(cfg, buf);
  const auto x = random_rows(5, 16, 8);
  const std::vector<std::size_t> slots{0, 4};
  const CaptureResult cap = forward_with_capture(p, x, slots);
  const auto layer = p.view().layer(0);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double* row = x.data() + slots[k] * 16;
    double ss = 0.0;
    for (int j = 0; j < 16; ++j) ss += row[j] * row[j];
    const double r = 1.0 / std::sqrt(ss / 16.0 + kNormEps);
    std::vector<double> h(16);
    for (int j = 0; j < 16; ++j) h[j] = layer.ffn_norm[j] * row[j] * r;
    const auto act = ffn_activation(h, layer, cfg);
    for (int i = 0; i < cfg.m; ++i) {
      CHECK(std::abs(cap.records[static_cast<std::size_t>(i) * slots.size() + k].value - act[i]) < 1e-12);
    }
  }
}

TEST_CASE("sequence longer than max_seq_len is rejected") {
  ModelConfig cfg = test::tiny_config();
  cfg.max_seq_len = 8;
  const ModelParams p = ModelParams::initialize(cfg);
  const auto x = random_rows(9, 16, 1);
  try {
    forward_with_capture(p, x, {});
    FAIL("expected SequenceLength");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSequenceLength);
  }
}

TEST_CASE("weight gradient matches finite differences") {
  ModelConfig cfg = test::tiny_config(2);
  cfg.n_layers = 2;
  const ModelParams p = test::random_params(cfg, 12, 0.2);
  const std::vector<TokenId> ids = tokenize("the cup is on the table");
  Workspace ws;
  std::vector<double> grad(p.data().size(), 0.0);
  sequence_lm_loss(p.view(), ids, ws, grad);
  std::vector<double> w(p.data().begin(), p.data().end());
  std::mt19937_64 rng(1);
  const ParamLayout lay(cfg);
  double worst = 0.0;
  for (const auto& t : lay.tensors) {
    std::size_t n = 1;
    for (auto s : t.shape) n *= s;
    for (int probe = 0; probe < 6; ++probe) {
      std::size_t idx = t.offset + rng() % n;
      if (t.name == "tok_emb" || t.name == "head") idx = t.offset + static_cast<std::size_t>(ids[probe % ids.size()]) * 16 + probe;
      const double orig = w[idx];
      const double eps = 1e-5;
      w[idx] = orig + eps;
      const double up = sequence_lm_loss(WeightsView(cfg, w), ids, ws);
      w[idx] = orig - eps;
      const double down = sequence_lm_loss(WeightsView(cfg, w), ids, ws);
      w[idx] = orig;
      const double fd = (up - down) / (2 * eps);
      const double rel = std::abs(fd - grad[idx]) / std::max({std::abs(fd), std::abs(grad[idx]), 1e-6});
      CAPTURE(t.name);
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("pretrain: zero steps, initial loss, improvement, determinism") {
  ModelConfig cfg = test::tiny_config(3);
  const Corpus corpus = gen_two_skill(24, 1);
  PretrainOptions opts;
  opts.steps = 0;
  const ModelParams init = pretrain(cfg, corpus, opts);
  CHECK(init.content_hash() == ModelParams::initialize(cfg).content_hash());
  const double l0 = mean_lm_loss(init, corpus);
  CHECK(l0 == doctest::Approx(std::log(259.0)).epsilon(0.01));

  opts.steps = 40;
  opts.lr = 1e-2;
  opts.batch_size = 4;
  opts.seed = 5;
  std::vector<double> losses;
  const ModelParams trained = pretrain(cfg, corpus, opts, [&](std::size_t, double l) { losses.push_back(l); });
  CHECK(losses.size() == 40);
  CHECK(mean_lm_loss(trained, corpus) < l0 - 1.0);
  CHECK(pretrain(cfg, corpus, opts).content_hash() == trained.content_hash());
  Corpus empty;
  CHECK_THROWS_AS(pretrain(cfg, empty, opts), Error);
}

TEST_CASE("pretraining sequence layout") {
  ModelConfig cfg = test::tiny_config();
  Sample s{"a", "hi", "yo", {}};
  const auto ids = pretrain_tokens(s, cfg);
  const std::vector<TokenId> want{kBos, 'h', 'i', '\n', 'y', 'o', kEos};
  CHECK(ids == want);
  cfg.max_seq_len = 4;
  CHECK(pretrain_tokens(s, cfg).size() == 4);
}

TEST_CASE("model checkpoint round trip") {
  test::TempDir dir;
  ModelConfig cfg = test::tiny_config(4);
  cfg.tied_head = true;
  const ModelParams p = test::random_params(cfg, 2);
  save_model(p, dir.path / "m");
  const ModelParams back = load_model(dir.path / "m");
  CHECK(back.config() == cfg);
  CHECK(back.content_hash() == p.content_hash());
  CHECK(std::equal(back.data().begin(), back.data().end(), p.data().begin()));
  CHECK(read_file(dir.path / "m" / "weights.bin").size() == p.data().size() * 8);
  const std::string manifest = read_file(dir.path / "m" / "manifest.json");
  CHECK(manifest.find("\"sections\"") != std::string::npos);
  CHECK(manifest.find("layers.0.w3") != std::string::npos);

  save_model(p, dir.path / "f32", "f32le");
  const ModelParams narrow = load_model(dir.path / "f32");
  CHECK(read_file(dir.path / "f32" / "weights.bin").size() == p.data().size() * 4);
  for (std::size_t i = 0; i < p.data().size(); ++i) {
    CHECK(narrow.data()[i] == static_cast<double>(static_cast<float>(p.data()[i])));
  }

  std::string blob = read_file(dir.path / "m" / "weights.bin");
  blob[9] ^= 0x40;
  write_file_atomic(dir.path / "m" / "weights.bin", blob);
  CHECK_THROWS_AS(load_model(dir.path / "m"), Error);
}

TEST_CASE("params reject non-finite weights and wrong sizes") {
  const ModelConfig cfg = test::tiny_config();
  std::vector<double> w = ModelParams::initial_weights(cfg);
  w[3] = std::nan("");
  CHECK_THROWS_AS(ModelParams(cfg, w), Error);
  w.pop_back();
  CHECK_THROWS_AS(ModelParams(cfg, w), Error);
}

}  // TEST_SUITE
