#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "oracle/naive_transformer.hpp"
#include "skillprobe/error.hpp"
#include "skillprobe/io.hpp"
#include "skillprobe/probe.hpp"
#include "test_util.hpp"

using namespace skillprobe;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kUsage;
}

ActivationDump noise_dump(std::size_t n, std::size_t L, std::size_t m, std::size_t l,
                          std::uint64_t seed) {
  ActivationDump d;
  d.n_samples = n;
  d.n_layers = L;
  d.n_neurons = m;
  d.n_positions = l;
  d.values.resize(n * L * m * l);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  for (float& v : d.values) v = g(rng);
  for (std::size_t i = 0; i < n; ++i) d.sample_ids.push_back("s" + std::to_string(i));
  d.model_hash = "model";
  d.prompt_hash = "prompt";
  return d;
}

void set_channel(ActivationDump& d, std::size_t l, std::size_t i, std::size_t k,
                 const std::vector<double>& v) {
  for (std::size_t s = 0; s < d.n_samples; ++s) {
    d.values[s * d.sample_stride() + d.channel(l, i, k)] = static_cast<float>(v[s]);
  }
}

MetricVector metric_of(std::vector<double> v) {
  MetricVector m;
  m.values = std::move(v);
  m.spec = "test";
  return m;
}

// Metric values that are exactly representable as float.
std::vector<double> small_int_metric(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = static_cast<double>(rng() % 17) - 8.0;
  return v;
}

}  // namespace

TEST_SUITE("probe") {

TEST_CASE("pearson reference values") {
  const std::vector<double> a{1, 2, 3};
  CHECK(pearson(a, std::vector<double>{2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(a, std::vector<double>{1, 2, 4}) == doctest::Approx(0.981981).epsilon(1e-6));
  CHECK(pearson(a, std::vector<double>{6, 4, 2}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(code_of([&] { pearson(a, std::vector<double>{5, 5, 5}); }) == ErrorCode::kZeroVariance);
  CHECK(code_of([&] { pearson(std::vector<double>{5, 5, 5}, a); }) == ErrorCode::kZeroVariance);
  CHECK(code_of([&] { pearson(std::vector<double>{1}, std::vector<double>{2}); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { pearson(a, std::vector<double>{1, 2}); }) == ErrorCode::kInvalidArgument);
  const std::vector<double> c(10, 0.1);
  CHECK(code_of([&] { pearson(c, std::vector<double>(10, 1.0)); }) == ErrorCode::kZeroVariance);
}

TEST_CASE("pearson properties on random vectors") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(200), m(200);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = g(rng) * 3.0 + 7.0;
      m[i] = 0.5 * a[i] + g(rng);
    }
    const double r = pearson(a, m);
    CHECK(std::abs(r) <= 1.0 + 1e-12);
    CHECK(std::abs(r - pearson(m, a)) < 1e-14);
    CHECK(std::abs(r - oracle::pearson(a, m)) < 1e-12);
    std::vector<double> pos(a.size()), neg(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      pos[i] = 2.5 * a[i] - 4.0;
      neg[i] = -0.3 * a[i] + 11.0;
    }
    CHECK(std::abs(pearson(pos, m) - r) < 1e-12);
    CHECK(std::abs(pearson(neg, m) + r) < 1e-12);
  }
}

TEST_CASE("planted channel scores 1 at its position and ranks first") {
  ActivationDump d = noise_dump(40, 3, 9, 5, 1);
  const auto metric = small_int_metric(40, 2);
  set_channel(d, 2, 7, 3, metric);
  auto scores = score_neurons(d, metric_of(metric));
  REQUIRE(scores.size() == 27);
  CHECK(scores[0].layer == 2);
  CHECK(scores[0].neuron == 7);
  CHECK(scores[0].best_position == 3);
  CHECK(scores[0].corr == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(scores[0].rank == 0);
  for (std::size_t r = 0; r < scores.size(); ++r) CHECK(scores[r].rank == r);
  for (std::size_t r = 1; r < scores.size(); ++r) CHECK(ranks_before(scores[r - 1], scores[r]));

  std::vector<double> neg(metric);
  for (double& v : neg) v = -v;
  set_channel(d, 2, 7, 3, neg);
  scores = score_neurons(d, metric_of(metric));
  CHECK(scores[0].layer == 2);
  CHECK(scores[0].neuron == 7);
  CHECK(scores[0].corr == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("constant activations score zero and rank by index") {
  ActivationDump d = noise_dump(10, 2, 3, 2, 1);
  std::fill(d.values.begin(), d.values.end(), 0.25f);
  const auto scores = score_neurons(d, metric_of(small_int_metric(10, 1)));
  REQUIRE(scores.size() == 6);
  for (std::size_t r = 0; r < 6; ++r) {
    CHECK(scores[r].corr == 0.0);
    CHECK(scores[r].layer == static_cast<int>(r / 3));
    CHECK(scores[r].neuron == static_cast<int>(r % 3));
  }
}

TEST_CASE("scoring preconditions") {
  const ActivationDump d = noise_dump(10, 1, 2, 2, 1);
  CHECK(code_of([&] { score_neurons(d, metric_of(std::vector<double>(9, 1.0))); }) ==
        ErrorCode::kAlignmentError);
  CHECK(code_of([&] { score_neurons(d, metric_of(std::vector<double>(10, 1.0))); }) ==
        ErrorCode::kZeroVariance);
  const ActivationDump one = noise_dump(1, 1, 2, 2, 1);
  CHECK(code_of([&] { score_neurons(one, metric_of({1.0})); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("positive affine metric rescaling keeps the ranking") {
  const ActivationDump d = noise_dump(60, 2, 16, 4, 3);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> m(60), m2(60);
  for (std::size_t i = 0; i < 60; ++i) {
    m[i] = g(rng);
    m2[i] = 3.0 * m[i] + 100.0;
  }
  const auto a = score_neurons(d, metric_of(m));
  const auto b = score_neurons(d, metric_of(m2));
  REQUIRE(a.size() == b.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    CHECK(a[r].layer == b[r].layer);
    CHECK(a[r].neuron == b[r].neuron);
    CHECK(std::abs(a[r].corr - b[r].corr) < 1e-12);
  }
}

TEST_CASE("top-K selection") {
  const std::vector<NeuronScore> s{{0, 1, 0.9, 0, 0}, {1, 5, -0.95, 0, 1}, {2, 3, 0.4, 0, 2}};
  TopK top = select_top_k(s, 2);
  REQUIRE(top.neurons.size() == 2);
  CHECK(top.neurons[0].layer == 1);
  CHECK(top.neurons[0].neuron == 5);
  CHECK(top.neurons[1].layer == 0);
  CHECK(top.neurons[1].neuron == 1);
  CHECK(top.threshold == 0.9);
  CHECK_FALSE(top.truncated);
  top = select_top_k(s, 3);
  CHECK(top.threshold == 0.4);
  CHECK_FALSE(top.truncated);
  top = select_top_k(s, 5);
  CHECK(top.truncated);
  CHECK(top.neurons.size() == 3);
  CHECK(code_of([&] { select_top_k(s, 0); }) == ErrorCode::kInvalidArgument);
  const std::vector<NeuronScore> tie{{1, 0, 0.5, 0, 0}, {0, 2, -0.5, 0, 0}, {0, 1, 0.5, 0, 0}};
  top = select_top_k(tie, 3);
  CHECK(top.neurons[0].neuron == 1);
  CHECK(top.neurons[1].neuron == 2);
  CHECK(top.neurons[2].layer == 1);
}

TEST_CASE("collect_activations shape and causal invariance") {
  ModelConfig cfg = test::tiny_config();
  cfg.n_layers = 2;
  const ModelParams p = test::random_params(cfg, 2);
  SoftPrompt prompt = init_prompt(3, 16, 4);
  prompt.meta.model_hash = p.content_hash();
  const Corpus val = gen_two_skill(5, 6);
  const ActivationDump a = collect_activations(p, prompt, val, false);
  CHECK(a.n_samples == 5);
  CHECK(a.n_layers == 2);
  CHECK(a.n_neurons == 32);
  CHECK(a.n_positions == 3);
  CHECK(a.values.size() == 5 * 2 * 32 * 3);
  CHECK(a.model_hash == p.content_hash());
  CHECK(a.prompt_hash == prompt.content_hash());
  CHECK(a.sample_ids[4] == val.samples[4].id);
  CHECK(collect_activations(p, prompt, val, true) == a);

  Corpus single{val.task_kind, Split::kVal, {val.samples[2]}};
  const ActivationDump one = collect_activations(p, prompt, single);
  const PromptLayout lay = prompt_layout(cfg, val.samples[2], 3, false);
  const auto rec = forward_with_capture(p, embed_with_prompt(p.view(), lay, prompt), lay.prompt_slots()).records;
  REQUIRE(rec.size() == one.values.size());
  for (std::size_t r = 0; r < rec.size(); ++r) CHECK(one.values[r] == static_cast<float>(rec[r].value));

  prompt.meta.model_hash = "elsewhere";
  CHECK(code_of([&] { collect_activations(p, prompt, val); }) == ErrorCode::kModelPromptMismatch);
}

TEST_CASE("dump files round trip and validate") {
  test::TempDir dir;
  const ActivationDump d = noise_dump(6, 2, 4, 3, 9);
  save_dump(d, dir.path / "d");
  const DumpValidation v = validate_dump(dir.path / "d");
  CHECK(v.ok());
  CHECK(v.summary().starts_with("valid dump"));
  CHECK(load_dump(dir.path / "d") == d);
  const std::string manifest = read_file(dir.path / "d" / "manifest.json");
  CHECK(manifest.find("sample-major [n][l][i][k]") != std::string::npos);
  CHECK(manifest.find("\"f32le\"") != std::string::npos);

  auto has = [&](const DumpValidation& r, const std::string& code) {
    for (const auto& i : r.issues) if (i.code == code) return true;
    return false;
  };
  SUBCASE("truncated blob") {
    std::string blob = read_file(dir.path / "d" / "activations.bin");
    blob.resize(blob.size() - 4);
    write_file_atomic(dir.path / "d" / "activations.bin", blob);
    CHECK(has(validate_dump(dir.path / "d"), "SIZE_MISMATCH"));
    CHECK(code_of([&] { load_dump(dir.path / "d"); }) == ErrorCode::kValidationFailed);
  }
  SUBCASE("NaN injected") {
    std::string blob = read_file(dir.path / "d" / "activations.bin");
    const float nan = std::nanf("");
    std::memcpy(blob.data() + 8, &nan, 4);
    write_file_atomic(dir.path / "d" / "activations.bin", blob);
    CHECK(has(validate_dump(dir.path / "d"), "NON_FINITE"));
  }
  SUBCASE("duplicate and missing ids") {
    write_file_atomic(dir.path / "d" / "sample_ids.txt", "a\nb\nc\nd\ne\na\n");
    CHECK(has(validate_dump(dir.path / "d"), "DUPLICATE_ID"));
    write_file_atomic(dir.path / "d" / "sample_ids.txt", "a\nb\n");
    CHECK(has(validate_dump(dir.path / "d"), "ID_COUNT"));
  }
  SUBCASE("hash fields and dims") {
    std::string m = manifest;
    m.replace(m.find("\"model\""), 7, "\"\"");
    m.replace(m.find("\"dims\""), 6, "\"dimz\"");
    write_file_atomic(dir.path / "d" / "manifest.json", m);
    const auto r = validate_dump(dir.path / "d");
    CHECK(has(r, "HASH_FIELD"));
    CHECK(has(r, "DIMS"));
  }
  SUBCASE("missing files") {
    std::filesystem::remove(dir.path / "d" / "sample_ids.txt");
    CHECK(has(validate_dump(dir.path / "d"), "MISSING_FILE"));
    CHECK(has(validate_dump(dir.path / "nowhere"), "MISSING_FILE"));
  }
}

TEST_CASE("scores CSV round trip") {
  ActivationDump d = noise_dump(30, 2, 5, 2, 4);
  const auto scores = score_neurons(d, metric_of(small_int_metric(30, 5)));
  const std::string csv = scores_csv(scores);
  CHECK(csv.starts_with("rank,layer,neuron,corr,best_position\n"));
  CHECK(parse_scores_csv(csv) == scores);
  CHECK(code_of([] { parse_scores_csv("rank,layer\n"); }) == ErrorCode::kParseError);
  CHECK(code_of([] { parse_scores_csv("rank,layer,neuron,corr,best_position\n0,1,2\n"); }) ==
        ErrorCode::kParseError);
}

}  // TEST_SUITE
