#include "skillprobe/probe.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <optional>
#include <unordered_set>

#include "json.hpp"

#include "skillprobe/error.hpp"
#include "skillprobe/io.hpp"
#include "skillprobe/kernels.hpp"

namespace skillprobe {

namespace {

constexpr const char* kDumpFormat = "skillprobe-dump/1";
constexpr const char* kDumpOrder = "sample-major [n][l][i][k]";
constexpr double kZeroVarianceRel = 1e-12;

struct Centered {
  std::vector<double> values;
  double ss = 0.0;
};

// Returns nullopt when x has no spread beyond rounding of its mean.
std::optional<double> mean_if_varying(const double* x, std::size_t n, double* sxx_out,
                                      const double* yc, double* sxy_out) {
  const auto& k = kernels::active();
  const double mean = k.sum(x, n) / static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  k.centered_moments(x, mean, yc, n, &sxx, &sxy);
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(x[i]));
  if (!(std::sqrt(sxx / static_cast<double>(n)) > kZeroVarianceRel * scale)) return std::nullopt;
  *sxx_out = sxx;
  *sxy_out = sxy;
  return mean;
}

Centered center(std::span<const double> m) {
  Centered c;
  const double mean = kernels::sum(m) / static_cast<double>(m.size());
  c.values.resize(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) c.values[i] = m[i] - mean;
  c.ss = kernels::dot(c.values, c.values);
  return c;
}

bool has_variance(std::span<const double> m) {
  double sxx = 0.0;
  double sxy = 0.0;
  const std::vector<double> zeros(m.size(), 0.0);
  return mean_if_varying(m.data(), m.size(), &sxx, zeros.data(), &sxy).has_value();
}

double clamp_r(double r) { return std::clamp(r, -1.0, 1.0); }

}  // namespace

std::vector<double> ActivationDump::series(std::size_t layer, std::size_t neuron,
                                           std::size_t position) const {
  if (layer >= n_layers || neuron >= n_neurons || position >= n_positions) {
    fail(ErrorCode::kInvalidArgument, "neuron/position outside the dump dims");
  }
  std::vector<double> out(n_samples);
  const std::size_t stride = sample_stride();
  const std::size_t c = channel(layer, neuron, position);
  for (std::size_t s = 0; s < n_samples; ++s) out[s] = values[s * stride + c];
  return out;
}

ActivationDump collect_activations(const ModelParams& params, const SoftPrompt& prompt,
                                   const Corpus& val, bool with_completion) {
  if (val.samples.empty()) fail(ErrorCode::kEmptyCorpus, "validation corpus is empty");
  if (!prompt.meta.model_hash.empty() && prompt.meta.model_hash != params.content_hash()) {
    fail(ErrorCode::kModelPromptMismatch, "prompt was trained against model " +
                                              prompt.meta.model_hash + ", not " +
                                              params.content_hash());
  }
  const ModelConfig& cfg = params.config();
  ActivationDump dump;
  dump.n_samples = val.size();
  dump.n_layers = static_cast<std::size_t>(cfg.n_layers);
  dump.n_neurons = static_cast<std::size_t>(cfg.m);
  dump.n_positions = prompt.length;
  dump.model_hash = params.content_hash();
  dump.prompt_hash = prompt.content_hash();
  dump.values.resize(dump.n_samples * dump.sample_stride());
  dump.sample_ids.reserve(val.size());

  const WeightsView w = params.view();
  for (std::size_t s = 0; s < val.size(); ++s) {
    const Sample& sample = val.samples[s];
    const PromptLayout lay = prompt_layout(cfg, sample, prompt.length, with_completion);
    const auto x = embed_with_prompt(w, lay, prompt);
    const auto slots = lay.prompt_slots();
    const CaptureResult cap = forward_with_capture(params, x, slots);
    float* dst = dump.values.data() + s * dump.sample_stride();
    for (std::size_t r = 0; r < cap.records.size(); ++r) dst[r] = static_cast<float>(cap.records[r].value);
    dump.sample_ids.push_back(sample.id);
  }
  return dump;
}

double pearson(std::span<const double> a, std::span<const double> m) {
  if (a.size() != m.size()) fail(ErrorCode::kInvalidArgument, "pearson inputs differ in length");
  if (a.size() < 2) fail(ErrorCode::kInvalidArgument, "pearson needs at least two values");
  if (!has_variance(m)) fail(ErrorCode::kZeroVariance, "metric vector has zero variance");
  const Centered mc = center(m);
  double sxx = 0.0;
  double sxy = 0.0;
  if (!mean_if_varying(a.data(), a.size(), &sxx, mc.values.data(), &sxy)) {
    fail(ErrorCode::kZeroVariance, "activation vector has zero variance");
  }
  return clamp_r(sxy / std::sqrt(sxx * mc.ss));
}

bool ranks_before(const NeuronScore& a, const NeuronScore& b) {
  const double x = std::abs(a.corr);
  const double y = std::abs(b.corr);
  if (x != y) return x > y;
  if (a.layer != b.layer) return a.layer < b.layer;
  return a.neuron < b.neuron;
}

std::vector<NeuronScore> score_neurons(const ActivationDump& dump, const MetricVector& metric) {
  const std::size_t n = dump.n_samples;
  if (metric.size() != n) {
    fail(ErrorCode::kAlignmentError, "metric has " + std::to_string(metric.size()) +
                                         " values, dump has " + std::to_string(n) + " samples");
  }
  if (n < 2) fail(ErrorCode::kInvalidArgument, "scoring needs at least two samples");
  if (dump.values.size() != n * dump.sample_stride()) {
    fail(ErrorCode::kShapeError, "dump tensor size does not match its dims");
  }
  if (!has_variance(metric.values)) {
    fail(ErrorCode::kZeroVariance, "metric '" + metric.spec + "' is constant over the samples");
  }
  const Centered mc = center(metric.values);
  const std::size_t stride = dump.sample_stride();

  std::vector<NeuronScore> scores;
  scores.reserve(dump.n_layers * dump.n_neurons);
  std::vector<double> x(n);
  for (std::size_t l = 0; l < dump.n_layers; ++l) {
    for (std::size_t i = 0; i < dump.n_neurons; ++i) {
      NeuronScore best{static_cast<int>(l), static_cast<int>(i), 0.0, 0, 0};
      for (std::size_t k = 0; k < dump.n_positions; ++k) {
        const std::size_t c = dump.channel(l, i, k);
        for (std::size_t s = 0; s < n; ++s) x[s] = dump.values[s * stride + c];
        double sxx = 0.0;
        double sxy = 0.0;
        if (!mean_if_varying(x.data(), n, &sxx, mc.values.data(), &sxy)) continue;
        const double r = clamp_r(sxy / std::sqrt(sxx * mc.ss));
        if (std::abs(r) > std::abs(best.corr)) {
          best.corr = r;
          best.best_position = static_cast<int>(k);
        }
      }
      scores.push_back(best);
    }
  }
  std::sort(scores.begin(), scores.end(), ranks_before);
  for (std::size_t r = 0; r < scores.size(); ++r) scores[r].rank = r;
  return scores;
}

TopK select_top_k(std::span<const NeuronScore> scores, std::size_t k) {
  if (k < 1) fail(ErrorCode::kInvalidArgument, "K must be >= 1");
  std::vector<NeuronScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), ranks_before);
  TopK out;
  out.truncated = k > sorted.size();
  sorted.resize(std::min(k, sorted.size()));
  for (std::size_t r = 0; r < sorted.size(); ++r) sorted[r].rank = r;
  out.threshold = sorted.empty() ? 0.0 : std::abs(sorted.back().corr);
  out.neurons = std::move(sorted);
  return out;
}

void save_dump(const ActivationDump& dump, const std::filesystem::path& dir) {
  if (dump.values.size() != dump.n_samples * dump.sample_stride() ||
      dump.sample_ids.size() != dump.n_samples) {
    fail(ErrorCode::kShapeError, "dump dims do not match its contents");
  }
  std::string blob;
  append_f32le(blob, std::span<const float>(dump.values));
  std::string ids;
  for (const auto& id : dump.sample_ids) {
    ids += id;
    ids += '\n';
  }
  nlohmann::ordered_json j;
  j["format"] = kDumpFormat;
  j["dims"] = {dump.n_samples, dump.n_layers, dump.n_neurons, dump.n_positions};
  j["order"] = kDumpOrder;
  j["dtype"] = "f32le";
  j["model_hash"] = dump.model_hash;
  j["prompt_hash"] = dump.prompt_hash;
  j["blob"] = "activations.bin";
  j["sample_ids"] = "sample_ids.txt";
  write_file_atomic(dir / "activations.bin", blob);
  write_file_atomic(dir / "sample_ids.txt", ids);
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

namespace {

struct RawDump {
  DumpValidation report;
  nlohmann::json manifest;
  std::string blob;
  std::vector<std::string> ids;
};

RawDump read_dump(const std::filesystem::path& dir) {
  RawDump raw;
  auto& issues = raw.report.issues;
  auto issue = [&](const char* code, std::string msg) { issues.push_back({code, std::move(msg)}); };

  try {
    raw.manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const Error& e) {
    issue("MISSING_FILE", e.what());
    return raw;
  } catch (const nlohmann::json::exception& e) {
    issue("MANIFEST_PARSE", e.what());
    return raw;
  }
  const auto& j = raw.manifest;
  if (!j.is_object()) {
    issue("MANIFEST_PARSE", "manifest is not a JSON object");
    return raw;
  }

  bool dims_ok = j.contains("dims") && j["dims"].is_array() && j["dims"].size() == 4;
  if (dims_ok) {
    for (const auto& v : j["dims"]) {
      if (!v.is_number_unsigned() || v.get<std::size_t>() == 0) dims_ok = false;
    }
  }
  if (dims_ok) {
    for (const auto& v : j["dims"]) raw.report.dims.push_back(v.get<std::size_t>());
  } else {
    issue("DIMS", "dims must be four positive integers [N, L, m, l]");
  }
  if (j.value("order", std::string()) != kDumpOrder) {
    issue("ORDER", std::string("order must be \"") + kDumpOrder + "\"");
  }
  if (j.value("dtype", std::string()) != "f32le") issue("DTYPE", "dtype must be \"f32le\"");
  for (const char* key : {"model_hash", "prompt_hash"}) {
    if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
      issue("HASH_FIELD", std::string(key) + " must be a non-empty string");
    }
  }

  const std::string blob_name = j.contains("blob") && j["blob"].is_string()
                                    ? j["blob"].get<std::string>()
                                    : "activations.bin";
  const std::string ids_name = j.contains("sample_ids") && j["sample_ids"].is_string()
                                   ? j["sample_ids"].get<std::string>()
                                   : "sample_ids.txt";
  bool have_blob = true;
  try {
    raw.blob = read_file(dir / blob_name);
  } catch (const Error& e) {
    issue("MISSING_FILE", e.what());
    have_blob = false;
  }
  bool have_ids = true;
  try {
    raw.ids = split_lines(read_file(dir / ids_name));
  } catch (const Error& e) {
    issue("MISSING_FILE", e.what());
    have_ids = false;
  }

  if (have_blob) {
    if (raw.blob.size() % 4 != 0) {
      issue("SIZE_MISMATCH", "blob length " + std::to_string(raw.blob.size()) +
                                 " is not a whole number of f32 values");
    } else if (dims_ok) {
      const auto& d = raw.report.dims;
      const std::size_t want = d[0] * d[1] * d[2] * d[3];
      if (raw.blob.size() / 4 != want) {
        issue("SIZE_MISMATCH", "blob holds " + std::to_string(raw.blob.size() / 4) +
                                   " values, dims need " + std::to_string(want));
      }
    }
    std::size_t bad = 0;
    std::size_t first_bad = 0;
    for (std::size_t i = 0; i + 4 <= raw.blob.size(); i += 4) {
      float f;
      std::memcpy(&f, raw.blob.data() + i, 4);
      if (!std::isfinite(f)) {
        if (bad == 0) first_bad = i / 4;
        ++bad;
      }
    }
    if (bad > 0) {
      issue("NON_FINITE", std::to_string(bad) + " non-finite values, first at flat index " +
                              std::to_string(first_bad));
    }
  }
  if (have_ids) {
    raw.report.n_ids = raw.ids.size();
    if (dims_ok && raw.ids.size() != raw.report.dims[0]) {
      issue("ID_COUNT", "sample_ids lists " + std::to_string(raw.ids.size()) +
                            " ids, dims say " + std::to_string(raw.report.dims[0]));
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : raw.ids) {
      if (id.empty()) {
        issue("EMPTY_ID", "sample_ids contains an empty line");
        break;
      }
      if (!seen.insert(id).second) {
        issue("DUPLICATE_ID", "sample id '" + id + "' appears twice");
        break;
      }
    }
  }
  return raw;
}

}  // namespace

DumpValidation validate_dump(const std::filesystem::path& dir) { return read_dump(dir).report; }

std::string DumpValidation::summary() const {
  std::string out;
  if (ok()) {
    out = "valid dump: dims [";
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (i) out += ", ";
      out += std::to_string(dims[i]);
    }
    out += "], " + std::to_string(n_ids) + " sample ids\n";
    return out;
  }
  out = "invalid dump: " + std::to_string(issues.size()) + " problem(s)\n";
  for (const auto& is : issues) out += is.code + ": " + is.message + "\n";
  return out;
}

ActivationDump load_dump(const std::filesystem::path& dir) {
  RawDump raw = read_dump(dir);
  if (!raw.report.ok()) {
    const auto& first = raw.report.issues.front();
    fail(ErrorCode::kValidationFailed, dir.string() + ": " + first.code + ": " + first.message);
  }
  ActivationDump dump;
  const auto& d = raw.report.dims;
  dump.n_samples = d[0];
  dump.n_layers = d[1];
  dump.n_neurons = d[2];
  dump.n_positions = d[3];
  dump.values.resize(raw.blob.size() / 4);
  std::memcpy(dump.values.data(), raw.blob.data(), raw.blob.size());
  dump.sample_ids = std::move(raw.ids);
  dump.model_hash = raw.manifest["model_hash"].get<std::string>();
  dump.prompt_hash = raw.manifest["prompt_hash"].get<std::string>();
  return dump;
}

std::string scores_csv(std::span<const NeuronScore> scores) {
  std::string out = "rank,layer,neuron,corr,best_position\n";
  for (const auto& s : scores) {
    out += std::to_string(s.rank) + "," + std::to_string(s.layer) + "," +
           std::to_string(s.neuron) + "," + format_double(s.corr) + "," +
           std::to_string(s.best_position) + "\n";
  }
  return out;
}

std::vector<NeuronScore> parse_scores_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != "rank,layer,neuron,corr,best_position") {
    throw ParseError(1, "scores CSV must start with 'rank,layer,neuron,corr,best_position'");
  }
  std::vector<NeuronScore> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    std::string_view rest = lines[li];
    std::string_view fields[5];
    for (int f = 0; f < 5; ++f) {
      const auto comma = rest.find(',');
      if ((f < 4) == (comma == std::string_view::npos)) throw ParseError(li + 1, "expected 5 fields");
      fields[f] = rest.substr(0, comma);
      rest = f < 4 ? rest.substr(comma + 1) : std::string_view();
    }
    auto num = [&](std::string_view s, auto& v) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) {
        throw ParseError(li + 1, "bad number '" + std::string(s) + "'");
      }
    };
    NeuronScore s;
    num(fields[0], s.rank);
    num(fields[1], s.layer);
    num(fields[2], s.neuron);
    num(fields[3], s.corr);
    num(fields[4], s.best_position);
    out.push_back(s);
  }
  return out;
}

}  // namespace skillprobe
