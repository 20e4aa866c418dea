#include "skillprobe/metrics.hpp"

#include <charconv>
#include <cmath>
#include <unordered_map>

#include "skillprobe/error.hpp"
#include "skillprobe/io.hpp"

namespace skillprobe {

std::string_view metric_kind_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::kBinaryLabel: return "binary_label";
    case MetricKind::kPerSampleLoss: return "per_sample_loss";
    case MetricKind::kExternal: return "external";
  }
  return "external";
}

MetricVector metric_binary_label(const Corpus& corpus, std::string_view key,
                                 std::string_view positive) {
  MetricVector out;
  out.kind = MetricKind::kBinaryLabel;
  out.spec = "label:" + std::string(key) + "=" + std::string(positive);
  out.values.reserve(corpus.size());
  for (const Sample& s : corpus.samples) {
    auto it = s.meta.find(std::string(key));
    if (it == s.meta.end()) {
      fail(ErrorCode::kMissingLabel, "sample '" + s.id + "' has no meta." + std::string(key));
    }
    out.values.push_back(it->second == positive ? 1.0 : 0.0);
  }
  return out;
}

MetricVector metric_per_sample_loss(const ModelParams& params, const SoftPrompt& prompt,
                                    const Corpus& corpus) {
  if (prompt.meta.model_hash != params.content_hash()) {
    fail(ErrorCode::kModelPromptMismatch,
         "prompt was trained against model " + prompt.meta.model_hash + ", not " +
             params.content_hash());
  }
  MetricVector out;
  out.kind = MetricKind::kPerSampleLoss;
  out.spec = "loss";
  out.values.reserve(corpus.size());
  for (const Sample& s : corpus.samples) out.values.push_back(prompt_loss(params, prompt, s));
  return out;
}

MetricVector parse_metric_csv(const Corpus& corpus, std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != "sample_id,value") {
    throw ParseError(1, "metric CSV must start with the header 'sample_id,value'");
  }
  std::unordered_map<std::string, double> by_id;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0) throw ParseError(i + 1, "expected 'sample_id,value'");
    const std::string id = line.substr(0, comma);
    const std::string_view num = std::string_view(line).substr(comma + 1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
    if (ec != std::errc() || ptr != num.data() + num.size() || !std::isfinite(v)) {
      throw ParseError(i + 1, "value '" + std::string(num) + "' is not a finite number");
    }
    if (!by_id.emplace(id, v).second) {
      fail(ErrorCode::kAlignmentError, "metric CSV lists sample '" + id + "' twice");
    }
  }
  MetricVector out;
  out.kind = MetricKind::kExternal;
  out.values.reserve(corpus.size());
  for (const Sample& s : corpus.samples) {
    auto it = by_id.find(s.id);
    if (it == by_id.end()) {
      fail(ErrorCode::kAlignmentError, "metric CSV has no value for sample '" + s.id + "'");
    }
    out.values.push_back(it->second);
  }
  if (by_id.size() != corpus.size()) {
    fail(ErrorCode::kAlignmentError, "metric CSV lists " + std::to_string(by_id.size()) +
                                         " ids, corpus has " + std::to_string(corpus.size()));
  }
  return out;
}

MetricVector metric_from_file(const Corpus& corpus, const std::filesystem::path& path) {
  MetricVector out = parse_metric_csv(corpus, read_file(path));
  out.spec = "file:" + path.string();
  return out;
}

std::string metric_csv(const Corpus& corpus, const MetricVector& metric) {
  if (metric.size() != corpus.size()) {
    fail(ErrorCode::kAlignmentError, "metric length does not match corpus size");
  }
  std::string out = "sample_id,value\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out += corpus.samples[i].id;
    out += ',';
    out += format_double(metric.values[i]);
    out += '\n';
  }
  return out;
}

MetricSpec MetricSpec::parse(std::string_view text) {
  MetricSpec s;
  if (text == "loss") {
    s.kind = MetricKind::kPerSampleLoss;
    return s;
  }
  if (text.starts_with("label:")) {
    const auto body = text.substr(6);
    const auto eq = body.find('=');
    if (eq == std::string_view::npos || eq == 0 || eq + 1 == body.size()) {
      fail(ErrorCode::kInvalidArgument, "metric spec must look like label:<key>=<positive>");
    }
    s.kind = MetricKind::kBinaryLabel;
    s.key = std::string(body.substr(0, eq));
    s.positive = std::string(body.substr(eq + 1));
    return s;
  }
  if (text.starts_with("file:") && text.size() > 5) {
    s.kind = MetricKind::kExternal;
    s.path = std::string(text.substr(5));
    return s;
  }
  fail(ErrorCode::kInvalidArgument,
       "unknown metric spec '" + std::string(text) + "' (label:<key>=<value> | loss | file:<path>)");
}

std::string MetricSpec::str() const {
  switch (kind) {
    case MetricKind::kBinaryLabel: return "label:" + key + "=" + positive;
    case MetricKind::kPerSampleLoss: return "loss";
    case MetricKind::kExternal: return "file:" + path;
  }
  return {};
}

MetricVector compute_metric(const MetricSpec& spec, const Corpus& corpus,
                            const ModelParams* params, const SoftPrompt* prompt) {
  switch (spec.kind) {
    case MetricKind::kBinaryLabel:
      return metric_binary_label(corpus, spec.key, spec.positive);
    case MetricKind::kPerSampleLoss:
      if (!params || !prompt) {
        fail(ErrorCode::kInvalidArgument, "the loss metric needs a model and a trained prompt");
      }
      return metric_per_sample_loss(*params, *prompt, corpus);
    case MetricKind::kExternal:
      return metric_from_file(corpus, spec.path);
  }
  fail(ErrorCode::kInvalidArgument, "unknown metric kind");
}

}  // namespace skillprobe
