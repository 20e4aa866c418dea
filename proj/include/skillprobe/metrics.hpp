#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "skillprobe/corpus.hpp"
#include "skillprobe/model.hpp"
#include "skillprobe/prompt_tuning.hpp"

namespace skillprobe {

enum class MetricKind { kBinaryLabel, kPerSampleLoss, kExternal };

std::string_view metric_kind_name(MetricKind kind);

// Helper metric m(S_val): one finite value per corpus sample, in corpus order.
// Values are kept raw (no standardization).
struct MetricVector {
  std::vector<double> values;
  MetricKind kind = MetricKind::kExternal;
  std::string spec;

  std::size_t size() const { return values.size(); }
  bool operator==(const MetricVector&) const = default;
};

// 1 where meta[key] == positive, else 0.
MetricVector metric_binary_label(const Corpus& corpus, std::string_view key,
                                 std::string_view positive);

// prompt_loss per sample. Throws ModelPromptMismatch when the prompt was not
// trained against `params`.
MetricVector metric_per_sample_loss(const ModelParams& params, const SoftPrompt& prompt,
                                    const Corpus& corpus);

// CSV `sample_id,value`, aligned to the corpus by id.
MetricVector parse_metric_csv(const Corpus& corpus, std::string_view text);
MetricVector metric_from_file(const Corpus& corpus, const std::filesystem::path& path);
std::string metric_csv(const Corpus& corpus, const MetricVector& metric);

// `label:<key>=<positive>` | `loss` | `file:<path>`
struct MetricSpec {
  MetricKind kind = MetricKind::kBinaryLabel;
  std::string key;
  std::string positive;
  std::string path;

  static MetricSpec parse(std::string_view text);
  std::string str() const;
};

// Loss metrics need params and prompt; the others ignore them.
MetricVector compute_metric(const MetricSpec& spec, const Corpus& corpus,
                            const ModelParams* params, const SoftPrompt* prompt);

}  // namespace skillprobe
