#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skillprobe/corpus.hpp"
#include "skillprobe/metrics.hpp"
#include "skillprobe/model.hpp"
#include "skillprobe/prompt_tuning.hpp"

namespace skillprobe {

// a[sample][layer][neuron][position], stored sample-major as float.
struct ActivationDump {
  std::size_t n_samples = 0;
  std::size_t n_layers = 0;
  std::size_t n_neurons = 0;
  std::size_t n_positions = 0;
  std::vector<float> values;
  std::vector<std::string> sample_ids;
  std::string model_hash;
  std::string prompt_hash;

  std::size_t sample_stride() const { return n_layers * n_neurons * n_positions; }
  std::size_t channel(std::size_t layer, std::size_t neuron, std::size_t position) const {
    return (layer * n_neurons + neuron) * n_positions + position;
  }
  float at(std::size_t sample, std::size_t layer, std::size_t neuron, std::size_t position) const {
    return values[sample * sample_stride() + channel(layer, neuron, position)];
  }
  // Activations of one (layer, neuron, position) across samples.
  std::vector<double> series(std::size_t layer, std::size_t neuron, std::size_t position) const;

  bool operator==(const ActivationDump&) const = default;
};

// Runs every sample through the frozen model with the prompt spliced in and
// captures all L x m x l activations at the prompt slots.
ActivationDump collect_activations(const ModelParams& params, const SoftPrompt& prompt,
                                   const Corpus& val, bool with_completion = false);

// Pearson r in double precision. Throws ZeroVariance or InvalidArgument.
double pearson(std::span<const double> a, std::span<const double> m);

struct NeuronScore {
  int layer = 0;
  int neuron = 0;
  double corr = 0.0;
  int best_position = 0;
  std::size_t rank = 0;

  bool operator==(const NeuronScore&) const = default;
};

// Strict ranking order: |corr| descending, then (layer, neuron) ascending.
bool ranks_before(const NeuronScore& a, const NeuronScore& b);

// One score per (layer, neuron), ranked. corr is the per-position r with the
// largest |r| (sign kept); zero-variance positions count as r = 0.
std::vector<NeuronScore> score_neurons(const ActivationDump& dump, const MetricVector& metric);

struct TopK {
  std::vector<NeuronScore> neurons;
  double threshold = 0.0;  // |corr| of the last returned neuron
  bool truncated = false;  // K exceeded the neuron count
};

TopK select_top_k(std::span<const NeuronScore> scores, std::size_t k);

// Dump directory: manifest.json + activations.bin + sample_ids.txt.
void save_dump(const ActivationDump& dump, const std::filesystem::path& dir);
ActivationDump load_dump(const std::filesystem::path& dir);

struct DumpIssue {
  std::string code;
  std::string message;
};

struct DumpValidation {
  std::vector<DumpIssue> issues;
  std::vector<std::size_t> dims;
  std::size_t n_ids = 0;

  bool ok() const { return issues.empty(); }
  std::string summary() const;
};

DumpValidation validate_dump(const std::filesystem::path& dir);

std::string scores_csv(std::span<const NeuronScore> scores);
std::vector<NeuronScore> parse_scores_csv(std::string_view text);

}  // namespace skillprobe
