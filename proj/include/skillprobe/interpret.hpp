#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "skillprobe/corpus.hpp"
#include "skillprobe/probe.hpp"

namespace skillprobe {

using SampleActivation = std::pair<std::string, double>;

struct ExtremalSamples {
  std::vector<SampleActivation> top;     // descending
  std::vector<SampleActivation> bottom;  // ascending
  bool truncated = false;                // n exceeded the sample count
};

// Ties keep sample order in both lists.
ExtremalSamples extremal_samples(const ActivationDump& dump, std::size_t layer,
                                 std::size_t neuron, std::size_t position, std::size_t n);

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::size_t> counts;

  double center(std::size_t b) const { return 0.5 * (edges[b] + edges[b + 1]); }
};

// Equal-width bins over [lo, hi]; the last bin is closed on the right.
Histogram make_histogram(std::span<const double> values, double lo, double hi, std::size_t bins);

struct Kde {
  double bandwidth = 0.0;
  std::vector<double> x;
  std::vector<double> y;
};

inline constexpr std::size_t kKdePoints = 256;

// 1.06 * sample std * n^(-1/5). Zero for fewer than two values.
double silverman_bandwidth(std::span<const double> values);

// Gaussian KDE on kKdePoints over [min - 4h, max + 4h].
Kde gaussian_kde(std::span<const double> values, double bandwidth);

double trapezoid(std::span<const double> x, std::span<const double> y);

struct GroupDistribution {
  std::string label;
  std::size_t count = 0;
  // All activations in the group are equal; the KDE then falls back to the
  // bandwidth of the pooled activations.
  bool degenerate = false;
  Histogram histogram;
  Kde kde;
};

// One distribution per distinct meta[group_key] value, in label order. The
// dump's sample order must match the corpus.
std::vector<GroupDistribution> group_distributions(const ActivationDump& dump, std::size_t layer,
                                                   std::size_t neuron, std::size_t position,
                                                   const Corpus& corpus,
                                                   const std::string& group_key, std::size_t bins);

struct CorrelationHistogram {
  Histogram histogram;  // signed corr over [-1, 1]
  double threshold = 0.0;
  std::size_t k = 0;
};

CorrelationHistogram correlation_histogram(std::span<const NeuronScore> scores, std::size_t bins,
                                           std::size_t k);

struct NeuronReport {
  NeuronScore neuron;
  ExtremalSamples extremes;
  std::vector<GroupDistribution> groups;
};

// Per-task reference thresholds for K = 10 from the probed large model.
// Written to the report as metadata only.
struct ReferenceThreshold {
  const char* task;
  double value;
};
inline constexpr ReferenceThreshold kReferenceThresholds[] = {
    {"heuristic_nli", 0.43}, {"two_skill", 0.83}, {"arith_shortcut", 0.93}};

struct Report {
  std::string task;
  std::string metric;
  std::string group_key;
  std::string model_hash;
  std::string prompt_hash;
  std::size_t k = 0;
  std::size_t n_samples = 0;
  std::size_t n_neurons_total = 0;
  std::optional<CorrelationHistogram> correlations;
  std::vector<NeuronReport> neurons;
};

// Builds NeuronReports for the top-K neurons and the correlation histogram.
Report build_report(const ActivationDump& dump, const Corpus& corpus,
                    std::span<const NeuronScore> scores, std::size_t k,
                    const std::string& group_key, std::size_t n_extremal, std::size_t bins);

// Writes report.json, figure CSVs and SVGs under out_dir. Returns the file
// names written, relative to out_dir.
std::vector<std::string> emit_report(const Report& report, const std::filesystem::path& out_dir);

std::string report_json(const Report& report);

}  // namespace skillprobe
