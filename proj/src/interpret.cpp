#include "skillprobe/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <numeric>

#include "json.hpp"

#include "skillprobe/error.hpp"
#include "skillprobe/io.hpp"

namespace skillprobe {

ExtremalSamples extremal_samples(const ActivationDump& dump, std::size_t layer,
                                 std::size_t neuron, std::size_t position, std::size_t n) {
  if (n < 1) fail(ErrorCode::kInvalidArgument, "extremal list length must be >= 1");
  const std::vector<double> a = dump.series(layer, neuron, position);
  std::vector<std::size_t> order(a.size());
  std::iota(order.begin(), order.end(), 0);

  ExtremalSamples out;
  out.truncated = n > a.size();
  const std::size_t take = std::min(n, a.size());
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x] > a[y]; });
  for (std::size_t i = 0; i < take; ++i) out.top.emplace_back(dump.sample_ids[order[i]], a[order[i]]);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x] < a[y]; });
  for (std::size_t i = 0; i < take; ++i) out.bottom.emplace_back(dump.sample_ids[order[i]], a[order[i]]);
  return out;
}

Histogram make_histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (bins < 1) fail(ErrorCode::kInvalidArgument, "histogram needs at least one bin");
  if (!(hi > lo)) fail(ErrorCode::kInvalidArgument, "histogram range is empty");
  Histogram h;
  h.edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
  h.edges[bins] = hi;
  h.counts.assign(bins, 0);
  for (double v : values) {
    if (v < lo || v > hi) continue;
    auto b = static_cast<std::size_t>((v - lo) / width);
    b = std::min(b, bins - 1);
    ++h.counts[b];
  }
  return h;
}

double silverman_bandwidth(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
}

Kde gaussian_kde(std::span<const double> values, double bandwidth) {
  if (values.empty()) fail(ErrorCode::kInvalidArgument, "KDE needs at least one value");
  if (!(bandwidth > 0.0)) fail(ErrorCode::kInvalidArgument, "KDE bandwidth must be > 0");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn - 4.0 * bandwidth;
  const double hi = *mx + 4.0 * bandwidth;
  Kde k;
  k.bandwidth = bandwidth;
  k.x.resize(kKdePoints);
  k.y.resize(kKdePoints);
  const double norm = 1.0 / (static_cast<double>(values.size()) * bandwidth *
                             std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t p = 0; p < kKdePoints; ++p) {
    const double x = lo + (hi - lo) * static_cast<double>(p) / static_cast<double>(kKdePoints - 1);
    double acc = 0.0;
    for (double v : values) {
      const double z = (x - v) / bandwidth;
      acc += std::exp(-0.5 * z * z);
    }
    k.x[p] = x;
    k.y[p] = acc * norm;
  }
  return k;
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
  double area = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) area += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return area;
}

namespace {

void check_alignment(const ActivationDump& dump, const Corpus& corpus) {
  if (corpus.size() != dump.n_samples) {
    fail(ErrorCode::kAlignmentError, "corpus has " + std::to_string(corpus.size()) +
                                         " samples, dump has " + std::to_string(dump.n_samples));
  }
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    if (corpus.samples[s].id != dump.sample_ids[s]) {
      fail(ErrorCode::kAlignmentError, "dump sample " + std::to_string(s) + " is '" +
                                           dump.sample_ids[s] + "', corpus has '" +
                                           corpus.samples[s].id + "'");
    }
  }
}

double fallback_bandwidth(std::span<const double> pooled, double value) {
  const double h = silverman_bandwidth(pooled);
  if (h > 0.0) return h;
  return 0.1 * std::max(1.0, std::abs(value));
}

}  // namespace

std::vector<GroupDistribution> group_distributions(const ActivationDump& dump, std::size_t layer,
                                                   std::size_t neuron, std::size_t position,
                                                   const Corpus& corpus,
                                                   const std::string& group_key,
                                                   std::size_t bins) {
  check_alignment(dump, corpus);
  const std::vector<double> a = dump.series(layer, neuron, position);
  std::map<std::string, std::vector<double>> groups;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto& meta = corpus.samples[s].meta;
    auto it = meta.find(group_key);
    if (it == meta.end()) {
      fail(ErrorCode::kMissingLabel, "sample '" + corpus.samples[s].id + "' has no meta." + group_key);
    }
    groups[it->second].push_back(a[s]);
  }
  auto [mn, mx] = std::minmax_element(a.begin(), a.end());
  double lo = *mn;
  double hi = *mx;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }

  std::vector<GroupDistribution> out;
  for (const auto& [label, values] : groups) {
    GroupDistribution g;
    g.label = label;
    g.count = values.size();
    g.histogram = make_histogram(values, lo, hi, bins);
    const auto [gmn, gmx] = std::minmax_element(values.begin(), values.end());
    g.degenerate = *gmn == *gmx;
    const double h = g.degenerate ? fallback_bandwidth(a, *gmn) : silverman_bandwidth(values);
    g.kde = gaussian_kde(values, h);
    out.push_back(std::move(g));
  }
  return out;
}

CorrelationHistogram correlation_histogram(std::span<const NeuronScore> scores, std::size_t bins,
                                           std::size_t k) {
  if (scores.empty()) fail(ErrorCode::kInvalidArgument, "correlation histogram needs scores");
  std::vector<double> corr;
  corr.reserve(scores.size());
  for (const auto& s : scores) corr.push_back(s.corr);
  CorrelationHistogram out;
  out.histogram = make_histogram(corr, -1.0, 1.0, bins);
  out.threshold = select_top_k(scores, k).threshold;
  out.k = k;
  return out;
}

Report build_report(const ActivationDump& dump, const Corpus& corpus,
                    std::span<const NeuronScore> scores, std::size_t k,
                    const std::string& group_key, std::size_t n_extremal, std::size_t bins) {
  check_alignment(dump, corpus);
  Report r;
  r.task = std::string(task_kind_name(corpus.task_kind));
  r.group_key = group_key;
  r.model_hash = dump.model_hash;
  r.prompt_hash = dump.prompt_hash;
  r.k = k;
  r.n_samples = dump.n_samples;
  r.n_neurons_total = scores.size();
  if (scores.empty()) return r;
  r.correlations = correlation_histogram(scores, bins, k);
  for (const auto& s : select_top_k(scores, k).neurons) {
    NeuronReport nr;
    nr.neuron = s;
    const auto l = static_cast<std::size_t>(s.layer);
    const auto i = static_cast<std::size_t>(s.neuron);
    const auto p = static_cast<std::size_t>(s.best_position);
    nr.extremes = extremal_samples(dump, l, i, p, n_extremal);
    if (!group_key.empty()) nr.groups = group_distributions(dump, l, i, p, corpus, group_key, bins);
    r.neurons.push_back(std::move(nr));
  }
  return r;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

// Plot frame mapping data coordinates into a fixed 640x400 canvas.
class Plot {
 public:
  Plot(double x0, double x1, double y0, double y1) : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
    if (!(x1_ > x0_)) x1_ = x0_ + 1.0;
    if (!(y1_ > y0_)) y1_ = y0_ + 1.0;
  }

  double px(double x) const { return kLeft + (x - x0_) / (x1_ - x0_) * kWidth; }
  double py(double y) const { return kTop + kHeight - (y - y0_) / (y1_ - y0_) * kHeight; }

  std::string open(const std::string& title, const std::string& xlabel,
                   const std::string& ylabel) const {
    std::string s =
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
        "viewBox=\"0 0 640 400\" font-family=\"sans-serif\" font-size=\"12\">\n"
        "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" + xml_escape(title) +
         "</text>\n";
    s += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop + kHeight) + "\" x2=\"" +
         fmt(kLeft + kWidth) + "\" y2=\"" + fmt(kTop + kHeight) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" + fmt(kLeft) +
         "\" y2=\"" + fmt(kTop + kHeight) + "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double xv = x0_ + (x1_ - x0_) * t / 4.0;
      const double yv = y0_ + (y1_ - y0_) * t / 4.0;
      s += "<text x=\"" + fmt(px(xv)) + "\" y=\"" + fmt(kTop + kHeight + 16) +
           "\" text-anchor=\"middle\">" + fmt(xv) + "</text>\n";
      s += "<text x=\"" + fmt(kLeft - 6) + "\" y=\"" + fmt(py(yv) + 4) +
           "\" text-anchor=\"end\">" + fmt(yv) + "</text>\n";
    }
    s += "<text x=\"" + fmt(kLeft + kWidth / 2) + "\" y=\"390\" text-anchor=\"middle\">" +
         xml_escape(xlabel) + "</text>\n";
    s += "<text x=\"14\" y=\"" + fmt(kTop + kHeight / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " + fmt(kTop + kHeight / 2) +
         ")\">" + xml_escape(ylabel) + "</text>\n";
    return s;
  }

  std::string polyline(std::span<const double> x, std::span<const double> y,
                       const char* color) const {
    std::string s = "<polyline fill=\"none\" stroke=\"" + std::string(color) +
                    "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (i) s += ' ';
      s += fmt(px(x[i])) + "," + fmt(py(y[i]));
    }
    return s + "\"/>\n";
  }

  std::string bar(double xa, double xb, double h, const char* color, double opacity) const {
    const double top = py(h);
    return "<rect x=\"" + fmt(px(xa)) + "\" y=\"" + fmt(top) + "\" width=\"" +
           fmt(std::max(0.0, px(xb) - px(xa))) + "\" height=\"" +
           fmt(std::max(0.0, py(y0_) - top)) + "\" fill=\"" + color + "\" fill-opacity=\"" +
           fmt(opacity) + "\"/>\n";
  }

  std::string dashed_vline(double x, const char* color) const {
    return "<line x1=\"" + fmt(px(x)) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" + fmt(px(x)) +
           "\" y2=\"" + fmt(kTop + kHeight) + "\" stroke=\"" + color +
           "\" stroke-dasharray=\"6,4\" stroke-width=\"1.5\"/>\n";
  }

  std::string legend(std::size_t row, const std::string& label, const char* color) const {
    const double y = kTop + 12 + 16.0 * static_cast<double>(row);
    const double x = kLeft + kWidth - 150;
    return "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
           color + "\"/>\n<text x=\"" + fmt(x + 16) + "\" y=\"" + fmt(y) + "\">" +
           xml_escape(label) + "</text>\n";
  }

  static std::string close() { return "</svg>\n"; }

 private:
  static constexpr double kLeft = 70, kTop = 40, kWidth = 540, kHeight = 300;
  double x0_, x1_, y0_, y1_;
};

std::string neuron_stem(const NeuronReport& nr) {
  return "neuron_" + std::to_string(nr.neuron.rank) + "_L" + std::to_string(nr.neuron.layer) +
         "_N" + std::to_string(nr.neuron.neuron);
}

std::string correlation_svg(const CorrelationHistogram& ch) {
  const auto& h = ch.histogram;
  const double ymax =
      static_cast<double>(*std::max_element(h.counts.begin(), h.counts.end()));
  Plot plot(-1.0, 1.0, 0.0, std::max(1.0, ymax));
  std::string s = plot.open("Distribution of correlation values (top-" + std::to_string(ch.k) +
                                " threshold " + fmt(ch.threshold) + ")",
                            "correlation", "neurons");
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    s += plot.bar(h.edges[b], h.edges[b + 1], static_cast<double>(h.counts[b]), kPalette[0], 0.8);
  }
  s += plot.dashed_vline(-ch.threshold, "#d62728");
  s += plot.dashed_vline(ch.threshold, "#d62728");
  return s + Plot::close();
}

std::string kde_svg(const NeuronReport& nr) {
  double x0 = 0, x1 = 0, ymax = 0;
  bool first = true;
  for (const auto& g : nr.groups) {
    if (first) {
      x0 = g.kde.x.front();
      x1 = g.kde.x.back();
      first = false;
    }
    x0 = std::min(x0, g.kde.x.front());
    x1 = std::max(x1, g.kde.x.back());
    ymax = std::max(ymax, *std::max_element(g.kde.y.begin(), g.kde.y.end()));
  }
  Plot plot(x0, x1, 0.0, ymax * 1.05);
  std::string s = plot.open("Layer " + std::to_string(nr.neuron.layer) + " neuron " +
                                std::to_string(nr.neuron.neuron) + " position " +
                                std::to_string(nr.neuron.best_position) + " (corr " +
                                fmt(nr.neuron.corr) + ")",
                            "activation", "density");
  for (std::size_t gi = 0; gi < nr.groups.size(); ++gi) {
    const char* color = kPalette[gi % std::size(kPalette)];
    s += plot.polyline(nr.groups[gi].kde.x, nr.groups[gi].kde.y, color);
    s += plot.legend(gi, nr.groups[gi].label + " (n=" + std::to_string(nr.groups[gi].count) + ")",
                     color);
  }
  return s + Plot::close();
}

nlohmann::ordered_json histogram_json(const Histogram& h) {
  nlohmann::ordered_json j;
  j["edges"] = h.edges;
  j["counts"] = h.counts;
  return j;
}

nlohmann::ordered_json samples_json(const std::vector<SampleActivation>& list) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& [id, v] : list) {
    nlohmann::ordered_json e;
    e["id"] = id;
    e["activation"] = v;
    arr.push_back(std::move(e));
  }
  return arr;
}

}  // namespace

std::string report_json(const Report& report) {
  nlohmann::ordered_json j;
  j["format"] = "skillprobe-report/1";
  j["task"] = report.task;
  j["metric"] = report.metric;
  j["group_key"] = report.group_key;
  j["model_hash"] = report.model_hash;
  j["prompt_hash"] = report.prompt_hash;
  j["k"] = report.k;
  j["n_samples"] = report.n_samples;
  j["n_neurons_total"] = report.n_neurons_total;
  nlohmann::ordered_json refs;
  for (const auto& r : kReferenceThresholds) refs[r.task] = r.value;
  j["reference_thresholds"] = refs;
  if (report.correlations) {
    const auto& ch = *report.correlations;
    nlohmann::ordered_json c = histogram_json(ch.histogram);
    c["k"] = ch.k;
    c["threshold"] = ch.threshold;
    c["csv"] = "correlation_histogram.csv";
    c["svg"] = "correlation_histogram.svg";
    j["correlation_histogram"] = std::move(c);
  } else {
    j["correlation_histogram"] = nullptr;
  }
  auto neurons = nlohmann::ordered_json::array();
  for (const auto& nr : report.neurons) {
    nlohmann::ordered_json n;
    n["rank"] = nr.neuron.rank;
    n["layer"] = nr.neuron.layer;
    n["neuron"] = nr.neuron.neuron;
    n["best_position"] = nr.neuron.best_position;
    n["corr"] = nr.neuron.corr;
    n["top_samples"] = samples_json(nr.extremes.top);
    n["bottom_samples"] = samples_json(nr.extremes.bottom);
    n["extremes_truncated"] = nr.extremes.truncated;
    auto groups = nlohmann::ordered_json::array();
    for (const auto& g : nr.groups) {
      nlohmann::ordered_json gj;
      gj["label"] = g.label;
      gj["count"] = g.count;
      gj["degenerate"] = g.degenerate;
      gj["bandwidth"] = g.kde.bandwidth;
      gj["histogram"] = histogram_json(g.histogram);
      groups.push_back(std::move(gj));
    }
    n["groups"] = std::move(groups);
    if (!nr.groups.empty()) {
      const std::string stem = neuron_stem(nr);
      n["figures"] = {{"kde_csv", stem + "_kde.csv"},
                      {"kde_svg", stem + "_kde.svg"},
                      {"hist_csv", stem + "_hist.csv"}};
    }
    neurons.push_back(std::move(n));
  }
  j["neurons"] = std::move(neurons);
  return j.dump(2) + "\n";
}

std::vector<std::string> emit_report(const Report& report, const std::filesystem::path& out_dir) {
  std::vector<std::string> written;
  auto put = [&](const std::string& name, const std::string& bytes) {
    write_file_atomic(out_dir / name, bytes);
    written.push_back(name);
  };
  put("report.json", report_json(report));
  if (report.correlations) {
    const auto& h = report.correlations->histogram;
    std::string csv = "x,y\n";
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      csv += format_double(h.center(b)) + "," + std::to_string(h.counts[b]) + "\n";
    }
    put("correlation_histogram.csv", csv);
    put("correlation_histogram.svg", correlation_svg(*report.correlations));
  }
  for (const auto& nr : report.neurons) {
    if (nr.groups.empty()) continue;
    const std::string stem = neuron_stem(nr);
    std::string kde = "x,y,group\n";
    std::string hist = "x,y,group\n";
    for (const auto& g : nr.groups) {
      const std::string label = csv_field(g.label);
      for (std::size_t p = 0; p < g.kde.x.size(); ++p) {
        kde += format_double(g.kde.x[p]) + "," + format_double(g.kde.y[p]) + "," + label + "\n";
      }
      for (std::size_t b = 0; b < g.histogram.counts.size(); ++b) {
        hist += format_double(g.histogram.center(b)) + "," +
                std::to_string(g.histogram.counts[b]) + "," + label + "\n";
      }
    }
    put(stem + "_kde.csv", kde);
    put(stem + "_kde.svg", kde_svg(nr));
    put(stem + "_hist.csv", hist);
  }
  return written;
}

}  // namespace skillprobe
