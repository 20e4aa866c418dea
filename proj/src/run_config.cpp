#include "skillprobe/run_config.hpp"

#include <charconv>
#include <cmath>

#include "skillprobe/error.hpp"
#include "skillprobe/io.hpp"

namespace skillprobe {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    fail(ErrorCode::kInvalidArgument,
         "config key '" + std::string(key) + "': '" + std::string(v) + "' is not a valid number");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) {
      fail(ErrorCode::kInvalidArgument, "config key '" + std::string(key) + "' must be finite");
    }
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorCode::kInvalidArgument, "config key '" + std::string(key) + "' must be true or false");
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  const std::string_view v = trim(value);
  if (key == "workdir") workdir = std::string(v);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
  else if (key == "task") task = parse_task_kind(v);
  else if (key == "n") n = parse_number<std::size_t>(key, v);
  else if (key == "val_fraction") val_fraction = parse_number<double>(key, v);
  else if (key == "shortcut_fraction") shortcut_fraction = parse_number<double>(key, v);
  else if (key == "model.d") model.d = parse_number<int>(key, v);
  else if (key == "model.n_layers") model.n_layers = parse_number<int>(key, v);
  else if (key == "model.m") model.m = parse_number<int>(key, v);
  else if (key == "model.n_heads") model.n_heads = parse_number<int>(key, v);
  else if (key == "model.max_seq_len") model.max_seq_len = parse_number<int>(key, v);
  else if (key == "model.tied_head") model.tied_head = parse_bool(key, v);
  else if (key == "pretrain.steps") pretrain.steps = parse_number<std::size_t>(key, v);
  else if (key == "pretrain.lr") pretrain.lr = parse_number<double>(key, v);
  else if (key == "pretrain.batch_size") pretrain.batch_size = parse_number<std::size_t>(key, v);
  else if (key == "pretrain.grad_clip") pretrain.grad_clip = parse_number<double>(key, v);
  else if (key == "tune.tokens") tune.tokens = parse_number<std::size_t>(key, v);
  else if (key == "tune.lr") tune.lr = parse_number<double>(key, v);
  else if (key == "tune.steps") tune.steps = parse_number<std::size_t>(key, v);
  else if (key == "tune.batch_size") tune.batch_size = parse_number<std::size_t>(key, v);
  else if (key == "tune.weight_decay") tune.weight_decay = parse_number<double>(key, v);
  else if (key == "metric") metric = std::string(v);
  else if (key == "k") k = parse_number<std::size_t>(key, v);
  else if (key == "probe.reuse_dump") reuse_dump = parse_bool(key, v);
  else if (key == "report.group_key") group_key = std::string(v);
  else if (key == "report.bins") bins = parse_number<std::size_t>(key, v);
  else if (key == "report.extremal") extremal = parse_number<std::size_t>(key, v);
  else fail(ErrorCode::kInvalidArgument, "unknown config key '" + std::string(key) + "'");
}

std::vector<std::string> RunConfig::keys() {
  return {"workdir",        "seed",           "task",
          "n",              "val_fraction",   "shortcut_fraction",
          "model.d",        "model.n_layers", "model.m",
          "model.n_heads",  "model.max_seq_len", "model.tied_head",
          "pretrain.steps", "pretrain.lr",    "pretrain.batch_size",
          "pretrain.grad_clip", "tune.tokens", "tune.lr",
          "tune.steps",     "tune.batch_size", "tune.weight_decay",
          "metric",         "k",              "probe.reuse_dump", "report.group_key",
          "report.bins",    "report.extremal"};
}

void RunConfig::validate() const {
  if (task == TaskKind::kExternal) {
    fail(ErrorCode::kInvalidArgument, "task must be two_skill, heuristic_nli or arith_shortcut");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "val_fraction must lie in (0, 1)");
  }
  if (!(shortcut_fraction >= 0.0 && shortcut_fraction <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "shortcut_fraction must lie in [0, 1]");
  }
  if (k < 1) fail(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (bins < 1) fail(ErrorCode::kInvalidArgument, "report.bins must be >= 1");
  if (extremal < 1) fail(ErrorCode::kInvalidArgument, "report.extremal must be >= 1");
  if (pretrain.batch_size < 1) fail(ErrorCode::kInvalidArgument, "pretrain.batch_size must be >= 1");
  model.validate();
  tune.validate();
}

std::string RunConfig::metric_spec() const {
  if (!metric.empty()) return metric;
  switch (task) {
    case TaskKind::kTwoSkill: return "label:skill=spatial";
    case TaskKind::kHeuristicNli: return "label:entail_label=entail";
    case TaskKind::kArithShortcut: return "loss";
    case TaskKind::kExternal: break;
  }
  return "loss";
}

std::string RunConfig::group_key_or_default() const {
  if (!group_key.empty()) return group_key;
  const std::string spec = metric_spec();
  if (spec.starts_with("label:")) return spec.substr(6, spec.find('=') - 6);
  switch (task) {
    case TaskKind::kTwoSkill: return "skill";
    case TaskKind::kHeuristicNli: return "heuristic";
    case TaskKind::kArithShortcut: return "shortcut";
    case TaskKind::kExternal: break;
  }
  return {};
}

std::string RunConfig::to_text() const {
  std::string s;
  auto kv = [&](const char* k, const std::string& v) { s += std::string(k) + " = " + v + "\n"; };
  kv("workdir", workdir.string());
  kv("seed", std::to_string(seed));
  kv("task", std::string(task_kind_name(task)));
  kv("n", std::to_string(n));
  kv("val_fraction", format_double(val_fraction));
  kv("shortcut_fraction", format_double(shortcut_fraction));
  kv("model.d", std::to_string(model.d));
  kv("model.n_layers", std::to_string(model.n_layers));
  kv("model.m", std::to_string(model.m));
  kv("model.n_heads", std::to_string(model.n_heads));
  kv("model.max_seq_len", std::to_string(model.max_seq_len));
  kv("model.tied_head", model.tied_head ? "true" : "false");
  kv("pretrain.steps", std::to_string(pretrain.steps));
  kv("pretrain.lr", format_double(pretrain.lr));
  kv("pretrain.batch_size", std::to_string(pretrain.batch_size));
  kv("pretrain.grad_clip", format_double(pretrain.grad_clip));
  kv("tune.tokens", std::to_string(tune.tokens));
  kv("tune.lr", format_double(tune.lr));
  kv("tune.steps", std::to_string(tune.steps));
  kv("tune.batch_size", std::to_string(tune.batch_size));
  kv("tune.weight_decay", format_double(tune.weight_decay));
  kv("metric", metric_spec());
  kv("k", std::to_string(k));
  kv("probe.reuse_dump", reuse_dump ? "true" : "false");
  kv("report.group_key", group_key_or_default());
  kv("report.bins", std::to_string(bins));
  kv("report.extremal", std::to_string(extremal));
  return s;
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(i + 1, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(i + 1, "empty key");
    try {
      base.set(key, line.substr(eq + 1));
    } catch (const Error& e) {
      throw ParseError(i + 1, e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  return parse_run_config(read_file(path), std::move(base));
}

}  // namespace skillprobe
