#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "skillprobe/corpus.hpp"
#include "skillprobe/model.hpp"
#include "skillprobe/pretrain.hpp"
#include "skillprobe/prompt_tuning.hpp"

namespace skillprobe {

struct RunConfig {
  std::filesystem::path workdir = "work";
  std::uint64_t seed = 0;

  TaskKind task = TaskKind::kTwoSkill;
  std::size_t n = 2000;
  double val_fraction = 0.2;
  double shortcut_fraction = 0.5;

  ModelConfig model;
  PretrainOptions pretrain;
  TuneConfig tune;

  std::string metric;  // empty: per-task default
  std::size_t k = 10;
  bool reuse_dump = false;  // probe scores workdir/dump instead of collecting
  std::string group_key;  // empty: per-task default
  std::size_t bins = 50;
  std::size_t extremal = 10;

  // Sets one `key = value` entry; throws InvalidArgument on unknown keys or
  // malformed values.
  void set(std::string_view key, std::string_view value);
  void validate() const;

  // Stage seeds derived from the global seed.
  std::uint64_t gen_seed() const { return seed; }
  std::uint64_t split_seed() const { return seed + 1; }
  std::uint64_t model_seed() const { return seed + 2; }
  std::uint64_t pretrain_seed() const { return seed + 3; }
  std::uint64_t tune_seed() const { return seed + 4; }

  std::string metric_spec() const;
  std::string group_key_or_default() const;

  std::filesystem::path corpus_path() const { return workdir / "corpus.jsonl"; }
  std::filesystem::path train_path() const { return workdir / "train.jsonl"; }
  std::filesystem::path val_path() const { return workdir / "val.jsonl"; }
  std::filesystem::path model_dir() const { return workdir / "model"; }
  std::filesystem::path prompt_dir() const { return workdir / "prompt"; }
  std::filesystem::path dump_dir() const { return workdir / "dump"; }
  std::filesystem::path metric_path() const { return workdir / "metric.csv"; }
  std::filesystem::path scores_path() const { return workdir / "scores.csv"; }
  std::filesystem::path report_dir() const { return workdir / "report"; }

  // Canonical `key = value` text; parse_run_config(to_text()) round-trips.
  std::string to_text() const;
  static std::vector<std::string> keys();
};

// Applies every `key = value` line of `text` on top of `base`. Blank lines
// and `#` comments are ignored.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

}  // namespace skillprobe
