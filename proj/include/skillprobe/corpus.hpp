#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace skillprobe {

enum class TaskKind { kTwoSkill, kHeuristicNli, kArithShortcut, kExternal };
enum class Split { kTrain, kVal };

std::string_view task_kind_name(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

// One instruction/completion pair. `meta` keys come from a fixed vocabulary:
// skill, heuristic, entail_label, shortcut, op.
struct Sample {
  std::string id;
  std::string instruction;
  std::string completion;
  std::map<std::string, std::string> meta;

  bool operator==(const Sample&) const = default;
};

struct Corpus {
  TaskKind task_kind = TaskKind::kExternal;
  Split split = Split::kTrain;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool operator==(const Corpus&) const = default;
};

bool is_allowed_meta_key(std::string_view key);

// Throws on empty fields, duplicate ids or unknown meta keys.
void validate_corpus(const Corpus& corpus);

Corpus gen_two_skill(std::size_t n, std::uint64_t seed);
Corpus gen_heuristic_nli(std::size_t n, std::uint64_t seed);
Corpus gen_arith_shortcut(std::size_t n, std::uint64_t seed, double shortcut_fraction);

// Canonical JSONL: id, instruction, completion, meta (sorted keys); one
// object per line, LF terminated.
std::string serialize_corpus(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus parse_corpus(std::string_view text, Split split = Split::kVal);
Corpus load_corpus(const std::filesystem::path& path, Split split = Split::kVal);

// Seeded disjoint split; each side keeps the source order.
std::pair<Corpus, Corpus> split_train_val(const Corpus& corpus, double val_fraction,
                                          std::uint64_t seed);

namespace templates {

// Relative-position question: "Where is the A if it is REL the B
// and the B is on the C?" answered with "The A is REL the C."
Sample spatial_sample(std::string id, std::string_view a, std::string_view relation,
                      std::string_view b, std::string_view c);

std::string nli_instruction(std::string_view premise, std::string_view hypothesis);

Sample nli_sample(std::string id, std::string_view heuristic, std::string_view premise,
                  std::string_view hypothesis, bool entails);

std::string arith_instruction(std::int64_t a, std::int64_t b,
                              const std::vector<std::string>& choices);

}  // namespace templates

}  // namespace skillprobe
