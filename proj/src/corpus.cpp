#include "skillprobe/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <set>
#include <unordered_set>

#include "json.hpp"

#include "skillprobe/error.hpp"
#include "skillprobe/io.hpp"

namespace skillprobe {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::array<std::string_view, 5> kMetaKeys{"entail_label", "heuristic", "op",
                                                    "shortcut", "skill"};

// Word lists for the template generators.
constexpr std::array<std::string_view, 14> kObjects{
    "ball", "box", "table", "cup", "lamp", "book", "chair",
    "vase", "pen", "plate", "shelf", "basket", "clock", "bottle"};

struct Relation {
  std::string_view text;
  std::string_view inverse;
};
constexpr std::array<Relation, 6> kRelations{{
    {"to the left of", "to the right of"},
    {"to the right of", "to the left of"},
    {"on", "under"},
    {"under", "on"},
    {"behind", "in front of"},
    {"in front of", "behind"},
}};

constexpr std::array<std::string_view, 12> kTopics{
    "time", "hope", "memory", "the city", "love", "the ocean",
    "anger", "a library", "silence", "childhood", "grief", "the night"};
constexpr std::array<std::string_view, 12> kVehicles{
    "river", "thief", "garden", "storm", "lighthouse", "mirror",
    "fire", "cage", "map", "song", "bridge", "candle"};
constexpr std::array<std::string_view, 8> kVehicleClauses{
    "that never stops moving", "that hides in plain sight", "that grows in the dark",
    "that carries everything away", "that shines for strangers", "that remembers every face",
    "that burns quietly", "that opens at dawn"};

constexpr std::array<std::string_view, 14> kNouns{
    "doctor", "lawyer", "actor", "artist", "banker", "student", "senator",
    "judge", "author", "manager", "tourist", "secretary", "professor", "athlete"};

struct Verb {
  std::string_view past;
  std::string_view participle;
};
constexpr std::array<Verb, 10> kTransitive{{
    {"saw", "seen"},
    {"advised", "advised"},
    {"helped", "helped"},
    {"called", "called"},
    {"thanked", "thanked"},
    {"avoided", "avoided"},
    {"recommended", "recommended"},
    {"supported", "supported"},
    {"introduced", "introduced"},
    {"contacted", "contacted"},
}};
constexpr std::array<std::string_view, 9> kIntransitive{
    "danced", "slept", "waited", "shouted", "resigned", "laughed", "arrived", "left", "ran"};
constexpr std::array<std::string_view, 3> kAssertiveAdverbs{"Certainly", "Clearly", "Obviously"};
constexpr std::array<std::string_view, 3> kConditionals{"If", "Unless", "Whether or not"};

class Picker {
 public:
  explicit Picker(std::uint64_t seed) : rng_(seed) {}

  std::size_t below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
  }
  template <typename T, std::size_t N>
  const T& pick(const std::array<T, N>& items) {
    return items[below(N)];
  }
  // Two distinct entries.
  template <typename T, std::size_t N>
  std::pair<T, T> pick_two(const std::array<T, N>& items) {
    const std::size_t i = below(N);
    std::size_t j = below(N - 1);
    if (j >= i) ++j;
    return {items[i], items[j]};
  }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), rng_);
  }

 private:
  std::mt19937_64 rng_;
};

std::string capitalize(std::string_view s) {
  std::string out(s);
  if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

std::string make_id(std::string_view prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 5) digits.insert(0, 5 - digits.size(), '0');
  return std::string(prefix) + "-" + digits;
}

// Class labels 0..k-1 repeated to length n, then shuffled; counts differ by <= 1.
std::vector<std::size_t> balanced_labels(std::size_t n, std::size_t k, Picker& rng) {
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % k;
  rng.shuffle(labels);
  return labels;
}

Sample spatial_question(std::string id, Picker& rng) {
  const std::size_t form = rng.below(3);
  if (form == 0) {
    auto [a, b] = rng.pick_two(kObjects);
    std::string_view c = rng.pick(kObjects);
    while (c == a || c == b) c = rng.pick(kObjects);
    const auto& rel = kRelations[rng.below(2)];  // left / right
    return templates::spatial_sample(std::move(id), a, rel.text, b, c);
  }
  Sample s;
  s.id = std::move(id);
  s.meta["skill"] = "spatial";
  if (form == 1) {
    auto [a, b] = rng.pick_two(kObjects);
    const auto& rel = rng.pick(kRelations);
    s.instruction = "Q: The " + std::string(a) + " is " + std::string(rel.text) + " the " +
                    std::string(b) + ". Where is the " + std::string(b) +
                    " relative to the " + std::string(a) + "?";
    s.completion = "The " + std::string(b) + " is " + std::string(rel.inverse) + " the " +
                   std::string(a) + ".";
    return s;
  }
  auto [a, b] = rng.pick_two(kObjects);
  std::string_view c = rng.pick(kObjects);
  while (c == a || c == b) c = rng.pick(kObjects);
  // Transitive relations only: left/right/behind/in front of.
  constexpr std::array<std::size_t, 4> kTransitiveRel{0, 1, 4, 5};
  const auto& rel = kRelations[kTransitiveRel[rng.below(4)]];
  s.instruction = "Q: If the " + std::string(a) + " is " + std::string(rel.text) + " the " +
                  std::string(b) + " and the " + std::string(c) + " is " +
                  std::string(rel.text) + " the " + std::string(a) + ", where is the " +
                  std::string(c) + " relative to the " + std::string(b) + "?";
  s.completion = "The " + std::string(c) + " is " + std::string(rel.text) + " the " +
                 std::string(b) + ".";
  return s;
}

Sample metaphor_question(std::string id, Picker& rng) {
  Sample s;
  s.id = std::move(id);
  s.meta["skill"] = "metaphor";
  const std::string topic(rng.pick(kTopics));
  const std::string vehicle(rng.pick(kVehicles));
  switch (rng.below(3)) {
    case 0:
      s.instruction = "Q: Write a metaphor about " + topic + ".";
      s.completion = capitalize(topic) + " is a " + vehicle + " " +
                     std::string(rng.pick(kVehicleClauses)) + ".";
      break;
    case 1:
      s.instruction = "Q: What is " + topic + " like?";
      s.completion = capitalize(topic) + " is like a " + vehicle + ".";
      break;
    default:
      s.instruction = "Q: Describe " + topic + " as if it were a " + vehicle + ".";
      s.completion = capitalize(topic) + " is a " + vehicle + " " +
                     std::string(rng.pick(kVehicleClauses)) + ".";
      break;
  }
  return s;
}

std::string the(std::string_view noun) { return "the " + std::string(noun); }

Sample nli_question(std::string id, std::size_t heuristic, Picker& rng) {
  const bool entails = rng.below(2) == 0;
  auto [n1, n2] = rng.pick_two(kNouns);
  std::string premise, hypothesis;
  std::string_view name;
  switch (heuristic) {
    case 0: {
      name = "lexical_overlap";
      const auto& v = rng.pick(kTransitive);
      if (entails) {
        premise = "The " + std::string(n2) + " was " + std::string(v.participle) + " by " + the(n1);
        hypothesis = "The " + std::string(n1) + " " + std::string(v.past) + " " + the(n2);
      } else {
        premise = "The " + std::string(n1) + " " + std::string(v.past) + " " + the(n2);
        hypothesis = "The " + std::string(n2) + " " + std::string(v.past) + " " + the(n1);
      }
      break;
    }
    case 1: {
      name = "subsequence";
      const std::string vi(rng.pick(kIntransitive));
      if (entails) {
        premise = "The " + std::string(n1) + " and " + the(n2) + " " + vi;
      } else {
        premise = "The " + std::string(n1) + " near " + the(n2) + " " + vi;
      }
      hypothesis = "The " + std::string(n2) + " " + vi;
      break;
    }
    default: {
      name = "constituent";
      if (entails) {
        const auto& v = rng.pick(kTransitive);
        premise = std::string(rng.pick(kAssertiveAdverbs)) + " " + the(n1) + " " +
                  std::string(v.past) + " " + the(n2);
        hypothesis = "The " + std::string(n1) + " " + std::string(v.past) + " " + the(n2);
      } else {
        auto [v1, v2] = rng.pick_two(kIntransitive);
        premise = std::string(rng.pick(kConditionals)) + " " + the(n1) + " " + std::string(v1) +
                  ", " + the(n2) + " " + std::string(v2);
        hypothesis = "The " + std::string(n1) + " " + std::string(v1);
      }
      break;
    }
  }
  return templates::nli_sample(std::move(id), name, premise, hypothesis, entails);
}

// Distractors that differ from `truth` only in the final digit.
std::vector<std::string> last_digit_distractors(const std::string& truth, Picker& rng) {
  std::vector<char> digits;
  for (char c = '0'; c <= '9'; ++c) {
    if (c != truth.back()) digits.push_back(c);
  }
  rng.shuffle(digits);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < 4; ++i) {
    std::string d = truth;
    d.back() = digits[i];
    out.push_back(std::move(d));
  }
  return out;
}

// Unrelated numbers of the same length that end in the same digit as `truth`.
std::vector<std::string> same_last_digit_distractors(const std::string& truth, Picker& rng) {
  std::vector<std::string> out;
  while (out.size() < 4) {
    std::string d = truth;
    d[0] = static_cast<char>('1' + rng.below(9));
    for (std::size_t i = 1; i + 1 < d.size(); ++i) d[i] = static_cast<char>('0' + rng.below(10));
    if (d == truth || std::find(out.begin(), out.end(), d) != out.end()) continue;
    out.push_back(std::move(d));
  }
  return out;
}

Sample arith_question(std::string id, bool shortcut, Picker& rng) {
  const std::int64_t a = rng.between(1000, 99999);
  const std::int64_t b = rng.between(1000, 99999);
  const std::string truth = std::to_string(a * b);
  std::vector<std::string> choices = shortcut ? last_digit_distractors(truth, rng)
                                              : same_last_digit_distractors(truth, rng);
  const std::size_t slot = rng.below(5);
  choices.insert(choices.begin() + static_cast<std::ptrdiff_t>(slot), truth);
  Sample s;
  s.id = std::move(id);
  s.instruction = templates::arith_instruction(a, b, choices);
  s.completion = truth;
  s.meta["op"] = "times";
  s.meta["shortcut"] = shortcut ? "true" : "false";
  return s;
}

TaskKind infer_task_kind(const std::vector<Sample>& samples) {
  auto all_have = [&](std::string_view key) {
    return std::all_of(samples.begin(), samples.end(),
                       [&](const Sample& s) { return s.meta.count(std::string(key)) > 0; });
  };
  if (all_have("skill")) return TaskKind::kTwoSkill;
  if (all_have("heuristic")) return TaskKind::kHeuristicNli;
  if (all_have("shortcut")) return TaskKind::kArithShortcut;
  return TaskKind::kExternal;
}

}  // namespace

std::string_view task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kTwoSkill: return "two_skill";
    case TaskKind::kHeuristicNli: return "heuristic_nli";
    case TaskKind::kArithShortcut: return "arith_shortcut";
    case TaskKind::kExternal: return "external";
  }
  return "external";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "two_skill" || name == "skill") return TaskKind::kTwoSkill;
  if (name == "heuristic_nli" || name == "nli" || name == "hans") return TaskKind::kHeuristicNli;
  if (name == "arith_shortcut" || name == "arith") return TaskKind::kArithShortcut;
  if (name == "external") return TaskKind::kExternal;
  fail(ErrorCode::kInvalidArgument, "unknown task kind '" + std::string(name) + "'");
}

bool is_allowed_meta_key(std::string_view key) {
  return std::find(kMetaKeys.begin(), kMetaKeys.end(), key) != kMetaKeys.end();
}

void validate_corpus(const Corpus& corpus) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const Sample& s = corpus.samples[i];
    if (s.id.empty()) throw ParseError(i + 1, "empty id");
    if (s.instruction.empty()) throw ParseError(i + 1, "empty instruction in '" + s.id + "'");
    if (s.completion.empty()) throw ParseError(i + 1, "empty completion in '" + s.id + "'");
    for (const auto& [key, value] : s.meta) {
      if (!is_allowed_meta_key(key)) {
        throw ParseError(i + 1, "meta key '" + key + "' is not in the sample schema");
      }
    }
    if (!seen.insert(s.id).second) {
      fail(ErrorCode::kDuplicateId, "duplicate sample id '" + s.id + "'");
    }
  }
}

Corpus gen_two_skill(std::size_t n, std::uint64_t seed) {
  if (n < 2) fail(ErrorCode::kInvalidArgument, "gen_two_skill needs n >= 2");
  Picker rng(seed);
  const auto labels = balanced_labels(n, 2, rng);
  Corpus corpus{TaskKind::kTwoSkill, Split::kTrain, {}};
  corpus.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto id = make_id("skill", i);
    corpus.samples.push_back(labels[i] == 0 ? spatial_question(std::move(id), rng)
                                            : metaphor_question(std::move(id), rng));
  }
  return corpus;
}

Corpus gen_heuristic_nli(std::size_t n, std::uint64_t seed) {
  if (n < 3) fail(ErrorCode::kInvalidArgument, "gen_heuristic_nli needs n >= 3");
  Picker rng(seed);
  const auto labels = balanced_labels(n, 3, rng);
  Corpus corpus{TaskKind::kHeuristicNli, Split::kTrain, {}};
  corpus.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    corpus.samples.push_back(nli_question(make_id("nli", i), labels[i], rng));
  }
  return corpus;
}

Corpus gen_arith_shortcut(std::size_t n, std::uint64_t seed, double shortcut_fraction) {
  if (n < 1) fail(ErrorCode::kInvalidArgument, "gen_arith_shortcut needs n >= 1");
  if (!(shortcut_fraction >= 0.0 && shortcut_fraction <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "shortcut_fraction must lie in [0, 1]");
  }
  Picker rng(seed);
  const auto n_true = static_cast<std::size_t>(std::llround(shortcut_fraction * static_cast<double>(n)));
  std::vector<bool> flags(n, false);
  std::fill(flags.begin(), flags.begin() + static_cast<std::ptrdiff_t>(n_true), true);
  rng.shuffle(flags);
  Corpus corpus{TaskKind::kArithShortcut, Split::kTrain, {}};
  corpus.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    corpus.samples.push_back(arith_question(make_id("arith", i), flags[i], rng));
  }
  return corpus;
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const Sample& s : corpus.samples) {
    ordered_json j;
    j["id"] = s.id;
    j["instruction"] = s.instruction;
    j["completion"] = s.completion;
    ordered_json meta = ordered_json::object();
    for (const auto& [k, v] : s.meta) meta[k] = v;  // std::map iterates sorted
    j["meta"] = std::move(meta);
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_corpus(corpus));
}

Corpus parse_corpus(std::string_view text, Split split) {
  const auto lines = split_lines(text);
  if (lines.empty()) fail(ErrorCode::kEmptyCorpus, "corpus has no samples");
  Corpus corpus;
  corpus.split = split;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
    Sample s;
    auto read_string = [&](const char* key, std::string& dst) {
      auto it = j.find(key);
      if (it == j.end() || !it->is_string()) {
        throw ParseError(line_no, std::string("missing string field '") + key + "'");
      }
      dst = it->get<std::string>();
      if (dst.empty()) throw ParseError(line_no, std::string("empty field '") + key + "'");
    };
    read_string("id", s.id);
    read_string("instruction", s.instruction);
    read_string("completion", s.completion);
    if (auto it = j.find("meta"); it != j.end()) {
      if (!it->is_object()) throw ParseError(line_no, "'meta' must be an object");
      for (const auto& [k, v] : it->items()) {
        if (!v.is_string()) throw ParseError(line_no, "meta value for '" + k + "' must be a string");
        if (!is_allowed_meta_key(k)) {
          throw ParseError(line_no, "meta key '" + k + "' is not in the sample schema");
        }
        s.meta[k] = v.get<std::string>();
      }
    }
    if (!seen.insert(s.id).second) {
      fail(ErrorCode::kDuplicateId, "line " + std::to_string(line_no) + ": duplicate sample id '" + s.id + "'");
    }
    corpus.samples.push_back(std::move(s));
  }
  corpus.task_kind = infer_task_kind(corpus.samples);
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, Split split) {
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::kIoError, path.string() + ": no such file");
  }
  return parse_corpus(read_file(path), split);
}

std::pair<Corpus, Corpus> split_train_val(const Corpus& corpus, double val_fraction,
                                          std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "val_fraction must lie in (0, 1)");
  }
  const std::size_t n = corpus.size();
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n > 1 ? n - 1 : 1);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Picker rng(seed ^ 0x5eed5eed5eedULL);
  rng.shuffle(order);
  std::vector<bool> is_val(n, false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
  Corpus train{corpus.task_kind, Split::kTrain, {}};
  Corpus val{corpus.task_kind, Split::kVal, {}};
  for (std::size_t i = 0; i < n; ++i) {
    (is_val[i] ? val : train).samples.push_back(corpus.samples[i]);
  }
  return {std::move(train), std::move(val)};
}

namespace templates {

Sample spatial_sample(std::string id, std::string_view a, std::string_view relation,
                      std::string_view b, std::string_view c) {
  Sample s;
  s.id = std::move(id);
  s.instruction = "Q: Where is the " + std::string(a) + " if it is " + std::string(relation) +
                  " the " + std::string(b) + " and the " + std::string(b) + " is on the " +
                  std::string(c) + "?";
  s.completion = "The " + std::string(a) + " is " + std::string(relation) + " the " +
                 std::string(c) + ".";
  s.meta["skill"] = "spatial";
  return s;
}

std::string nli_instruction(std::string_view premise, std::string_view hypothesis) {
  return "Premise: " + std::string(premise) + ". Hypothesis: " + std::string(hypothesis) +
         ". Does the premise entail the hypothesis?";
}

Sample nli_sample(std::string id, std::string_view heuristic, std::string_view premise,
                  std::string_view hypothesis, bool entails) {
  Sample s;
  s.id = std::move(id);
  s.instruction = nli_instruction(premise, hypothesis);
  s.completion = entails ? "yes" : "no";
  s.meta["heuristic"] = std::string(heuristic);
  s.meta["entail_label"] = entails ? "entail" : "non_entail";
  return s;
}

std::string arith_instruction(std::int64_t a, std::int64_t b,
                              const std::vector<std::string>& choices) {
  std::string out = "Question: What is " + std::to_string(a) + " times " + std::to_string(b) +
                    "?\nChoices: ";
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (i) out += ", ";
    out += choices[i];
  }
  out += "\nAnswer:";
  return out;
}

}  // namespace templates

}  // namespace skillprobe
