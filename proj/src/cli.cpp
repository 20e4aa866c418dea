#include "skillprobe/cli.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <optional>

#include "CLI11.hpp"

#include "skillprobe/checkpoint.hpp"
#include "skillprobe/error.hpp"
#include "skillprobe/interpret.hpp"
#include "skillprobe/io.hpp"
#include "skillprobe/metrics.hpp"
#include "skillprobe/pretrain.hpp"
#include "skillprobe/probe.hpp"
#include "skillprobe/prompt_tuning.hpp"

namespace skillprobe::cli {

namespace {

std::size_t log_every(std::size_t steps) { return std::max<std::size_t>(1, steps / 10); }

// Later stages take the task from the corpus on disk so that the per-task
// metric and group defaults follow what `gen` produced.
RunConfig with_corpus_task(RunConfig cfg, const Corpus& corpus) {
  if (corpus.task_kind != TaskKind::kExternal) cfg.task = corpus.task_kind;
  return cfg;
}

ModelConfig model_config(const RunConfig& cfg) {
  ModelConfig m = cfg.model;
  m.seed = cfg.model_seed();
  return m;
}

}  // namespace

void stage_gen(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  Corpus all;
  switch (cfg.task) {
    case TaskKind::kTwoSkill: all = gen_two_skill(cfg.n, cfg.gen_seed()); break;
    case TaskKind::kHeuristicNli: all = gen_heuristic_nli(cfg.n, cfg.gen_seed()); break;
    case TaskKind::kArithShortcut:
      all = gen_arith_shortcut(cfg.n, cfg.gen_seed(), cfg.shortcut_fraction);
      break;
    case TaskKind::kExternal:
      fail(ErrorCode::kInvalidArgument, "cannot generate an external corpus");
  }
  auto [train, val] = split_train_val(all, cfg.val_fraction, cfg.split_seed());
  save_corpus(all, cfg.corpus_path());
  save_corpus(train, cfg.train_path());
  save_corpus(val, cfg.val_path());
  log << "gen: " << task_kind_name(cfg.task) << " n=" << all.size() << " train=" << train.size()
      << " val=" << val.size() << " -> " << cfg.workdir.string() << "\n";
}

void stage_pretrain(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const Corpus train = load_corpus(cfg.train_path(), Split::kTrain);
  PretrainOptions opts = cfg.pretrain;
  opts.seed = cfg.pretrain_seed();
  const std::size_t every = log_every(opts.steps);
  const ModelParams params =
      pretrain(model_config(cfg), train, opts, [&](std::size_t step, double loss) {
        if ((step + 1) % every == 0) {
          log << "pretrain: step " << step + 1 << "/" << opts.steps << " loss "
              << format_double(loss) << "\n";
        }
      });
  save_model(params, cfg.model_dir());
  log << "pretrain: model " << params.content_hash() << "\n";
}

void stage_tune(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const ModelParams params = load_model(cfg.model_dir());
  const Corpus train = load_corpus(cfg.train_path(), Split::kTrain);
  TuneConfig tc = cfg.tune;
  tc.seed = cfg.tune_seed();
  const std::size_t every = log_every(tc.steps);
  const SoftPrompt prompt = train_prompt(params, train, tc, [&](const TuneStep& s) {
    if ((s.step + 1) % every == 0) {
      log << "tune: step " << s.step + 1 << "/" << tc.steps << " loss "
          << format_double(s.batch_loss) << "\n";
    }
  });
  save_prompt(prompt, cfg.prompt_dir());
  log << "tune: prompt " << prompt.content_hash() << "\n";
}

void stage_probe(const RunConfig& run_cfg, std::ostream& log) {
  run_cfg.validate();
  const Corpus val = load_corpus(run_cfg.val_path(), Split::kVal);
  const RunConfig cfg = with_corpus_task(run_cfg, val);
  const MetricSpec spec = MetricSpec::parse(cfg.metric_spec());
  std::optional<ModelParams> params;
  std::optional<SoftPrompt> prompt;
  if (!cfg.reuse_dump || spec.kind == MetricKind::kPerSampleLoss) {
    params = load_model(cfg.model_dir());
    prompt = load_prompt(cfg.prompt_dir());
  }
  const MetricVector metric =
      compute_metric(spec, val, params ? &*params : nullptr, prompt ? &*prompt : nullptr);
  ActivationDump dump;
  if (cfg.reuse_dump) {
    dump = load_dump(cfg.dump_dir());
    if (dump.sample_ids.size() != val.size() ||
        !std::equal(dump.sample_ids.begin(), dump.sample_ids.end(), val.samples.begin(),
                    [](const std::string& id, const Sample& s) { return id == s.id; })) {
      fail(ErrorCode::kAlignmentError, "dump sample ids do not match " + cfg.val_path().string());
    }
    if (params && !dump.model_hash.empty() && dump.model_hash != params->content_hash()) {
      fail(ErrorCode::kModelPromptMismatch, "dump was captured from a different model");
    }
  } else {
    dump = collect_activations(*params, *prompt, val);
    save_dump(dump, cfg.dump_dir());
  }
  write_file_atomic(cfg.metric_path(), metric_csv(val, metric));
  const auto scores = score_neurons(dump, metric);
  write_file_atomic(cfg.scores_path(), scores_csv(scores));
  const TopK top = select_top_k(scores, cfg.k);
  log << "probe: " << scores.size() << " neurons scored with " << spec.str() << ", top-" << cfg.k
      << " threshold " << format_double(top.threshold) << "\n";
  if (!top.neurons.empty()) {
    const auto& s = top.neurons.front();
    log << "probe: top neuron layer " << s.layer << " neuron " << s.neuron << " position "
        << s.best_position << " corr " << format_double(s.corr) << "\n";
  }
}

void stage_report(const RunConfig& run_cfg, std::ostream& log) {
  run_cfg.validate();
  const ActivationDump dump = load_dump(run_cfg.dump_dir());
  const Corpus val = load_corpus(run_cfg.val_path(), Split::kVal);
  const RunConfig cfg = with_corpus_task(run_cfg, val);
  const auto scores = parse_scores_csv(read_file(cfg.scores_path()));
  Report report = build_report(dump, val, scores, cfg.k, cfg.group_key_or_default(),
                               cfg.extremal, cfg.bins);
  report.metric = cfg.metric_spec();
  const auto files = emit_report(report, cfg.report_dir());
  log << "report: " << files.size() << " files -> " << cfg.report_dir().string() << "\n";
}

void run_all(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  write_file_atomic(cfg.workdir / "run.cfg", cfg.to_text());
  stage_gen(cfg, log);
  stage_pretrain(cfg, log);
  stage_tune(cfg, log);
  stage_probe(cfg, log);
  stage_report(cfg, log);
}

namespace {

struct Override {
  const char* flag;
  const char* key;
  const char* help;
};

struct Command {
  const char* name;
  const char* help;
  std::vector<Override> overrides;
  void (*run)(const RunConfig&, std::ostream&);
};

const std::vector<Command>& commands() {
  static const std::vector<Command> cmds = {
      {"gen",
       "Generate a corpus and its train/val split",
       {{"--task", "task", "two_skill | heuristic_nli | arith_shortcut"},
        {"--n", "n", "number of samples"},
        {"--shortcut-fraction", "shortcut_fraction", "fraction of shortcut arithmetic samples"},
        {"--val-fraction", "val_fraction", "validation share of the corpus"}},
       stage_gen},
      {"pretrain",
       "Pretrain the toy model on the training split",
       {{"--steps", "pretrain.steps", "optimizer steps"},
        {"--lr", "pretrain.lr", "learning rate"},
        {"--batch-size", "pretrain.batch_size", "sequences per step"}},
       stage_pretrain},
      {"tune",
       "Train a soft prompt against the frozen model",
       {{"--tokens", "tune.tokens", "soft prompt length"},
        {"--lr", "tune.lr", "learning rate"},
        {"--steps", "tune.steps", "optimizer steps"},
        {"--batch-size", "tune.batch_size", "samples per step"},
        {"--weight-decay", "tune.weight_decay", "AdamW weight decay on the prompt"}},
       stage_tune},
      {"probe",
       "Dump prompt-position activations and score neurons against a metric",
       {{"--metric", "metric", "label:<key>=<value> | loss | file:<path>"},
        {"--k", "k", "number of neurons to select"},
        {"--reuse-dump", "probe.reuse_dump", "true: score the dump already in the workdir"}},
       stage_probe},
      {"report",
       "Write the interpretation report and figures",
       {{"--k", "k", "number of neurons to report"},
        {"--group-key", "report.group_key", "meta key used to group samples"},
        {"--bins", "report.bins", "histogram bins"},
        {"--extremal", "report.extremal", "samples listed per extreme"}},
       stage_report},
      {"run-all",
       "Run gen, pretrain, tune, probe and report",
       {{"--task", "task", "two_skill | heuristic_nli | arith_shortcut"},
        {"--n", "n", "number of samples"},
        {"--metric", "metric", "label:<key>=<value> | loss | file:<path>"},
        {"--k", "k", "number of neurons to select"}},
       run_all},
  };
  return cmds;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Find skill neurons in a toy transformer via soft prompts", "skillprobe"};
  app.require_subcommand(1);

  struct Bound {
    const Command* cmd = nullptr;
    CLI::App* sub = nullptr;
    std::string config;
    std::vector<std::string> sets;
    std::string workdir;
    std::string seed;
    std::vector<std::pair<CLI::Option*, const Override*>> flags;
    std::map<std::string, std::string> values;
  };
  std::vector<std::unique_ptr<Bound>> bound;
  for (const Command& cmd : commands()) {
    auto b = std::make_unique<Bound>();
    b->cmd = &cmd;
    b->sub = app.add_subcommand(cmd.name, cmd.help);
    b->sub->add_option("--config", b->config, "key = value run configuration file");
    b->sub->add_option("--set", b->sets, "override one config entry, key=value")->take_all();
    const bool is_gen = std::string(cmd.name) == "gen";
    b->sub->add_option(is_gen ? "--workdir,--out" : "--workdir", b->workdir, "artifact directory");
    b->sub->add_option("--seed", b->seed, "global seed");
    for (const Override& o : cmd.overrides) {
      b->flags.emplace_back(b->sub->add_option(o.flag, b->values[o.key], o.help), &o);
    }
    bound.push_back(std::move(b));
  }

  std::string dump_path;
  auto* validate = app.add_subcommand("validate-dump", "Check an activation dump directory");
  validate->add_option("path", dump_path, "dump directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: USAGE: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    if (validate->parsed()) {
      const DumpValidation v = validate_dump(dump_path);
      out << v.summary();
      if (v.ok()) return kExitOk;
      err << "error: " << error_code_name(ErrorCode::kValidationFailed) << ": "
          << v.issues.front().code << ": " << one_line(v.issues.front().message) << "\n";
      return kExitPipeline;
    }
    for (const auto& b : bound) {
      if (!b->sub->parsed()) continue;
      RunConfig cfg;
      if (!b->config.empty()) cfg = load_run_config(b->config);
      try {
        for (const std::string& s : b->sets) {
          const auto eq = s.find('=');
          if (eq == std::string::npos) fail(ErrorCode::kUsage, "--set expects key=value, got '" + s + "'");
          cfg.set(s.substr(0, eq), s.substr(eq + 1));
        }
        if (!b->workdir.empty()) cfg.set("workdir", b->workdir);
        if (!b->seed.empty()) cfg.set("seed", b->seed);
        for (const auto& [opt, ov] : b->flags) {
          if (opt->count() > 0) cfg.set(ov->key, b->values[ov->key]);
        }
      } catch (const Error& e) {
        err << "error: " << error_code_name(ErrorCode::kUsage) << ": " << one_line(e.what()) << "\n";
        return kExitUsage;
      }
      b->cmd->run(cfg, err);
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << error_code_name(e.code()) << ": " << one_line(e.what()) << "\n";
    return kExitPipeline;
  } catch (const std::exception& e) {
    err << "error: INTERNAL: " << one_line(e.what()) << "\n";
    return kExitPipeline;
  }
  err << "error: USAGE: no subcommand\n";
  return kExitUsage;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"skillprobe"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace skillprobe::cli
