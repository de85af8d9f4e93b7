// gotcqa: command-line front end.
//
//   gotcqa parse "<question>" [--dot]      question -> GoT
//   gotcqa plan  [got.json]                GoT -> execution steps
//   gotcqa synth --out DIR                 synthetic corpus + manifest
//   gotcqa train --config FILE             train, write checkpoint
//   gotcqa eval  --checkpoint F --corpus F relaxed-accuracy report
//   gotcqa ablate --grid operators            variant table
//   gotcqa gradcheck                       finite-difference verification
//
// Exit codes: 0 ok, 1 check failed, 2 usage, 3 configuration, 4 runtime.

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>

#include "gotcqa/gotcqa.hpp"

namespace {

using namespace gotcqa;

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitRuntime = 4;

std::string read_all(const std::string& path) {
  if (path == "-") return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot read '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RuleSet load_rules(const std::string& path) { return compile_rules(path.empty() ? std::string(kDefaultRules) : read_all(path)); }

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", path, "Config file (key = value lines under [sections])");
    cmd->add_option("--set", overrides, "Override a setting, e.g. --set train.steps=500")->take_all();
  }

  RunConfig load() const {
    RunConfig c = path.empty() ? RunConfig{} : load_config(path);
    for (const auto& o : overrides) apply_override(c, o);
    return c;
  }
};

std::optional<ProviderEndpoint> provider_from(const std::string& flag, const std::string& config_value) {
  std::string url = flag;
  if (url.empty()) url = config_value;
  if (url.empty())
    if (const char* env = std::getenv("GOTCQA_PROVIDER")) url = env;
  if (url.empty()) return std::nullopt;
  return ProviderEndpoint{url};
}

std::vector<QATriple> limited(std::vector<QATriple> corpus, std::size_t limit) {
  if (limit > 0 && corpus.size() > limit) corpus.resize(limit);
  return corpus;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chart question answering with Graph-of-Thought guided reasoning networks"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // parse
  auto* parse_cmd = app.add_subcommand("parse", "Parse a question into a GoT");
  std::string question, rules_path, provider_flag;
  bool dot = false;
  parse_cmd->add_option("question", question, "Question text")->required();
  parse_cmd->add_option("--rules", rules_path, "Template rule file (default: built-in rules)");
  parse_cmd->add_flag("--dot", dot, "Emit Graphviz DOT instead of structured text");
  parse_cmd->add_option("--provider", provider_flag, "GoT provider endpoint for questions no template covers (env GOTCQA_PROVIDER)");

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "Print the execution steps of a GoT");
  std::string got_path = "-";
  plan_cmd->add_option("got", got_path, "GoT file in structured text ('-' for stdin)");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus with train/val/test splits");
  ConfigArgs synth_cfg;
  synth_cfg.attach(synth_cmd);
  std::string out_dir;
  double train_frac = 0.8, val_frac = 0.1;
  synth_cmd->add_option("-o,--out", out_dir, "Output directory")->required();
  synth_cmd->add_option("--train-frac", train_frac, "Fraction of charts in the train split")->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--val-frac", val_frac, "Fraction of charts in the validation split")->check(CLI::Range(0.0, 1.0));

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes a checkpoint and a loss log");
  ConfigArgs train_cfg;
  train_cfg.attach(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint with relaxed accuracy");
  ConfigArgs eval_cfg;
  eval_cfg.attach(eval_cmd);
  std::string ckpt_path, corpus_path, records_path;
  double tol = -1;
  bool eval_json = false;
  eval_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint file (default: paths.checkpoint)");
  eval_cmd->add_option("--corpus", corpus_path, "Corpus file (default: paths.eval)");
  eval_cmd->add_option("--tol", tol, "Relative numeric tolerance (default 0.05)");
  eval_cmd->add_option("--records", records_path, "Write per-example match records (one JSON object per line)");
  eval_cmd->add_flag("--json", eval_json, "Print the report as structured text");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate a grid of architecture variants");
  ConfigArgs ablate_cfg;
  ablate_cfg.attach(ablate_cmd);
  std::string grid_spec = "operators", ablate_records;
  ablate_cmd->add_option("--grid", grid_spec,
                         "operators | arch | self-data-layers | op-layers | 'key=v1,v2;key2=v3' (default operators)");
  ablate_cmd->add_option("--records", ablate_records, "Write one JSON record per variant");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Check every layer and the whole model against finite differences");
  GradCheckOptions gopt;
  std::string scheme = "richardson";
  double threshold = 1e-4;
  grad_cmd->add_option("--step", gopt.h, "Difference step")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--scheme", scheme, "central | richardson")->check(CLI::IsMember({"central", "richardson"}));
  grad_cmd->add_option("--seed", gopt.seed, "Seed for parameters and probes");
  grad_cmd->add_option("--threshold", threshold, "Pass threshold on the max relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*parse_cmd) {
      const auto rules = load_rules(rules_path);
      const auto sourced = parse_with_fallback(question, rules, provider_from(provider_flag, ""));
      if (dot)
        std::cout << to_dot(sourced.got);
      else
        std::cout << serialize(sourced.got, 2) << '\n';
      std::cerr << "source: " << to_string(sourced.source)
                << (sourced.rule_id.empty() ? "" : " (" + sourced.rule_id + ")") << '\n';
      return 0;
    }

    if (*plan_cmd) {
      const auto got = deserialize(read_all(got_path));
      const auto report = validate(got);
      if (!report.ok()) {
        for (const auto& v : report.violations) std::cerr << v.code << ": " << v.message << '\n';
        return kExitRuntime;
      }
      const auto p = plan(normalize(got));
      for (std::size_t i = 0; i < p.steps.size(); ++i) {
        std::cout << "step " << i + 1 << ":";
        for (auto id : p.steps[i]) std::cout << ' ' << id;
        std::cout << '\n';
      }
      return 0;
    }

    if (*synth_cmd) {
      const auto cfg = synth_cfg.load();
      const auto rules = compile_rules(kDefaultRules);
      const auto corpus = build_corpus(cfg.corpus, rules);
      const auto splits = split_by_chart(corpus, cfg.corpus.n_charts, train_frac, val_frac);
      write_splits(out_dir, cfg.corpus, splits);
      std::cout << "wrote " << splits.train.size() << " train, " << splits.val.size() << " val, " << splits.test.size()
                << " test examples to " << out_dir << '\n';
      return 0;
    }

    if (*train_cmd) {
      const auto cfg = train_cfg.load();
      cfg.validate();
      if (cfg.train_corpus.empty()) fail(Errc::ConfigError, "paths.train is not set");
      const auto corpus = read_corpus(cfg.train_corpus);
      TrainHooks hooks;
      const std::size_t every = std::max<std::size_t>(1, cfg.train.steps / 20);
      hooks.on_step = [&](std::size_t step, double loss) {
        if ((step + 1) % every == 0 || step + 1 == cfg.train.steps)
          std::cerr << "step " << step + 1 << "/" << cfg.train.steps << "  loss " << std::setprecision(6) << loss << '\n';
      };
      const auto result = train(cfg, corpus, hooks);
      std::cout << "trained " << cfg.train.steps << " steps in " << std::fixed << std::setprecision(1) << result.seconds
                << " s; final loss " << std::setprecision(6) << result.losses.back() << '\n';
      if (!cfg.checkpoint.empty()) std::cout << "checkpoint: " << cfg.checkpoint << '\n';
      return 0;
    }

    if (*eval_cmd) {
      const auto cfg = eval_cfg.load();
      const auto ck = ckpt_path.empty() ? cfg.checkpoint : ckpt_path;
      const auto cp = corpus_path.empty() ? cfg.eval_corpus : corpus_path;
      if (ck.empty()) fail(Errc::ConfigError, "no checkpoint given (--checkpoint or paths.checkpoint)");
      if (cp.empty()) fail(Errc::ConfigError, "no corpus given (--corpus or paths.eval)");
      const auto report = evaluate(ck, limited(read_corpus(cp), cfg.eval_limit), tol >= 0 ? tol : cfg.tol);
      if (!records_path.empty()) {
        std::ofstream out(records_path);
        if (!out) fail(Errc::IoError, "cannot write '" + records_path + "'");
        for (const auto& r : report.records)
          out << nlohmann::json{{"id", r.id}, {"qtype", std::string(to_string(r.qtype))}, {"prediction", r.prediction},
                                {"gold", r.gold}, {"match", r.match}}
                     .dump()
              << '\n';
      }
      if (eval_json)
        std::cout << to_json(report).dump(2) << '\n';
      else
        std::cout << format_report(report);
      return 0;
    }

    if (*ablate_cmd) {
      const auto cfg = ablate_cfg.load();
      cfg.validate();
      const auto grid = parse_grid(grid_spec);
      if (grid.empty()) {
        std::cout << format_ablation_table({});
        return 0;
      }
      if (cfg.train_corpus.empty() || cfg.eval_corpus.empty()) fail(Errc::ConfigError, "paths.train and paths.eval must be set");
      const auto train_corpus = read_corpus(cfg.train_corpus);
      const auto eval_corpus = limited(read_corpus(cfg.eval_corpus), cfg.eval_limit);
      std::ofstream records;
      if (!ablate_records.empty()) {
        records.open(ablate_records);
        if (!records) fail(Errc::IoError, "cannot write '" + ablate_records + "'");
      }
      const auto rows = ablate(cfg, grid, train_corpus, eval_corpus, [&](const AblationRow& row) {
        std::cerr << (row.ok ? "done   " : "failed ") << row.variant << '\n';
        if (records) records << to_json(row).dump() << '\n' << std::flush;
      });
      std::cout << format_ablation_table(rows);
      return 0;
    }

    if (*grad_cmd) {
      gopt.scheme = scheme == "central" ? FdScheme::Central : FdScheme::Richardson;
      const auto entries = run_gradcheck(gopt);
      std::size_t width = 0;
      for (const auto& e : entries) width = std::max(width, e.name.size());
      double total = 0;
      for (const auto& e : entries) {
        std::cout << std::left << std::setw(static_cast<int>(width)) << e.name << "  max rel err " << std::scientific
                  << std::setprecision(3) << e.report.max_rel_error << "  over " << e.report.coordinates << " coords\n";
        total += e.seconds;
      }
      const double worst = max_rel_error(entries);
      std::cout << "max relative error: " << std::scientific << std::setprecision(3) << worst << " (threshold "
                << threshold << ", " << std::fixed << std::setprecision(1) << total << " s)\n";
      return worst < threshold ? 0 : kExitCheckFailed;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const bool config = e.code() == Errc::ConfigError || e.code() == Errc::HeadDivisibility || e.code() == Errc::RuleSyntaxError ||
                        e.code() == Errc::SlotMismatch;
    return config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
