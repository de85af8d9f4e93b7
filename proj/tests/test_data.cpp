#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gotcqa/harness.hpp"
#include "support.hpp"

using namespace gotcqa;
using gotcqa::testing::two_entity_got;

#define EXPECT_ERRC(stmt, errc)                      \
  try {                                              \
    stmt;                                            \
    ADD_FAILURE() << "expected " << errc_name(errc); \
  } catch (const Error& e) {                         \
    EXPECT_EQ(e.code(), errc) << e.what();           \
  }

namespace {

const RuleSet& rules() {
  static const RuleSet r = compile_rules(kDefaultRules);
  return r;
}

ChartSpec p1p2_chart() { return {"family tree", "person", "descendants", "top right", {"2019"}, {"p1", "p2"}, {{3, 5}}}; }

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gotcqa_data_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

QATriple triple(std::string id, QType q, std::string gold) {
  QATriple t;
  t.id = std::move(id);
  t.qtype = q;
  t.chart = p1p2_chart();
  t.question = "what is the title of the graph";
  t.gold_got = Got({{1, "locate title", OperatorType::Loc}}, {});
  t.gold_answer = std::move(gold);
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Chart generation

TEST(GenChart, Deterministic) {
  CorpusConfig cfg;
  Rng a(42), b(42);
  EXPECT_EQ(gen_chart(a, cfg), gen_chart(b, cfg));
}

TEST(GenChart, FixedRanges) {
  CorpusConfig cfg;
  cfg.series_min = cfg.series_max = 1;
  cfg.categories_min = cfg.categories_max = 2;
  Rng rng(1);
  const auto c = gen_chart(rng, cfg);
  ASSERT_EQ(c.values.size(), 1u);
  EXPECT_EQ(c.values[0].size(), 2u);
  EXPECT_NO_THROW(validate_chart(c));
}

TEST(GenChart, ConfigValidation) {
  CorpusConfig cfg;
  cfg.mix = {0.5, 0.5, 0.5};
  EXPECT_ERRC(cfg.validate(), Errc::ConfigError);
  cfg = {};
  cfg.series_min = 0;
  EXPECT_ERRC(cfg.validate(), Errc::ConfigError);
}

// ---------------------------------------------------------------------------
// Symbolic executor

TEST(Symbolic, DifferenceQuestion) {
  const auto got = parse_question("How many more descendants of P2 than of P1?", rules()).got;
  EXPECT_EQ(symbolic_execute(p1p2_chart(), got), "2");
}

TEST(Symbolic, TwoEntityGraph) { EXPECT_EQ(symbolic_execute(p1p2_chart(), two_entity_got()), "2"); }

TEST(Symbolic, AverageOfThree) {
  ChartSpec c{"t", "x", "y", "top right", {"2019"}, {"p1", "p2", "p3"}, {{2, 4, 6}}};
  EXPECT_EQ(symbolic_execute(c, parse_question("What is the average descendants?", rules()).got), "4");
}

TEST(Symbolic, StructuralReadOff) {
  ChartSpec c{"t", "x", "y", "bottom right", {"2019", "2020"}, {"p1", "p2"}, {{1, 2}, {3, 4}}};
  EXPECT_EQ(symbolic_execute(c, parse_question("How many legend labels are there?", rules()).got), "2");
  EXPECT_EQ(symbolic_execute(c, parse_question("Where does the legend appear in the graph?", rules()).got), "bottom right");
  EXPECT_EQ(symbolic_execute(c, parse_question("How many bars are there in the graph?", rules()).got), "4");
  EXPECT_EQ(symbolic_execute(c, parse_question("What is the title of the graph?", rules()).got), "t");
}

TEST(Symbolic, DirectNumRead) {
  EXPECT_EQ(symbolic_execute(p1p2_chart(), Got({{1, "value of p1", OperatorType::Num}}, {})), "3");
}

TEST(Symbolic, GreaterThanAverage) {
  Got g({{1, "locate p2", OperatorType::Loc},
         {2, "locate all bars", OperatorType::Loc},
         {3, "value of p2", OperatorType::Num},
         {4, "values of all bars", OperatorType::Num},
         {5, "average", OperatorType::Log},
         {6, "gt", OperatorType::Log}},
        {{1, 3}, {2, 4}, {4, 5}, {3, 6}, {5, 6}});
  EXPECT_EQ(symbolic_execute(p1p2_chart(), g), "YES");
}

TEST(Symbolic, SeriesAndYearScopes) {
  ChartSpec c{"t", "x", "y", "top right", {"2019", "2020"}, {"p1", "p2"}, {{1, 2}, {3, 4}}};
  EXPECT_EQ(symbolic_execute(c, parse_question("What is the sales of p2 in 2020?", rules()).got), "4");
  EXPECT_EQ(symbolic_execute(c, parse_question("What is the total sales in 2019?", rules()).got), "3");
  EXPECT_EQ(symbolic_execute(c, parse_question("How many values are above 2?", rules()).got), "2");
  Got ratio({{1, "value of p1 in 2020", OperatorType::Num},
             {2, "value of p2 in 2020", OperatorType::Num},
             {3, "ratio", OperatorType::Log}},
            {{1, 3}, {2, 3}});
  EXPECT_EQ(symbolic_execute(c, ratio), "0.75");
}

TEST(Symbolic, Errors) {
  EXPECT_ERRC(symbolic_execute(p1p2_chart(), Got({{1, "value of p9", OperatorType::Num}}, {})), Errc::UnresolvableEntity);
  EXPECT_ERRC(symbolic_execute(p1p2_chart(), Got({{1, "value of p1", OperatorType::Num}, {2, "frobnicate", OperatorType::Log}}, {{1, 2}})),
              Errc::UnknownLogOp);
  EXPECT_ERRC(symbolic_execute(p1p2_chart(), Got({{1, "value of p1", OperatorType::Num}, {2, "difference", OperatorType::Log}}, {{1, 2}})),
              Errc::ArityMismatch);
}

// ---------------------------------------------------------------------------
// Question generation and corpora

TEST(Corpus, OracleConsistencyAndRoundTrip) {
  CorpusConfig cfg;
  cfg.n_charts = 30;
  cfg.seed = 8;
  const auto corpus = build_corpus(cfg, rules());
  ASSERT_GE(corpus.size(), 100u);
  for (const auto& t : corpus) {
    EXPECT_EQ(to_lower(symbolic_execute(t.chart, t.gold_got)), t.gold_answer) << t.question;
    const auto parsed = parse_question(t.question, rules());
    EXPECT_EQ(parsed.got, t.gold_got) << t.question;
    EXPECT_EQ(parsed.qtype, t.qtype) << t.question;
  }
}

TEST(Corpus, QuestionTypesFollowMix) {
  CorpusConfig cfg;
  cfg.n_charts = 10;
  cfg.mix = {1.0, 0.0, 0.0};
  for (const auto& t : build_corpus(cfg, rules())) EXPECT_EQ(t.qtype, QType::S);
}

TEST(Corpus, DeterministicBytes) {
  CorpusConfig cfg;
  cfg.n_charts = 12;
  cfg.seed = 99;
  const auto dir = temp_dir("det");
  write_corpus((dir / "a.jsonl").string(), build_corpus(cfg, rules()));
  write_corpus((dir / "b.jsonl").string(), build_corpus(cfg, rules()));
  EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
  EXPECT_EQ(read_corpus((dir / "a.jsonl").string()), build_corpus(cfg, rules()));
  std::filesystem::remove_all(dir);
}

TEST(Corpus, SplitsByChartWithManifest) {
  CorpusConfig cfg;
  cfg.n_charts = 10;
  const auto corpus = build_corpus(cfg, rules());
  const auto s = split_by_chart(corpus, cfg.n_charts, 0.6, 0.2);
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), corpus.size());
  std::set<std::size_t> train_charts, test_charts;
  for (const auto& t : s.train) train_charts.insert(t.chart_index);
  for (const auto& t : s.test) test_charts.insert(t.chart_index);
  for (auto c : test_charts) EXPECT_FALSE(train_charts.contains(c));
  const auto dir = temp_dir("splits");
  const auto manifest = write_splits(dir.string(), cfg, s);
  EXPECT_EQ(manifest["splits"]["train"]["count"], s.train.size());
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  EXPECT_EQ(read_corpus((dir / "val.jsonl").string()).size(), s.val.size());
  std::filesystem::remove_all(dir);
}

TEST(Corpus, ReadErrorsCarryLineNumbers) {
  const auto dir = temp_dir("bad");
  {
    std::ofstream out(dir / "bad.jsonl");
    out << to_json(triple("a", QType::S, "t")).dump() << "\n{not json\n";
  }
  try {
    read_corpus((dir / "bad.jsonl").string());
    ADD_FAILURE() << "expected CorpusError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::CorpusError);
    EXPECT_NE(std::string(e.what()).find("bad.jsonl:2:"), std::string::npos) << e.what();
  }
  std::filesystem::remove_all(dir);
}

TEST(Corpus, VocabularyCoversCorpus) {
  CorpusConfig cfg;
  cfg.n_charts = 10;
  const auto corpus = build_corpus(cfg, rules());
  const auto vocab = corpus_vocab(rules(), corpus);
  for (const auto& t : corpus) {
    for (auto id : vocab.tokenize(t.gold_answer)) EXPECT_NE(id, Vocab::kUnk) << t.gold_answer;
    EXPECT_EQ(vocab.detokenize(vocab.tokenize(t.gold_answer)), t.gold_answer);
  }
}

// ---------------------------------------------------------------------------
// Relaxed match

TEST(RelaxedMatch, ReferenceVerdicts) {
  EXPECT_FALSE(relaxed_match("66", "60"));
  EXPECT_TRUE(relaxed_match("0.418", "0.414"));
  EXPECT_TRUE(relaxed_match("bottom right", "Bottom Right"));
}

TEST(RelaxedMatch, GoldZeroAndNegatives) {
  EXPECT_TRUE(relaxed_match("0", "0"));
  EXPECT_TRUE(relaxed_match("0.0", "0"));
  EXPECT_FALSE(relaxed_match("0.001", "0"));
  EXPECT_TRUE(relaxed_match("-9.66", "-9.5"));
  EXPECT_FALSE(relaxed_match("9.66", "-9.66"));
  EXPECT_FALSE(relaxed_match("-11", "-10"));
}

TEST(RelaxedMatch, BoundaryAndText) {
  EXPECT_TRUE(relaxed_match("105", "100"));
  EXPECT_FALSE(relaxed_match("105.1", "100"));
  EXPECT_TRUE(relaxed_match("  Top   Left ", "top left"));
  EXPECT_FALSE(relaxed_match("yes", "no"));
  EXPECT_TRUE(relaxed_match("100", "100", 0.0));
  EXPECT_FALSE(relaxed_match("100.5", "100", 0.0));
}

TEST(RelaxedMatch, ScaleCovariant) {
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    const double gold = rng.uniform(-100, 100), pred = gold * rng.uniform(0.9, 1.1);
    const double k = std::pow(2.0, static_cast<double>(rng.uniform_int(-8, 8)));
    EXPECT_EQ(relaxed_match(format_number(pred), format_number(gold)),
              relaxed_match(format_number(pred * k), format_number(gold * k)));
  }
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, TextAndOverrides) {
  RunConfig c;
  apply_config_text(c, "# comment\nseed = 5\n[model]\nd = 32 # inline\nattention_arch = cross-cross\n[train]\nsteps=7\n");
  apply_override(c, "train.lr=0.01");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.model.d, 32u);
  EXPECT_EQ(c.model.attention_arch, AttentionArch::CrossCross);
  EXPECT_EQ(c.train.steps, 7u);
  EXPECT_DOUBLE_EQ(c.train.lr, 0.01);
}

TEST(Config, Errors) {
  RunConfig c;
  EXPECT_ERRC(apply_config_text(c, "[model]\nbogus = 1\n"), Errc::ConfigError);
  EXPECT_ERRC(apply_config_text(c, "[model]\nd = -4\n"), Errc::ConfigError);
  EXPECT_ERRC(apply_config_text(c, "[model\n"), Errc::ConfigError);
  EXPECT_ERRC(apply_override(c, "model.d"), Errc::ConfigError);
  EXPECT_ERRC(apply_override(c, "model.operator_mode=seven"), Errc::ConfigError);
  EXPECT_ERRC(load_config("/nonexistent/run.ini"), Errc::ConfigError);
  RunConfig zero;
  zero.train.steps = 0;
  EXPECT_ERRC(zero.validate(), Errc::ConfigError);
}

TEST(Config, LearningRateSchedule) {
  TrainConfig t;
  t.lr = 1.0;
  t.steps = 110;
  t.warmup = 10;
  EXPECT_DOUBLE_EQ(learning_rate(t, 0), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate(t, 9), 1.0);
  EXPECT_DOUBLE_EQ(learning_rate(t, 10), 1.0);
  EXPECT_NEAR(learning_rate(t, 60), 0.5, 1e-12);
  EXPECT_NEAR(learning_rate(t, 110), 0.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Evaluation

TEST(Evaluate, PerfectStub) {
  std::vector<QATriple> corpus{triple("a", QType::S, "t"), triple("b", QType::D, "3"), triple("c", QType::R, "yes")};
  const auto r = evaluate([](const QATriple& t) { return t.gold_answer; }, corpus);
  EXPECT_EQ(r.accuracy(), 1.0);
  for (auto q : {QType::S, QType::D, QType::R}) EXPECT_EQ(r.accuracy(q), 1.0);
}

TEST(Evaluate, StructuralOnlyCorpus) {
  std::vector<QATriple> corpus;
  for (int i = 0; i < 10; ++i) corpus.push_back(triple("s" + std::to_string(i), QType::S, i % 3 == 0 ? "t" : "u"));
  const auto r = evaluate([](const QATriple&) { return std::string("t"); }, corpus);
  EXPECT_EQ(r.count(QType::R), 0u);
  EXPECT_EQ(r.count(QType::S), 10u);
  EXPECT_DOUBLE_EQ(r.accuracy(), r.accuracy(QType::S));
  EXPECT_DOUBLE_EQ(r.accuracy(), 0.4);
}

TEST(Evaluate, AccuracyEqualsRecountOfRecords) {
  CorpusConfig cfg;
  cfg.n_charts = 20;
  const auto corpus = build_corpus(cfg, rules());
  Rng rng(3);
  const auto r = evaluate([&](const QATriple& t) { return rng.index(2) == 0 ? t.gold_answer : std::string("nope"); }, corpus);
  // recount from the serialized record stream only
  std::array<std::size_t, 3> total{}, correct{};
  for (const auto& rec : r.records) {
    const auto j = nlohmann::json::parse(nlohmann::json{{"q", std::string(to_string(rec.qtype))}, {"m", rec.match}}.dump());
    const auto q = *parse_qtype(j["q"].get<std::string>());
    ++total[static_cast<std::size_t>(q)];
    if (j["m"].get<bool>()) ++correct[static_cast<std::size_t>(q)];
  }
  EXPECT_EQ(r.type_total, total);
  EXPECT_EQ(r.type_correct, correct);
  EXPECT_DOUBLE_EQ(r.accuracy(), static_cast<double>(correct[0] + correct[1] + correct[2]) / static_cast<double>(r.total));
  std::size_t sum = 0;
  for (auto q : {QType::S, QType::D, QType::R}) sum += r.count(q);
  EXPECT_EQ(sum, r.total);
}

// ---------------------------------------------------------------------------
// Training and ablation (tiny)

namespace {

RunConfig tiny_run() {
  RunConfig run;
  run.model.d = 8;
  run.model.heads = 2;
  run.model.self_data_layers = 1;
  run.decoder.layers = 1;
  run.decoder.heads = 2;
  run.decoder.max_len = 6;
  run.train.steps = 6;
  run.train.warmup = 2;
  run.seed = 4;
  return run;
}

std::vector<QATriple> tiny_corpus() {
  CorpusConfig cfg;
  cfg.n_charts = 3;
  cfg.questions_per_chart = 2;
  return build_corpus(cfg, rules());
}

}  // namespace

TEST(Train, DeterministicLossCurveAndLog) {
  const auto dir = temp_dir("train");
  auto run = tiny_run();
  run.loss_log = (dir / "loss.tsv").string();
  run.checkpoint = (dir / "m.gckp").string();
  const auto a = train(run, tiny_corpus());
  const auto b = train(run, tiny_corpus());
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(read_loss_log(run.loss_log), a.losses);
  EXPECT_TRUE(std::filesystem::exists(run.checkpoint));
  EXPECT_TRUE(evaluate(run.checkpoint, tiny_corpus()).same_outcome(evaluate(*a.model, tiny_corpus())));
  std::filesystem::remove_all(dir);
}

TEST(Train, Errors) {
  auto run = tiny_run();
  EXPECT_ERRC(train(run, {}), Errc::CorpusError);
  run.train.steps = 0;
  EXPECT_ERRC(train(run, tiny_corpus()), Errc::ConfigError);
}

TEST(Ablate, GridShapes) {
  EXPECT_EQ(parse_grid("operators").size(), 5u);
  EXPECT_EQ(parse_grid("self-data-layers").size(), 4u);
  EXPECT_TRUE(parse_grid("").empty());
  EXPECT_EQ(parse_grid("model.op_layers=1,2;model.attention_arch=self-cross,self-self,cross-cross").size(), 6u);
  EXPECT_ERRC(parse_grid("model.d"), Errc::ConfigError);
  EXPECT_TRUE(ablate(tiny_run(), {}, tiny_corpus(), tiny_corpus()).empty());
}

TEST(Ablate, FailingVariantRecordedAndGridContinues) {
  auto run = tiny_run();
  run.train.steps = 2;
  std::vector<AblationVariant> grid{{"bad heads", {{"model.heads", "3"}}}, {"ok", {{"model.op_layers", "1"}}}};
  const auto rows = ablate(run, grid, tiny_corpus(), tiny_corpus());
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_FALSE(rows[0].ok);
  EXPECT_NE(rows[0].error.find("HeadDivisibility"), std::string::npos);
  EXPECT_TRUE(rows[1].ok);
  EXPECT_EQ(rows[1].report.total, tiny_corpus().size());
  const auto table = format_ablation_table(rows);
  EXPECT_NE(table.find("bad heads"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Command line

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(GOTCQA_CLI) + " " + args + " 2>/dev/null";
  std::array<char, 4096> buf{};
  std::string out;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) out += buf.data();
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::size_t count_lines_with(const std::string& text, std::string_view needle) {
  std::size_t n = 0;
  for (const auto& line : split(text, '\n'))
    if (line.find(needle) != std::string::npos) ++n;
  return n;
}

}  // namespace

TEST(Cli, ParseDot) {
  const auto r = cli("parse \"How many more descendants of P2 than of P1?\" --dot");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(count_lines_with(r.out, "[label="), 5u);
  EXPECT_EQ(count_lines_with(r.out, "->"), 4u);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("parse").code, 2);
  EXPECT_EQ(cli("--help").code, 0);
  EXPECT_EQ(cli("train --set model.d=banana").code, 3);
  EXPECT_EQ(cli("train --config /nonexistent.ini").code, 3);
  EXPECT_EQ(cli("parse \"What color is the sky?\"").code, 4);
  EXPECT_EQ(cli("eval --checkpoint /nonexistent.gckp --corpus /nonexistent.jsonl").code, 4);
}

TEST(Cli, PlanFromParse) {
  const auto dir = temp_dir("cli_plan");
  const auto got = dir / "g.json";
  {
    std::ofstream out(got);
    out << serialize(two_entity_got());
  }
  const auto r = cli("plan " + got.string());
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "step 1: 1 2\nstep 2: 3 4\nstep 3: 5\n");
  std::filesystem::remove_all(dir);
}

TEST(Cli, SynthTrainEvalAblate) {
  const auto dir = temp_dir("cli_pipeline");
  const auto d = dir.string();
  ASSERT_EQ(cli("synth --out " + d + " --set corpus.n_charts=4 --train-frac 0.5 --val-frac 0.25").code, 0);
  ASSERT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  {
    std::ofstream cfg(dir / "run.ini");
    cfg << "[model]\nd = 8\nheads = 2\nself_data_layers = 1\n[decoder]\nlayers = 1\nheads = 2\n"
        << "[train]\nsteps = 3\nwarmup = 1\n[paths]\ntrain = " << d << "/train.jsonl\neval = " << d << "/test.jsonl\n"
        << "checkpoint = " << d << "/m.gckp\n";
  }
  EXPECT_EQ(cli("train --config " + d + "/run.ini").code, 0);
  const auto e = cli("eval --config " + d + "/run.ini --json --records " + d + "/records.jsonl");
  EXPECT_EQ(e.code, 0);
  const auto report = nlohmann::json::parse(e.out);
  EXPECT_EQ(report["examples"].get<std::size_t>(), read_corpus(d + "/test.jsonl").size());
  EXPECT_TRUE(std::filesystem::exists(dir / "records.jsonl"));
  const auto a = cli("ablate --config " + d + "/run.ini --grid \"model.op_layers=1,2\"");
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(count_lines_with(a.out, "model.op_layers="), 2u);
  EXPECT_EQ(cli("ablate --config " + d + "/run.ini --grid \"\"").code, 0);
  std::filesystem::remove_all(dir);
}
