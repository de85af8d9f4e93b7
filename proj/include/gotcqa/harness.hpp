#pragma once

// Run configuration, training loop, relaxed-accuracy evaluation and the
// architecture ablation grid.

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gotcqa/default_rules.hpp"
#include "gotcqa/model.hpp"
#include "gotcqa/synth.hpp"

namespace gotcqa {

// ---------------------------------------------------------------------------
// Relaxed accuracy

inline constexpr double kDefaultTolerance = 0.05;

/// Numeric answers match within a relative tolerance of the gold value (an
/// exact match when gold is zero); anything else compares as lowercase,
/// whitespace-normalized text.
inline bool relaxed_match(std::string_view pred, std::string_view gold, double tol = kDefaultTolerance) {
  const auto p = parse_plain_number(trim(pred));
  const auto g = parse_plain_number(trim(gold));
  if (p && g) {
    if (*g == 0) return *p == 0;
    return std::abs(*p - *g) <= tol * std::abs(*g);
  }
  return join(split_whitespace(to_lower(pred)), " ") == join(split_whitespace(to_lower(gold)), " ");
}

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t steps = 2000;
  std::size_t batch_size = 1;
  std::size_t warmup = 100;
  double clip = 1.0;
  std::size_t checkpoint_every = 0;  // 0: only at the end

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct RunConfig {
  ModelConfig model;
  DecoderConfig decoder;
  TrainConfig train;
  CorpusConfig corpus;
  std::uint64_t seed = 0;
  double tol = kDefaultTolerance;
  std::size_t eval_limit = 0;  // 0: whole corpus
  std::string train_corpus;
  std::string eval_corpus;
  std::string checkpoint;
  std::string loss_log;
  std::string provider;

  void validate() const {
    model.validate();
    corpus.validate();
    if (train.steps == 0) fail(Errc::ConfigError, "train.steps must be > 0");
    if (train.batch_size == 0) fail(Errc::ConfigError, "train.batch_size must be > 0");
    if (!(train.lr > 0)) fail(Errc::ConfigError, "train.lr must be > 0");
    if (tol < 0) fail(Errc::ConfigError, "eval.tol must be >= 0");
  }
};

namespace detail {

inline std::size_t config_uint(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || v.front() == '-') fail(Errc::ConfigError, key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

inline double config_real(const std::string& key, const std::string& v) {
  const auto d = parse_plain_number(v);
  if (!d) fail(Errc::ConfigError, key + ": expected a number, got '" + v + "'");
  return *d;
}

inline bool config_bool(const std::string& key, const std::string& v) {
  const auto l = to_lower(v);
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  fail(Errc::ConfigError, key + ": expected true or false, got '" + v + "'");
}

}  // namespace detail

/// Sets one `section.key` (top-level keys have no section).
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v(trim(raw));
  auto& m = c.model;
  auto& t = c.train;
  auto& k = c.corpus;
  const std::map<std::string, std::function<void()>> setters = {
      {"seed", [&] { c.seed = config_uint(key, v); }},
      {"model.d", [&] { m.d = config_uint(key, v); }},
      {"model.heads", [&] { m.heads = config_uint(key, v); }},
      {"model.self_data_layers", [&] { m.self_data_layers = config_uint(key, v); }},
      {"model.op_layers", [&] { m.op_layers = config_uint(key, v); }},
      {"model.attention_arch", [&] { m.attention_arch = parse_attention_arch(v); }},
      {"model.operator_mode", [&] { m.operator_mode = parse_operator_mode(v); }},
      {"model.got_enabled", [&] { m.got_enabled = config_bool(key, v); }},
      {"model.guidance_len", [&] { m.guidance_len = config_uint(key, v); }},
      {"model.ff_mult", [&] { m.ff_mult = config_uint(key, v); }},
      {"model.max_positions", [&] { m.max_positions = config_uint(key, v); }},
      {"decoder.layers", [&] { c.decoder.layers = config_uint(key, v); }},
      {"decoder.heads", [&] { c.decoder.heads = config_uint(key, v); }},
      {"decoder.max_len", [&] { c.decoder.max_len = config_uint(key, v); }},
      {"train.lr", [&] { t.lr = config_real(key, v); }},
      {"train.beta1", [&] { t.beta1 = config_real(key, v); }},
      {"train.beta2", [&] { t.beta2 = config_real(key, v); }},
      {"train.eps", [&] { t.eps = config_real(key, v); }},
      {"train.steps", [&] { t.steps = config_uint(key, v); }},
      {"train.batch_size", [&] { t.batch_size = config_uint(key, v); }},
      {"train.warmup", [&] { t.warmup = config_uint(key, v); }},
      {"train.clip", [&] { t.clip = config_real(key, v); }},
      {"train.checkpoint_every", [&] { t.checkpoint_every = config_uint(key, v); }},
      {"corpus.n_charts", [&] { k.n_charts = config_uint(key, v); }},
      {"corpus.questions_per_chart", [&] { k.questions_per_chart = config_uint(key, v); }},
      {"corpus.series_min", [&] { k.series_min = config_uint(key, v); }},
      {"corpus.series_max", [&] { k.series_max = config_uint(key, v); }},
      {"corpus.categories_min", [&] { k.categories_min = config_uint(key, v); }},
      {"corpus.categories_max", [&] { k.categories_max = config_uint(key, v); }},
      {"corpus.value_min", [&] { k.value_min = config_real(key, v); }},
      {"corpus.value_max", [&] { k.value_max = config_real(key, v); }},
      {"corpus.integer_values", [&] { k.integer_values = config_bool(key, v); }},
      {"corpus.mix_s", [&] { k.mix.s = config_real(key, v); }},
      {"corpus.mix_d", [&] { k.mix.d = config_real(key, v); }},
      {"corpus.mix_r", [&] { k.mix.r = config_real(key, v); }},
      {"corpus.seed", [&] { k.seed = config_uint(key, v); }},
      {"eval.tol", [&] { c.tol = config_real(key, v); }},
      {"eval.limit", [&] { c.eval_limit = config_uint(key, v); }},
      {"paths.train", [&] { c.train_corpus = v; }},
      {"paths.eval", [&] { c.eval_corpus = v; }},
      {"paths.checkpoint", [&] { c.checkpoint = v; }},
      {"paths.loss_log", [&] { c.loss_log = v; }},
      {"provider.endpoint", [&] { c.provider = v; }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) fail(Errc::ConfigError, "unknown setting '" + key + "'");
  it->second();
}

/// `section.key=value` override, as given on the command line.
inline void apply_override(RunConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) fail(Errc::ConfigError, "override '" + std::string(assignment) + "' lacks '='");
  apply_setting(c, std::string(trim(assignment.substr(0, eq))), std::string(assignment.substr(eq + 1)));
}

/// Flat `key = value` lines under `[section]` headers; `#` starts a comment.
inline void apply_config_text(RunConfig& c, std::string_view text) {
  std::string section;
  std::size_t lineno = 0;
  for (const auto& raw_line : split(text, '\n')) {
    ++lineno;
    std::string_view line = raw_line;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      if (line.front() == '[') {
        if (line.back() != ']') fail(Errc::ConfigError, "unterminated section header");
        section = std::string(trim(line.substr(1, line.size() - 2)));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) fail(Errc::ConfigError, "expected 'key = value'");
      const auto key = std::string(trim(line.substr(0, eq)));
      apply_setting(c, section.empty() ? key : section + "." + key, std::string(line.substr(eq + 1)));
    } catch (const Error& e) {
      fail(Errc::ConfigError, "line " + std::to_string(lineno) + ": " + e.message());
    }
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::ConfigError, "cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  try {
    apply_config_text(c, ss.str());
  } catch (const Error& e) {
    fail(Errc::ConfigError, path + ": " + e.message());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Training

/// Linear warmup to the peak rate, then cosine decay to zero.
inline double learning_rate(const TrainConfig& t, std::size_t step) {
  if (step < t.warmup) return t.lr * static_cast<double>(step + 1) / static_cast<double>(t.warmup);
  const auto decay_steps = t.steps > t.warmup ? t.steps - t.warmup : 1;
  const double progress = static_cast<double>(step - t.warmup) / static_cast<double>(decay_steps);
  return t.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

struct TrainHooks {
  std::ostream* log = nullptr;  // "step<TAB>loss<TAB>lr" per step
  std::function<void(std::size_t step, double loss)> on_step;
};

struct TrainResult {
  std::unique_ptr<GotCqaModel> model;
  std::vector<double> losses;
  double seconds = 0;
};

inline std::vector<double> read_loss_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot read loss log '" + path + "'");
  std::vector<double> out;
  for (std::string line; std::getline(in, line);) {
    const auto f = split(line, '\t');
    if (f.size() >= 2 && f[0] != "step") out.push_back(std::stod(f[1]));
  }
  return out;
}

/// End-to-end Adam training over `corpus`, one GoT assembly per example.
inline TrainResult train(const RunConfig& run, const std::vector<QATriple>& corpus, const TrainHooks& hooks = {}) {
  run.validate();
  if (corpus.empty()) fail(Errc::CorpusError, "training corpus is empty");
  const auto start = std::chrono::steady_clock::now();
  const auto rules = compile_rules(kDefaultRules);
  TrainResult result;
  result.model = std::make_unique<GotCqaModel>(run.model, run.decoder, corpus_vocab(rules, corpus), run.seed);
  auto& model = *result.model;

  std::vector<CompiledNetwork> nets;
  nets.reserve(corpus.size());
  for (const auto& t : corpus) {
    try {
      nets.push_back(model.assemble(t.gold_got, t.question));
    } catch (const Error& e) {
      fail(Errc::CorpusError, "example " + t.id + ": " + e.message());
    }
  }

  Adam adam(AdamConfig{run.train.lr, run.train.beta1, run.train.beta2, run.train.eps});
  std::ofstream file_log;
  if (!run.loss_log.empty()) {
    file_log.open(run.loss_log);
    if (!file_log) fail(Errc::IoError, "cannot write loss log '" + run.loss_log + "'");
    file_log << "step\tloss\tlr\n";
  }
  const auto save = [&] {
    if (!run.checkpoint.empty()) model.save(run.checkpoint);
  };

  std::vector<std::size_t> order(corpus.size());
  std::size_t cursor = order.size(), epoch = 0;
  for (std::size_t step = 0; step < run.train.steps; ++step) {
    const double lr = learning_rate(run.train, step);
    double step_loss = 0;
    for (std::size_t b = 0; b < run.train.batch_size; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(mix_seed(run.seed, 1000003 + epoch++));
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        cursor = 0;
      }
      const auto i = order[cursor++];
      Tape tape;
      TapeScope scope(tape);
      Tensor loss = model.loss(corpus[i].chart, nets[i], corpus[i].gold_answer);
      if (!std::isfinite(loss.item())) {
        save();
        fail(Errc::NonFiniteLoss, "loss became non-finite at step " + std::to_string(step) + " on example " + corpus[i].id +
                                      (run.checkpoint.empty() ? "" : "; last good parameters saved to " + run.checkpoint));
      }
      step_loss += loss.item() / static_cast<double>(run.train.batch_size);
      tape.backward(scale(loss, 1.0 / static_cast<double>(run.train.batch_size)));
    }
    if (run.train.clip > 0) clip_grad_norm(model.store(), run.train.clip);
    adam.step(model.store(), lr);
    model.store().zero_grad();

    result.losses.push_back(step_loss);
    if (file_log) file_log << step << '\t' << std::setprecision(17) << step_loss << '\t' << lr << '\n';
    if (hooks.log) *hooks.log << step << '\t' << std::setprecision(17) << step_loss << '\t' << lr << '\n';
    if (hooks.on_step) hooks.on_step(step, step_loss);
    if (run.train.checkpoint_every > 0 && (step + 1) % run.train.checkpoint_every == 0) save();
  }
  save();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalRecord {
  std::string id;
  QType qtype = QType::R;
  std::string prediction;
  std::string gold;
  bool match = false;

  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct EvalReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::array<std::size_t, 3> type_total{};    // S, D, R
  std::array<std::size_t, 3> type_correct{};
  double seconds = 0;
  std::vector<EvalRecord> records;

  static std::size_t slot(QType q) { return static_cast<std::size_t>(q); }

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
  double accuracy(QType q) const {
    const auto n = type_total[slot(q)];
    return n == 0 ? 0.0 : static_cast<double>(type_correct[slot(q)]) / static_cast<double>(n);
  }
  std::size_t count(QType q) const { return type_total[slot(q)]; }

  /// Equality of everything except wall time.
  bool same_outcome(const EvalReport& o) const {
    return total == o.total && correct == o.correct && type_total == o.type_total && type_correct == o.type_correct &&
           records == o.records;
  }
};

using Predictor = std::function<std::string(const QATriple&)>;

inline EvalReport evaluate(const Predictor& predict, const std::vector<QATriple>& corpus, double tol = kDefaultTolerance) {
  const auto start = std::chrono::steady_clock::now();
  EvalReport r;
  for (const auto& t : corpus) {
    EvalRecord rec{t.id, t.qtype, predict(t), t.gold_answer, false};
    rec.match = relaxed_match(rec.prediction, rec.gold, tol);
    ++r.total;
    ++r.type_total[EvalReport::slot(t.qtype)];
    if (rec.match) {
      ++r.correct;
      ++r.type_correct[EvalReport::slot(t.qtype)];
    }
    r.records.push_back(std::move(rec));
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

/// Greedy predictions of `model`, each question executed along its gold GoT.
inline EvalReport evaluate(const GotCqaModel& model, const std::vector<QATriple>& corpus, double tol = kDefaultTolerance) {
  return evaluate([&](const QATriple& t) { return model.predict(t.chart, model.assemble(t.gold_got, t.question)); }, corpus, tol);
}

inline EvalReport evaluate(const std::string& checkpoint, const std::vector<QATriple>& corpus, double tol = kDefaultTolerance) {
  const auto model = GotCqaModel::load(checkpoint);
  return evaluate(*model, corpus, tol);
}

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"examples", r.total},
          {"accuracy", r.accuracy()},
          {"S", {{"count", r.count(QType::S)}, {"accuracy", r.accuracy(QType::S)}}},
          {"D", {{"count", r.count(QType::D)}, {"accuracy", r.accuracy(QType::D)}}},
          {"R", {{"count", r.count(QType::R)}, {"accuracy", r.accuracy(QType::R)}}},
          {"seconds", r.seconds}};
}

inline std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "examples  " << r.total << '\n';
  for (auto q : {QType::S, QType::D, QType::R})
    os << to_string(q) << "         " << r.accuracy(q) << "  (" << r.type_correct[EvalReport::slot(q)] << "/" << r.count(q) << ")\n";
  os << "overall   " << r.accuracy() << "  (" << r.correct << "/" << r.total << ")\n";
  os << std::setprecision(2) << "seconds   " << r.seconds << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationVariant {
  std::string name;
  std::vector<std::pair<std::string, std::string>> settings;
};

/// Operator count x GoT guidance, as in the operator ablation.
inline std::vector<AblationVariant> operator_variants() {
  const auto v = [](std::string name, const char* mode, const char* got) {
    return AblationVariant{std::move(name), {{"model.operator_mode", mode}, {"model.got_enabled", got}}};
  };
  return {v("w/o GoT, one operator", "one", "false"),
          v("w/o GoT, two operators (find+log)", "find-log", "false"),
          v("w/o GoT, three operators (loc+num+log)", "loc-num-log", "false"),
          v("w/ GoT, two operators (find+log)", "find-log", "true"),
          v("w/ GoT, three operators (loc+num+log)", "loc-num-log", "true")};
}

/// One variant per value of `key`.
inline std::vector<AblationVariant> sweep(const std::string& key, const std::vector<std::string>& values) {
  std::vector<AblationVariant> out;
  for (const auto& v : values) out.push_back({key + "=" + v, {{key, v}}});
  return out;
}

/// Named grids ("operators", "arch", "self-data-layers", "op-layers") or a
/// custom product "key=v1,v2;key2=v3,v4".
inline std::vector<AblationVariant> parse_grid(std::string_view spec) {
  const auto s = std::string(trim(spec));
  if (s.empty()) return {};
  if (s == "operators") return operator_variants();
  if (s == "arch") return sweep("model.attention_arch", {"self-cross", "cross-cross", "self-self"});
  if (s == "self-data-layers") return sweep("model.self_data_layers", {"2", "3", "4", "5"});
  if (s == "op-layers") return sweep("model.op_layers", {"1", "2", "3"});
  std::vector<AblationVariant> grid{{"", {}}};
  for (const auto& axis : split(s, ';')) {
    if (trim(axis).empty()) continue;
    const auto eq = axis.find('=');
    if (eq == std::string::npos) fail(Errc::ConfigError, "grid axis '" + axis + "' lacks '='");
    const auto key = std::string(trim(std::string_view(axis).substr(0, eq)));
    const auto values = split(axis.substr(eq + 1), ',');
    std::vector<AblationVariant> next;
    for (const auto& g : grid) {
      for (const auto& raw : values) {
        const auto value = std::string(trim(raw));
        auto v = g;
        v.name += (v.name.empty() ? "" : " ") + key + "=" + value;
        v.settings.emplace_back(key, value);
        next.push_back(std::move(v));
      }
    }
    grid = std::move(next);
  }
  return grid;
}

struct AblationRow {
  std::string variant;
  bool ok = false;
  std::string error;
  EvalReport report;
  double final_loss = 0;
  double train_seconds = 0;
};

/// Trains and evaluates every variant from the same base config and seed. A
/// failing variant is recorded and the grid continues.
inline std::vector<AblationRow> ablate(const RunConfig& base, const std::vector<AblationVariant>& grid,
                                       const std::vector<QATriple>& train_corpus, const std::vector<QATriple>& eval_corpus,
                                       const std::function<void(const AblationRow&)>& on_row = {}) {
  std::vector<AblationRow> rows;
  for (const auto& variant : grid) {
    AblationRow row;
    row.variant = variant.name;
    try {
      RunConfig run = base;
      run.checkpoint.clear();
      run.loss_log.clear();
      for (const auto& [k, v] : variant.settings) apply_setting(run, k, v);
      auto trained = train(run, train_corpus);
      row.final_loss = trained.losses.empty() ? 0.0 : trained.losses.back();
      row.train_seconds = trained.seconds;
      row.report = evaluate(*trained.model, eval_corpus, run.tol);
      row.ok = true;
    } catch (const Error& e) {
      row.error = e.what();
    }
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json to_json(const AblationRow& r) {
  nlohmann::json j = {{"variant", r.variant}, {"ok", r.ok}};
  if (!r.ok) {
    j["error"] = r.error;
    return j;
  }
  j["eval"] = to_json(r.report);
  j["final_loss"] = r.final_loss;
  j["train_seconds"] = r.train_seconds;
  return j;
}

inline std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::size_t width = std::string("variant").size();
  for (const auto& r : rows) width = std::max(width, r.variant.size());
  std::ostringstream os;
  const auto cell = [&](const std::string& s, std::size_t w) { os << std::left << std::setw(static_cast<int>(w)) << s << "  "; };
  cell("variant", width);
  for (const char* h : {"S", "D", "R", "overall", "loss", "time(s)"}) cell(h, 8);
  os << '\n' << std::string(width + 6 * 10, '-') << '\n';
  const auto pct = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << 100.0 * v;
    return s.str();
  };
  const auto fixed = [](double v, int p) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(p) << v;
    return s.str();
  };
  for (const auto& r : rows) {
    cell(r.variant, width);
    if (!r.ok) {
      os << "FAILED: " << r.error << '\n';
      continue;
    }
    cell(pct(r.report.accuracy(QType::S)), 8);
    cell(pct(r.report.accuracy(QType::D)), 8);
    cell(pct(r.report.accuracy(QType::R)), 8);
    cell(pct(r.report.accuracy()), 8);
    cell(fixed(r.final_loss, 4), 8);
    cell(fixed(r.train_seconds + r.report.seconds, 1), 8);
    os << '\n';
  }
  return os.str();
}

}  // namespace gotcqa
