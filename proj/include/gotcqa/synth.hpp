#pragma once

// Synthetic bar-chart QA: chart generator, template-driven question
// generator, and the symbolic GoT executor that computes gold answers.
//
// Node content micro-syntax understood by the executor:
//   Loc  "locate <words>"      words name categories and/or series; "legend",
//                              "title", "x axis", "y axis" name chart parts;
//                              nothing left (e.g. "locate all bars") = every bar
//   Num  "value(s) <words>"    reads the bars located by the precursor, or
//                              resolves <words> itself when there is none
//        "number of <words>"   counts legend entries or located bars
//   Log  "<op> [args]"         op in difference, sum/total, average, maximum,
//                              minimum, ratio, greater, less, equal,
//                              count [below|above <n>], collect
// Binary Log ops take operands in ascending precursor id order (a / b, a > b);
// difference is the absolute gap |a - b|. A comparison with one operand
// compares it with the trailing number.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gotcqa/chart.hpp"
#include "gotcqa/error.hpp"
#include "gotcqa/got.hpp"
#include "gotcqa/question_parser.hpp"
#include "gotcqa/rng.hpp"
#include "gotcqa/text.hpp"
#include "gotcqa/vocab.hpp"

namespace gotcqa {

namespace pools {

inline const std::vector<std::string> kProducts = {"p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8", "p9"};
inline const std::vector<std::string> kCountries = {"china", "india", "brazil", "france", "japan",
                                                    "kenya", "chile", "peru",   "spain",  "egypt"};
inline const std::vector<std::string> kYears = {"2015", "2016", "2017", "2018", "2019", "2020", "2021", "2022"};
inline const std::vector<std::string> kMeasures = {"descendants", "sales",     "revenue",    "visitors",
                                                   "exports",     "emissions", "population", "profit"};
inline const std::vector<std::string> kTitles = {"annual overview", "regional summary", "market report",
                                                 "yearly figures",  "survey results",   "growth trends"};
inline const std::vector<std::string> kLegendPositions = {"top right", "top left", "bottom right", "bottom left",
                                                          "upper center", "lower center"};
inline const std::vector<std::string> kAggWords = {"average", "mean", "maximum", "highest",
                                                   "minimum", "lowest", "sum",   "total"};

}  // namespace pools

// ---------------------------------------------------------------------------
// Symbolic executor

struct Cell {
  std::size_t series = 0;
  std::size_t category = 0;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

enum class ChartPart { Legend, Title, XAxis, YAxis };

/// Value produced by one node of the symbolic interpretation.
using SymbolicValue = std::variant<std::vector<Cell>, ChartPart, std::vector<double>, bool, std::string>;

namespace detail {

inline bool is_filler(std::string_view w) {
  static const std::set<std::string, std::less<>> kFiller = {"the",   "in",  "of",    "all",   "bars", "bar", "values",
                                                             "value", "for", "at",    "and",   "chart", "graph", "to",
                                                             "entries", "entry"};
  return kFiller.contains(w);
}

inline std::vector<std::string> content_words(std::string_view content) { return split_whitespace(to_lower(content)); }

inline std::optional<std::size_t> find_name(const std::vector<std::string>& names, std::string_view w) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (to_lower(names[i]) == w) return i;
  return std::nullopt;
}

/// Resolves entity words to chart parts or bar coordinates.
inline SymbolicValue resolve(const ChartSpec& chart, const std::vector<std::string>& words) {
  std::vector<std::string> rest;
  for (const auto& w : words)
    if (!is_filler(w)) rest.push_back(w);
  const auto joined = join(rest, " ");
  if (joined == "legend") return ChartPart::Legend;
  if (joined == "title") return ChartPart::Title;
  if (joined == "x axis") return ChartPart::XAxis;
  if (joined == "y axis") return ChartPart::YAxis;
  std::set<std::size_t> series, categories;
  for (const auto& w : rest) {
    if (auto c = find_name(chart.category_names, w)) {
      categories.insert(*c);
    } else if (auto s = find_name(chart.series_names, w)) {
      series.insert(*s);
    } else {
      fail(Errc::UnresolvableEntity, "'" + w + "' names no category, series or chart part");
    }
  }
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < chart.series_count(); ++s)
    for (std::size_t c = 0; c < chart.category_count(); ++c)
      if ((series.empty() || series.contains(s)) && (categories.empty() || categories.contains(c))) cells.push_back({s, c});
  return cells;
}

inline std::string part_text(const ChartSpec& chart, ChartPart p) {
  switch (p) {
    case ChartPart::Legend: return chart.legend;
    case ChartPart::Title: return chart.title;
    case ChartPart::XAxis: return chart.x_label;
    case ChartPart::YAxis: return chart.y_label;
  }
  return {};
}

inline std::vector<double> read_cells(const ChartSpec& chart, const std::vector<Cell>& cells) {
  std::vector<double> out;
  for (const auto& c : cells) out.push_back(chart.values[c.series][c.category]);
  return out;
}

inline const std::map<std::string, std::string, std::less<>>& log_ops() {
  static const std::map<std::string, std::string, std::less<>> kOps = {
      {"difference", "diff"}, {"diff", "diff"},   {"subtract", "diff"}, {"sum", "sum"},       {"total", "sum"},
      {"add", "sum"},         {"average", "avg"}, {"avg", "avg"},       {"mean", "avg"},      {"maximum", "max"},
      {"max", "max"},         {"highest", "max"}, {"minimum", "min"},   {"min", "min"},       {"lowest", "min"},
      {"ratio", "ratio"},     {"divide", "ratio"}, {"greater", "gt"},   {"gt", "gt"},         {"more", "gt"},
      {"less", "lt"},         {"lt", "lt"},       {"fewer", "lt"},      {"equal", "eq"},      {"eq", "eq"},
      {"count", "count"},     {"collect", "collect"}};
  return kOps;
}

inline std::optional<double> trailing_number(const std::vector<std::string>& words) {
  for (auto it = words.rbegin(); it != words.rend(); ++it)
    if (auto v = parse_magnitude_number(*it)) return v;
  return std::nullopt;
}

inline SymbolicValue eval_loc(const ChartSpec& chart, const std::vector<std::string>& words) {
  return resolve(chart, std::vector<std::string>(words.begin() + (words.empty() ? 0 : 1), words.end()));
}

inline SymbolicValue eval_num(const ChartSpec& chart, const std::vector<std::string>& words,
                              const std::vector<const SymbolicValue*>& inputs) {
  const bool counting = words.size() >= 2 && words[0] == "number" && words[1] == "of";
  if (inputs.size() > 1) fail(Errc::ArityMismatch, "Num node takes at most one precursor, got " + std::to_string(inputs.size()));
  SymbolicValue scope = inputs.empty() ? resolve(chart, std::vector<std::string>(words.begin() + 1, words.end())) : *inputs.front();
  if (counting) {
    if (auto* p = std::get_if<ChartPart>(&scope)) {
      if (*p != ChartPart::Legend) fail(Errc::ArityMismatch, "only legend entries can be counted among chart parts");
      return std::vector<double>{static_cast<double>(chart.series_count())};
    }
    if (auto* cells = std::get_if<std::vector<Cell>>(&scope)) return std::vector<double>{static_cast<double>(cells->size())};
    fail(Errc::ArityMismatch, "'number of' needs located bars or the legend");
  }
  if (auto* cells = std::get_if<std::vector<Cell>>(&scope)) return read_cells(chart, *cells);
  if (auto* p = std::get_if<ChartPart>(&scope)) return part_text(chart, *p);
  fail(Errc::ArityMismatch, "Num node needs a located scope");
}

inline std::vector<double> numbers_of(const SymbolicValue& v) {
  if (auto* n = std::get_if<std::vector<double>>(&v)) return *n;
  if (auto* cells = std::get_if<std::vector<Cell>>(&v))
    fail(Errc::ArityMismatch, "Log operand is a location (" + std::to_string(cells->size()) + " bars), not a value");
  fail(Errc::ArityMismatch, "Log operand is not numeric");
}

inline double scalar_of(const SymbolicValue& v, std::string_view op) {
  const auto n = numbers_of(v);
  if (n.size() != 1)
    fail(Errc::ArityMismatch, std::string(op) + " needs scalar operands, got " + std::to_string(n.size()) + " values");
  return n.front();
}

inline bool approx_equal(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)}); }

inline SymbolicValue eval_log(const std::vector<std::string>& words, const std::vector<const SymbolicValue*>& inputs) {
  if (words.empty()) fail(Errc::UnknownLogOp, "empty Log content");
  auto it = log_ops().find(words.front());
  if (it == log_ops().end()) fail(Errc::UnknownLogOp, "unknown logical operation '" + words.front() + "'");
  const auto& op = it->second;
  if (inputs.empty()) fail(Errc::ArityMismatch, op + " has no precursor values");

  std::vector<double> pooled;
  for (const auto* v : inputs) {
    const auto n = numbers_of(*v);
    pooled.insert(pooled.end(), n.begin(), n.end());
  }
  const auto binary = [&](std::string_view name) -> std::pair<double, double> {
    if (inputs.size() == 2) return {scalar_of(*inputs[0], name), scalar_of(*inputs[1], name)};
    if (inputs.size() == 1) {
      if (auto c = trailing_number(words)) return {scalar_of(*inputs[0], name), *c};
    }
    fail(Errc::ArityMismatch, std::string(name) + " needs two operands, got " + std::to_string(inputs.size()));
  };

  if (op == "diff") {
    auto [a, b] = binary(op);
    return std::vector<double>{std::abs(a - b)};
  }
  if (op == "ratio") {
    auto [a, b] = binary(op);
    if (b == 0) fail(Errc::UndefinedValue, "ratio with zero denominator");
    return std::vector<double>{a / b};
  }
  if (op == "gt" || op == "lt" || op == "eq") {
    auto [a, b] = binary(op);
    if (op == "gt") return a > b && !approx_equal(a, b);
    if (op == "lt") return a < b && !approx_equal(a, b);
    return approx_equal(a, b);
  }
  if (pooled.empty()) fail(Errc::ArityMismatch, op + " over an empty set of values");
  if (op == "sum") return std::vector<double>{std::accumulate(pooled.begin(), pooled.end(), 0.0)};
  if (op == "avg") return std::vector<double>{std::accumulate(pooled.begin(), pooled.end(), 0.0) / static_cast<double>(pooled.size())};
  if (op == "max") return std::vector<double>{*std::max_element(pooled.begin(), pooled.end())};
  if (op == "min") return std::vector<double>{*std::min_element(pooled.begin(), pooled.end())};
  if (op == "count") {
    const bool below = std::find(words.begin(), words.end(), "below") != words.end();
    const bool above = std::find(words.begin(), words.end(), "above") != words.end();
    const auto limit = trailing_number(words);
    if ((below || above) && !limit) fail(Errc::ArityMismatch, "count below/above needs a threshold");
    const auto n = std::count_if(pooled.begin(), pooled.end(), [&](double v) {
      if (below) return v < *limit;
      if (above) return v > *limit;
      return true;
    });
    return std::vector<double>{static_cast<double>(n)};
  }
  return pooled;  // collect
}

}  // namespace detail

/// Interprets every node over the true table; returns per-node values.
inline std::map<NodeId, SymbolicValue> symbolic_trace(const ChartSpec& chart, const Got& got) {
  validate_chart(chart);
  const auto p = plan(got);
  std::map<NodeId, SymbolicValue> values;
  for (const auto& step : p.steps) {
    for (NodeId id : step) {
      const auto& node = got.node(id);
      std::vector<const SymbolicValue*> inputs;
      for (NodeId pre : graph_predecessors(got, id)) inputs.push_back(&values.at(pre));
      const auto words = detail::content_words(node.content);
      auto type = node.type;
      if (type == OperatorType::Find || type == OperatorType::Generic) {
        const auto first = words.empty() ? std::string() : words.front();
        type = first == "locate" ? OperatorType::Loc
               : (first == "value" || first == "values" || first == "number") ? OperatorType::Num
                                                                                : OperatorType::Log;
      }
      try {
        if (type == OperatorType::Loc) {
          values.emplace(id, detail::eval_loc(chart, words));
        } else if (type == OperatorType::Num) {
          values.emplace(id, detail::eval_num(chart, words, inputs));
        } else {
          values.emplace(id, detail::eval_log(words, inputs));
        }
      } catch (const Error& e) {
        fail(e.code(), "node " + std::to_string(id) + " (\"" + node.content + "\"): " + e.message());
      }
    }
  }
  return values;
}

/// Formatted answer of a value: numbers to 6 significant digits, booleans
/// as YES/NO, chart parts as their text, bar sets as their values.
inline std::string format_value(const ChartSpec& chart, const SymbolicValue& v) {
  if (auto* b = std::get_if<bool>(&v)) return *b ? "YES" : "NO";
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  if (auto* p = std::get_if<ChartPart>(&v)) return detail::part_text(chart, *p);
  const auto nums = std::holds_alternative<std::vector<double>>(v) ? std::get<std::vector<double>>(v)
                                                                   : detail::read_cells(chart, std::get<std::vector<Cell>>(v));
  std::vector<std::string> parts;
  for (double x : nums) parts.push_back(format_number(x));
  return join(parts, ", ");
}

/// Whether a value is a single answer (one number, a boolean, or text).
inline bool is_scalar_answer(const SymbolicValue& v) {
  if (auto* n = std::get_if<std::vector<double>>(&v)) return n->size() == 1;
  return !std::holds_alternative<std::vector<Cell>>(v);
}

inline std::string symbolic_execute(const ChartSpec& chart, const Got& got) {
  const auto values = symbolic_trace(chart, got);
  const auto sinks = got.sinks();
  if (sinks.size() != 1) fail(Errc::SchemaError, "GoT must be normalized to a single sink");
  return format_value(chart, values.at(sinks.front()));
}

// ---------------------------------------------------------------------------
// Corpus generation

struct QTypeMix {
  double s = 0.2;
  double d = 0.3;
  double r = 0.5;

  friend bool operator==(const QTypeMix&, const QTypeMix&) = default;
};

struct CorpusConfig {
  std::size_t n_charts = 50;
  std::size_t questions_per_chart = 4;
  std::size_t series_min = 1, series_max = 2;
  std::size_t categories_min = 2, categories_max = 4;
  double value_min = 0, value_max = 100;
  bool integer_values = true;
  QTypeMix mix;
  std::uint64_t seed = 0;

  void validate() const {
    if (series_min == 0 || series_min > series_max) fail(Errc::ConfigError, "series range must be non-empty and >= 1");
    if (categories_min == 0 || categories_min > categories_max)
      fail(Errc::ConfigError, "category range must be non-empty and >= 1");
    if (series_max > pools::kYears.size()) fail(Errc::ConfigError, "at most " + std::to_string(pools::kYears.size()) + " series");
    if (categories_max > pools::kProducts.size())
      fail(Errc::ConfigError, "at most " + std::to_string(pools::kProducts.size()) + " categories");
    if (!(value_min <= value_max) || !std::isfinite(value_min) || !std::isfinite(value_max))
      fail(Errc::ConfigError, "value range must be finite and non-empty");
    if (mix.s < 0 || mix.d < 0 || mix.r < 0 || std::abs(mix.s + mix.d + mix.r - 1.0) > 1e-9)
      fail(Errc::ConfigError, "question type mix must be non-negative and sum to 1");
  }

  friend bool operator==(const CorpusConfig&, const CorpusConfig&) = default;
};

struct QATriple {
  std::string id;
  std::size_t chart_index = 0;
  ChartSpec chart;
  std::string question;
  QType qtype = QType::R;
  std::string rule_id;
  Got gold_got;
  std::string gold_answer;

  friend bool operator==(const QATriple&, const QATriple&) = default;
};

inline ChartSpec gen_chart(Rng& rng, const CorpusConfig& cfg) {
  ChartSpec c;
  const bool countries = rng.index(2) == 1;
  auto names = countries ? pools::kCountries : pools::kProducts;
  rng.shuffle(std::span<std::string>(names));
  const auto n_cat = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(cfg.categories_min),
                                                              static_cast<std::int64_t>(cfg.categories_max)));
  c.category_names.assign(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(n_cat));
  std::sort(c.category_names.begin(), c.category_names.end());

  auto years = pools::kYears;
  rng.shuffle(std::span<std::string>(years));
  const auto n_ser = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(cfg.series_min),
                                                              static_cast<std::int64_t>(cfg.series_max)));
  c.series_names.assign(years.begin(), years.begin() + static_cast<std::ptrdiff_t>(n_ser));
  std::sort(c.series_names.begin(), c.series_names.end());

  c.x_label = countries ? "country" : "product";
  c.y_label = pools::kMeasures[rng.index(pools::kMeasures.size())];
  c.title = pools::kTitles[rng.index(pools::kTitles.size())];
  c.legend = pools::kLegendPositions[rng.index(pools::kLegendPositions.size())];
  c.values.assign(n_ser, std::vector<double>(n_cat));
  for (auto& row : c.values)
    for (auto& v : row)
      v = cfg.integer_values ? static_cast<double>(rng.uniform_int(static_cast<std::int64_t>(std::ceil(cfg.value_min)),
                                                                   static_cast<std::int64_t>(std::floor(cfg.value_max))))
                             : rng.uniform(cfg.value_min, cfg.value_max);
  return c;
}

namespace detail {

/// Random surface bindings for every slot of `rule` drawn from the chart.
inline Bindings sample_bindings(const TemplateRule& rule, const ChartSpec& chart, const CorpusConfig& cfg, Rng& rng) {
  Bindings b;
  std::vector<std::string> categories = chart.category_names, series = chart.series_names;
  rng.shuffle(std::span<std::string>(categories));
  rng.shuffle(std::span<std::string>(series));
  std::size_t next_cat = 0, next_ser = 0;
  for (const auto& p : rule.pattern) {
    if (!p.is_slot || b.contains(p.text)) continue;
    switch (p.kind) {
      case SlotKind::Ent:
        if (next_cat >= categories.size()) fail(Errc::SlotMismatch, "chart has too few categories");
        b[p.text] = categories[next_cat++];
        break;
      case SlotKind::Series:
      case SlotKind::Year:
        if (next_ser >= series.size()) fail(Errc::SlotMismatch, "chart has too few series");
        b[p.text] = series[next_ser++];
        break;
      case SlotKind::Label:
        b[p.text] = chart.y_label;
        break;
      case SlotKind::Num:
        b[p.text] = format_number(static_cast<double>(
            rng.uniform_int(static_cast<std::int64_t>(std::ceil(cfg.value_min)), static_cast<std::int64_t>(std::floor(cfg.value_max)))));
        break;
      case SlotKind::Agg:
        b[p.text] = pools::kAggWords[rng.index(pools::kAggWords.size())];
        break;
    }
  }
  return b;
}

/// Canonical form of surface bindings (what the parser would bind).
inline Bindings canonical_bindings(const TemplateRule& rule, const Bindings& surface) {
  Bindings out;
  for (const auto& p : rule.pattern) {
    if (!p.is_slot) continue;
    auto v = bind_slot(p.kind, surface.at(p.text));
    if (!v) fail(Errc::SlotMismatch, "binding '" + surface.at(p.text) + "' is not valid for {" + p.text + "}");
    out[p.text] = *v;
  }
  return out;
}

inline QType draw_qtype(Rng& rng, const QTypeMix& mix) {
  const double u = rng.uniform();
  if (u < mix.s) return QType::S;
  if (u < mix.s + mix.d) return QType::D;
  return QType::R;
}

}  // namespace detail

/// Up to `count` distinct questions about `chart`. Candidates whose gold GoT
/// does not evaluate to a single answer on this chart are skipped.
inline std::vector<QATriple> gen_questions(const ChartSpec& chart, const RuleSet& rules, Rng& rng, const CorpusConfig& cfg,
                                           std::size_t count) {
  std::vector<QATriple> out;
  std::set<std::string> seen;
  const std::size_t max_attempts = 50 * count + 50;
  for (std::size_t attempt = 0; attempt < max_attempts && out.size() < count; ++attempt) {
    const auto qtype = detail::draw_qtype(rng, cfg.mix);
    std::vector<const TemplateRule*> candidates;
    for (const auto& r : rules.rules())
      if (r.qtype == qtype) candidates.push_back(&r);
    if (candidates.empty()) continue;
    const auto& rule = *candidates[rng.index(candidates.size())];
    try {
      const auto surface = detail::sample_bindings(rule, chart, cfg, rng);
      auto question = render_question(rule, surface);
      if (seen.contains(question)) continue;
      auto got = instantiate(rule, detail::canonical_bindings(rule, surface));
      const auto values = symbolic_trace(chart, got);
      const auto& sink_value = values.at(got.sinks().front());
      if (!is_scalar_answer(sink_value)) continue;
      seen.insert(question);
      QATriple t;
      t.chart = chart;
      t.question = std::move(question);
      t.qtype = rule.qtype;
      t.rule_id = rule.rule_id;
      t.gold_got = std::move(got);
      t.gold_answer = to_lower(format_value(chart, sink_value));
      out.push_back(std::move(t));
    } catch (const Error&) {
      continue;  // e.g. ratio over a zero bar or too few categories for the template
    }
  }
  return out;
}

inline std::vector<QATriple> build_corpus(const CorpusConfig& cfg, const RuleSet& rules) {
  cfg.validate();
  std::vector<QATriple> corpus;
  for (std::size_t i = 0; i < cfg.n_charts; ++i) {
    Rng rng(mix_seed(cfg.seed, i));
    const auto chart = gen_chart(rng, cfg);
    auto qs = gen_questions(chart, rules, rng, cfg, cfg.questions_per_chart);
    for (std::size_t j = 0; j < qs.size(); ++j) {
      qs[j].id = "c" + std::to_string(i) + "-q" + std::to_string(j);
      qs[j].chart_index = i;
      corpus.push_back(std::move(qs[j]));
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Corpus files: one JSON object per line.

inline nlohmann::json to_json(const QATriple& t) {
  return {{"id", t.id},
          {"chart_index", t.chart_index},
          {"chart", to_json(t.chart)},
          {"question", t.question},
          {"qtype", std::string(to_string(t.qtype))},
          {"rule_id", t.rule_id},
          {"got", to_json(t.gold_got)},
          {"answer", t.gold_answer}};
}

inline QATriple triple_from_json(const nlohmann::json& j) {
  QATriple t;
  try {
    t.id = j.at("id").get<std::string>();
    t.chart_index = j.value("chart_index", std::size_t{0});
    t.chart = chart_from_json(j.at("chart"));
    t.question = j.at("question").get<std::string>();
    const auto q = parse_qtype(j.at("qtype").get<std::string>());
    if (!q) fail(Errc::CorpusError, "unknown qtype " + j.at("qtype").dump());
    t.qtype = *q;
    t.rule_id = j.value("rule_id", std::string());
    t.gold_got = got_from_json(j.at("got"));
    t.gold_answer = j.at("answer").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::CorpusError, e.what());
  }
  return t;
}

inline void write_corpus(const std::string& path, const std::vector<QATriple>& corpus) {
  std::ofstream out(path);
  if (!out) fail(Errc::IoError, "cannot write corpus '" + path + "'");
  for (const auto& t : corpus) out << to_json(t).dump() << '\n';
}

inline std::vector<QATriple> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::CorpusError, "cannot read corpus '" + path + "'");
  std::vector<QATriple> corpus;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      corpus.push_back(triple_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      fail(Errc::CorpusError, path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(Errc::CorpusError, path + ":" + std::to_string(lineno) + ": " + e.message());
    }
  }
  return corpus;
}

struct CorpusSplits {
  std::vector<QATriple> train, val, test;
};

/// Splits by chart so no chart is shared between splits.
inline CorpusSplits split_by_chart(const std::vector<QATriple>& corpus, std::size_t n_charts, double train_frac, double val_frac) {
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(n_charts) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n_charts) + 1e-9));
  CorpusSplits s;
  for (const auto& t : corpus) {
    if (t.chart_index < n_train)
      s.train.push_back(t);
    else if (t.chart_index < n_train + n_val)
      s.val.push_back(t);
    else
      s.test.push_back(t);
  }
  return s;
}

inline nlohmann::json to_json(const CorpusConfig& c) {
  return {{"n_charts", c.n_charts},
          {"questions_per_chart", c.questions_per_chart},
          {"series", {c.series_min, c.series_max}},
          {"categories", {c.categories_min, c.categories_max}},
          {"values", {c.value_min, c.value_max}},
          {"integer_values", c.integer_values},
          {"mix", {{"S", c.mix.s}, {"D", c.mix.d}, {"R", c.mix.r}}},
          {"seed", c.seed}};
}

/// Writes train/val/test corpus files plus manifest.json into `dir`.
inline nlohmann::json write_splits(const std::string& dir, const CorpusConfig& cfg, const CorpusSplits& splits) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"config", to_json(cfg)}, {"seed", cfg.seed}, {"splits", nlohmann::json::object()}};
  const std::pair<const char*, const std::vector<QATriple>*> parts[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& [name, items] : parts) {
    const auto file = std::string(name) + ".jsonl";
    write_corpus((std::filesystem::path(dir) / file).string(), *items);
    manifest["splits"][name] = {{"file", file}, {"count", items->size()}};
  }
  std::ofstream out(std::filesystem::path(dir) / "manifest.json");
  if (!out) fail(Errc::IoError, "cannot write manifest in '" + dir + "'");
  out << manifest.dump(2) << '\n';
  return manifest;
}

// ---------------------------------------------------------------------------
// Vocabulary

/// Every word the generator and the shipped templates can emit.
inline Vocab default_vocab(const RuleSet& rules) {
  Vocab v;
  for (const auto* pool : {&pools::kProducts, &pools::kCountries, &pools::kMeasures, &pools::kTitles,
                           &pools::kLegendPositions, &pools::kAggWords})
    for (const auto& w : *pool) v.add_words(w);
  for (const char* w : {"country", "product", "legend", "|", "yes", "no", "locate", "avg", "max", "min"}) v.add_words(w);
  for (const auto& [word, op] : detail::log_ops()) v.add_words(word);
  for (const auto& r : rules.rules()) {
    for (const auto& p : r.pattern)
      if (!p.is_slot) v.add_words(p.text);
    for (const auto& n : r.skeleton.nodes()) {
      for (const auto& w : split_whitespace(n.content))
        if (w.front() != '{') v.add_words(w);
    }
  }
  return v;
}

/// default_vocab plus any further words appearing in `corpus`.
inline Vocab corpus_vocab(const RuleSet& rules, const std::vector<QATriple>& corpus) {
  auto v = default_vocab(rules);
  for (const auto& t : corpus) {
    v.add_words(linearize(t.chart));
    v.add_words(t.question);
    v.add_words(t.gold_answer);
    for (const auto& n : t.gold_got.nodes()) v.add_words(n.content);
  }
  return v;
}

}  // namespace gotcqa
