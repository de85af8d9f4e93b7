#pragma once

// Template rule library: compiles the line-oriented rule file and maps
// questions onto GoT skeletons by slot binding.
//
// Rule file grammar
//   # comment
//   rule <id> | <S|D|R> | <pattern tokens with {SLOT} markers> | <skeleton name>
//   skeleton <name>
//   { GoT structured text, node contents may reference {SLOT} }
//   end
//
// Slot kinds: ENT, SERIES, LABEL (any single token), YEAR (four digits),
// NUM (decimal with optional sign and k/m/b suffix), AGG (avg|max|min|sum and
// synonyms). A trailing digit distinguishes repeated kinds, e.g. {ENT2}.

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gotcqa/error.hpp"
#include "gotcqa/got.hpp"
#include "gotcqa/text.hpp"

namespace gotcqa {

enum class QType { S, D, R };

constexpr std::string_view to_string(QType q) {
  switch (q) {
    case QType::S: return "S";
    case QType::D: return "D";
    case QType::R: return "R";
  }
  return "?";
}

inline std::optional<QType> parse_qtype(std::string_view s) {
  if (s == "S") return QType::S;
  if (s == "D") return QType::D;
  if (s == "R") return QType::R;
  return std::nullopt;
}

enum class SlotKind { Ent, Series, Label, Year, Num, Agg };

inline std::optional<SlotKind> slot_kind_of(std::string_view name) {
  while (!name.empty() && std::isdigit(static_cast<unsigned char>(name.back()))) name.remove_suffix(1);
  if (name == "ENT") return SlotKind::Ent;
  if (name == "SERIES") return SlotKind::Series;
  if (name == "LABEL") return SlotKind::Label;
  if (name == "YEAR") return SlotKind::Year;
  if (name == "NUM") return SlotKind::Num;
  if (name == "AGG") return SlotKind::Agg;
  return std::nullopt;
}

/// Canonical aggregate keyword for an AGG slot token.
inline std::optional<std::string> canonical_agg(std::string_view word) {
  static const std::map<std::string, std::string, std::less<>> kAgg = {
      {"avg", "avg"}, {"average", "avg"}, {"mean", "avg"}, {"max", "max"},   {"maximum", "max"},
      {"highest", "max"}, {"min", "min"}, {"minimum", "min"}, {"lowest", "min"}, {"sum", "sum"},
      {"total", "sum"}};
  auto it = kAgg.find(word);
  if (it == kAgg.end()) return std::nullopt;
  return it->second;
}

struct PatternToken {
  bool is_slot = false;
  std::string text;  // literal token, or slot name without braces
  SlotKind kind = SlotKind::Ent;
};

using Bindings = std::map<std::string, std::string>;

struct TemplateRule {
  std::string rule_id;
  QType qtype = QType::R;
  std::vector<PatternToken> pattern;
  std::string skeleton_name;
  Got skeleton;
  std::size_t line = 0;

  std::size_t literal_count() const {
    return static_cast<std::size_t>(
        std::count_if(pattern.begin(), pattern.end(), [](const PatternToken& t) { return !t.is_slot; }));
  }

  std::vector<std::string> slot_names() const {
    std::vector<std::string> out;
    for (const auto& t : pattern)
      if (t.is_slot && std::find(out.begin(), out.end(), t.text) == out.end()) out.push_back(t.text);
    return out;
  }
};

/// Ordered by matching priority: more literal tokens first, then file order.
class RuleSet {
 public:
  RuleSet() = default;
  explicit RuleSet(std::vector<TemplateRule> rules) : rules_(std::move(rules)) {
    std::stable_sort(rules_.begin(), rules_.end(),
                     [](const auto& a, const auto& b) { return a.literal_count() > b.literal_count(); });
  }

  const std::vector<TemplateRule>& rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }
  bool empty() const { return rules_.empty(); }

  const TemplateRule* find(std::string_view id) const {
    for (const auto& r : rules_)
      if (r.rule_id == id) return &r;
    return nullptr;
  }

 private:
  std::vector<TemplateRule> rules_;
};

namespace detail {

inline std::vector<std::string> skeleton_slots(const Got& g) {
  std::vector<std::string> out;
  for (const auto& n : g.nodes()) {
    std::size_t pos = 0;
    while ((pos = n.content.find('{', pos)) != std::string::npos) {
      auto close = n.content.find('}', pos);
      if (close == std::string::npos) break;
      auto name = n.content.substr(pos + 1, close - pos - 1);
      if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
      pos = close + 1;
    }
  }
  return out;
}

inline std::string substitute(std::string text, const Bindings& b) {
  for (const auto& [name, value] : b) {
    const std::string key = "{" + name + "}";
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
      text.replace(pos, key.size(), value);
      pos += value.size();
    }
  }
  return text;
}

[[noreturn]] inline void rule_error(std::size_t line, const std::string& reason) {
  fail(Errc::RuleSyntaxError, "line " + std::to_string(line) + ": " + reason);
}

inline std::vector<PatternToken> parse_pattern(std::string_view text, std::size_t line) {
  std::vector<PatternToken> out;
  for (auto& tok : split_whitespace(text)) {
    if (tok.size() > 2 && tok.front() == '{' && tok.back() == '}') {
      auto name = tok.substr(1, tok.size() - 2);
      auto kind = slot_kind_of(name);
      if (!kind) rule_error(line, "unknown slot kind {" + name + "}");
      out.push_back({true, name, *kind});
    } else {
      if (tok.find_first_of("{}") != std::string::npos) rule_error(line, "malformed slot token '" + tok + "'");
      out.push_back({false, to_lower(tok), SlotKind::Ent});
    }
  }
  if (out.empty()) rule_error(line, "empty pattern");
  return out;
}

}  // namespace detail

/// Parses a rule file. Fails atomically: the first malformed rule aborts.
inline RuleSet compile_rules(std::string_view rule_file) {
  struct PendingRule {
    TemplateRule rule;
  };
  std::vector<PendingRule> pending;
  std::map<std::string, std::pair<Got, std::size_t>> skeletons;
  std::set<std::string> ids;

  const auto lines = split(rule_file, '\n');
  std::size_t i = 0;
  while (i < lines.size()) {
    const std::size_t lineno = i + 1;
    const auto line = std::string(trim(lines[i]));
    ++i;
    if (line.empty() || line.front() == '#') continue;

    if (line.rfind("rule ", 0) == 0) {
      auto fields = split(std::string_view(line).substr(5), '|');
      if (fields.size() != 4) detail::rule_error(lineno, "expected 4 '|'-separated fields");
      TemplateRule r;
      r.rule_id = std::string(trim(fields[0]));
      r.line = lineno;
      if (r.rule_id.empty()) detail::rule_error(lineno, "empty rule id");
      if (!ids.insert(r.rule_id).second) detail::rule_error(lineno, "duplicate rule id '" + r.rule_id + "'");
      auto q = parse_qtype(trim(fields[1]));
      if (!q) detail::rule_error(lineno, "qtype must be S, D or R");
      r.qtype = *q;
      r.pattern = detail::parse_pattern(fields[2], lineno);
      r.skeleton_name = std::string(trim(fields[3]));
      if (r.skeleton_name.empty()) detail::rule_error(lineno, "empty skeleton reference");
      pending.push_back({std::move(r)});
    } else if (line.rfind("skeleton ", 0) == 0) {
      const std::string name(trim(std::string_view(line).substr(9)));
      if (name.empty()) detail::rule_error(lineno, "skeleton without a name");
      if (skeletons.count(name)) detail::rule_error(lineno, "duplicate skeleton '" + name + "'");
      std::string body;
      bool closed = false;
      while (i < lines.size()) {
        const auto l = trim(lines[i]);
        ++i;
        if (l == "end") {
          closed = true;
          break;
        }
        body += std::string(l) + "\n";
      }
      if (!closed) detail::rule_error(lineno, "skeleton '" + name + "' is not terminated by 'end'");
      Got g;
      try {
        g = deserialize(body);
      } catch (const Error& e) {
        detail::rule_error(lineno, "skeleton '" + name + "': " + e.what());
      }
      auto report = validate(g);
      if (!report.ok()) detail::rule_error(lineno, "skeleton '" + name + "' is invalid: " + report.violations.front().message);
      skeletons.emplace(name, std::make_pair(std::move(g), lineno));
    } else {
      detail::rule_error(lineno, "expected 'rule' or 'skeleton'");
    }
  }

  std::vector<TemplateRule> rules;
  for (auto& p : pending) {
    auto it = skeletons.find(p.rule.skeleton_name);
    if (it == skeletons.end())
      detail::rule_error(p.rule.line, "unknown skeleton '" + p.rule.skeleton_name + "'");
    p.rule.skeleton = it->second.first;
    const auto pattern_slots = p.rule.slot_names();
    for (const auto& s : detail::skeleton_slots(p.rule.skeleton)) {
      if (std::find(pattern_slots.begin(), pattern_slots.end(), s) == pattern_slots.end())
        fail(Errc::SlotMismatch, "line " + std::to_string(p.rule.line) + ": rule '" + p.rule.rule_id +
                                     "' skeleton references {" + s + "} absent from its pattern");
    }
    rules.push_back(std::move(p.rule));
  }
  return RuleSet(std::move(rules));
}

/// Binds a skeleton's slots and normalizes the result.
inline Got instantiate(const TemplateRule& rule, const Bindings& bindings) {
  std::vector<OperatorNode> nodes;
  for (const auto& n : rule.skeleton.nodes()) nodes.push_back({n.id, detail::substitute(n.content, bindings), n.type});
  return normalize(Got(std::move(nodes), rule.skeleton.edges()));
}

/// Canonical binding value for a question token in a slot of this kind.
inline std::optional<std::string> bind_slot(SlotKind kind, const std::string& token) {
  switch (kind) {
    case SlotKind::Ent:
    case SlotKind::Series:
    case SlotKind::Label:
      return token;
    case SlotKind::Year:
      if (token.size() == 4 && std::all_of(token.begin(), token.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        return token;
      return std::nullopt;
    case SlotKind::Num: {
      auto v = parse_magnitude_number(token);
      if (!v) return std::nullopt;
      return format_number(*v);
    }
    case SlotKind::Agg:
      return canonical_agg(token);
  }
  return std::nullopt;
}

inline std::optional<Bindings> match(const TemplateRule& rule, const std::vector<std::string>& tokens) {
  if (tokens.size() != rule.pattern.size()) return std::nullopt;
  Bindings b;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const auto& p = rule.pattern[k];
    if (!p.is_slot) {
      if (p.text != tokens[k]) return std::nullopt;
      continue;
    }
    auto value = bind_slot(p.kind, tokens[k]);
    if (!value) return std::nullopt;
    auto [it, inserted] = b.emplace(p.text, *value);
    if (!inserted && it->second != *value) return std::nullopt;
  }
  return b;
}

struct ParseResult {
  Got got;
  std::string rule_id;
  QType qtype = QType::R;
  Bindings bindings;
};

inline ParseResult parse_question(std::string_view question, const RuleSet& rules) {
  const auto tokens = normalize_question(question);
  for (const auto& rule : rules.rules()) {
    if (auto b = match(rule, tokens)) return {instantiate(rule, *b), rule.rule_id, rule.qtype, std::move(*b)};
  }
  fail(Errc::NoTemplateMatch, "no template matches \"" + std::string(question) + "\"");
}

/// Surface question for a rule under the given bindings (inverse of match).
inline std::string render_question(const TemplateRule& rule, const Bindings& bindings) {
  std::vector<std::string> words;
  for (const auto& p : rule.pattern) {
    if (!p.is_slot) {
      words.push_back(p.text);
      continue;
    }
    auto it = bindings.find(p.text);
    if (it == bindings.end()) fail(Errc::SlotMismatch, "no binding for {" + p.text + "}");
    words.push_back(it->second);
  }
  auto q = join(words, " ");
  if (!q.empty()) q.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(q.front())));
  return q + "?";
}

}  // namespace gotcqa
