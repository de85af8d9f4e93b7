#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gotcqa {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

/// Plain decimal literal: optional sign, digits with at most one point.
inline bool is_plain_number(std::string_view s) {
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) s.remove_prefix(1);
  if (s.empty()) return false;
  bool digit = false, point = false;
  for (char c : s) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digit = true;
    } else if (c == '.' && !point) {
      point = true;
    } else {
      return false;
    }
  }
  return digit;
}

inline std::optional<double> parse_plain_number(std::string_view s) {
  if (!is_plain_number(s)) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Decimal literal with an optional magnitude suffix (k, m, b, bn).
inline std::optional<double> parse_magnitude_number(std::string_view s) {
  double scale = 1.0;
  if (s.size() > 2 && s.substr(s.size() - 2) == "bn") {
    scale = 1e9;
    s.remove_suffix(2);
  } else if (s.size() > 1) {
    switch (s.back()) {
      case 'k': scale = 1e3; s.remove_suffix(1); break;
      case 'm': scale = 1e6; s.remove_suffix(1); break;
      case 'b': scale = 1e9; s.remove_suffix(1); break;
      default: break;
    }
  }
  auto v = parse_plain_number(s);
  if (!v) return std::nullopt;
  return *v * scale;
}

/// Rounds to 6 significant digits and prints in positional notation without
/// trailing zeros or thousands separators ("2", "-9.66", "323000000").
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.5e", v);
  std::string s(buf);
  const bool negative = s.front() == '-';
  if (negative) s.erase(0, 1);
  const auto epos = s.find('e');
  const int exponent = std::stoi(s.substr(epos + 1));
  std::string digits = s.substr(0, 1) + s.substr(2, epos - 2);
  while (digits.size() > 1 && digits.back() == '0') digits.pop_back();
  const int point = exponent + 1;
  std::string out;
  if (point <= 0) {
    out = "0." + std::string(static_cast<std::size_t>(-point), '0') + digits;
  } else if (point >= static_cast<int>(digits.size())) {
    out = digits + std::string(static_cast<std::size_t>(point) - digits.size(), '0');
  } else {
    out = digits.substr(0, static_cast<std::size_t>(point)) + "." + digits.substr(static_cast<std::size_t>(point));
  }
  return negative ? "-" + out : out;
}

/// Question normalization for template matching: lowercase, whitespace
/// tokenized, surrounding punctuation stripped, thousands separators removed
/// inside numbers.
inline std::vector<std::string> normalize_question(std::string_view question) {
  std::vector<std::string> out;
  for (auto tok : split_whitespace(to_lower(question))) {
    std::string_view t = tok;
    auto keep_front = [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.';
    };
    while (!t.empty() && !keep_front(t.front())) t.remove_prefix(1);
    while (!t.empty() && !std::isalnum(static_cast<unsigned char>(t.back()))) t.remove_suffix(1);
    if (t.empty()) continue;
    std::string cleaned(t);
    // "1,200" -> "1200" but keep commas that are not digit separators out.
    std::string no_commas;
    for (std::size_t i = 0; i < cleaned.size(); ++i) {
      const bool sep = cleaned[i] == ',' && i > 0 && i + 1 < cleaned.size() &&
                       std::isdigit(static_cast<unsigned char>(cleaned[i - 1])) &&
                       std::isdigit(static_cast<unsigned char>(cleaned[i + 1]));
      if (!sep) no_commas += cleaned[i];
    }
    out.push_back(std::move(no_commas));
  }
  return out;
}

}  // namespace gotcqa
