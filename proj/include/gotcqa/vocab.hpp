#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gotcqa/error.hpp"
#include "gotcqa/text.hpp"

namespace gotcqa {

/// Token <-> id map. Ids are dense from 0: the four specials, then the number
/// alphabet (digits, sign, point, number boundary), then words.
///
/// Text is lowercased and split on whitespace; a numeric literal becomes one
/// token per character so any number is representable, and `<nb>` separates
/// two adjacent numbers.
class Vocab {
 public:
  static constexpr std::size_t kPad = 0, kBos = 1, kEos = 2, kUnk = 3;
  static constexpr std::string_view kNumberBoundary = "<nb>";

  Vocab() {
    for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(s);
    for (char c = '0'; c <= '9'; ++c) add(std::string(1, c));
    add("-");
    add(".");
    add(std::string(kNumberBoundary));
  }

  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    v.index_.clear();
    v.tokens_.clear();
    for (const auto& t : tokens) v.add(t);
    if (v.tokens_.size() < 4 || v.tokens_[kPad] != "<pad>" || v.tokens_[kBos] != "<bos>" || v.tokens_[kEos] != "<eos>" ||
        v.tokens_[kUnk] != "<unk>")
      fail(Errc::FormatError, "vocabulary must start with <pad> <bos> <eos> <unk>");
    return v;
  }

  std::size_t add(std::string token) {
    if (auto it = index_.find(token); it != index_.end()) return it->second;
    const auto id = tokens_.size();
    index_.emplace(token, id);
    tokens_.push_back(std::move(token));
    return id;
  }

  void add_words(std::string_view text) {
    for (const auto& w : split_whitespace(to_lower(text)))
      if (!is_plain_number(w)) add(w);
  }

  std::optional<std::size_t> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t id(std::string_view token) const { return find(token).value_or(kUnk); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> tokenize(std::string_view text) const {
    std::vector<std::size_t> ids;
    bool previous_number = false;
    for (const auto& w : split_whitespace(to_lower(text))) {
      if (is_plain_number(w)) {
        if (previous_number) ids.push_back(id(kNumberBoundary));
        for (char c : w)
          if (c != '+') ids.push_back(id(std::string_view(&c, 1)));
        previous_number = true;
      } else {
        ids.push_back(id(w));
        previous_number = false;
      }
    }
    return ids;
  }

  /// Inverse of tokenize. Stops at EOS; BOS and PAD are skipped; UNK prints
  /// as "<unk>".
  std::string detokenize(std::span<const std::size_t> ids) const {
    std::vector<std::string> pieces;
    bool in_number = false;
    for (auto i : ids) {
      if (i == kEos) break;
      if (i == kBos || i == kPad) continue;
      const auto& t = i < tokens_.size() ? tokens_[i] : tokens_[kUnk];
      if (t == kNumberBoundary) {
        in_number = false;
        continue;
      }
      if (is_number_char(t)) {
        if (in_number) {
          pieces.back() += t;
        } else {
          pieces.push_back(t);
          in_number = true;
        }
      } else {
        pieces.push_back(t);
        in_number = false;
      }
    }
    return join(pieces, " ");
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) fail(Errc::IoError, "cannot write vocabulary '" + path + "'");
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::IoError, "cannot read vocabulary '" + path + "'");
    std::vector<std::string> tokens;
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) tokens.push_back(line);
    return from_tokens(tokens);
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  static bool is_number_char(const std::string& t) {
    return t.size() == 1 && (std::isdigit(static_cast<unsigned char>(t[0])) || t[0] == '-' || t[0] == '.');
  }

  std::map<std::string, std::size_t> index_;
  std::vector<std::string> tokens_;
};

}  // namespace gotcqa
