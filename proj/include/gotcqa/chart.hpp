#pragma once

// Chart feature sequences: the feature-file loader for externally produced
// encodings, and the table linearizer + small trainable encoder used for
// synthetic bar charts.

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "gotcqa/binary_io.hpp"
#include "gotcqa/error.hpp"
#include "gotcqa/nn.hpp"
#include "gotcqa/text.hpp"
#include "gotcqa/vocab.hpp"

namespace gotcqa {

/// [L x d] chart token features, ordered top-left to bottom-right.
struct ChartFeatureSequence {
  Tensor features;

  std::size_t length() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

/// Ground-truth bar chart table. values[s][c] is series s at category c.
struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::string legend = "top right";
  std::vector<std::string> series_names;
  std::vector<std::string> category_names;
  std::vector<std::vector<double>> values;

  std::size_t series_count() const { return series_names.size(); }
  std::size_t category_count() const { return category_names.size(); }

  friend bool operator==(const ChartSpec&, const ChartSpec&) = default;
};

inline void validate_chart(const ChartSpec& spec) {
  if (spec.series_names.empty() || spec.category_names.empty())
    fail(Errc::EmptyChart, "chart needs at least one series and one category");
  if (spec.values.size() != spec.series_names.size())
    fail(Errc::ShapeMismatch, "values has " + std::to_string(spec.values.size()) + " rows for " +
                                  std::to_string(spec.series_names.size()) + " series");
  for (const auto& row : spec.values) {
    if (row.size() != spec.category_names.size())
      fail(Errc::ShapeMismatch, "values row has " + std::to_string(row.size()) + " entries for " +
                                    std::to_string(spec.category_names.size()) + " categories");
    for (double v : row)
      if (!std::isfinite(v)) fail(Errc::NonFiniteValue, "chart values must be finite");
  }
}

inline nlohmann::json to_json(const ChartSpec& c) {
  return {{"title", c.title},   {"x_label", c.x_label}, {"y_label", c.y_label}, {"legend", c.legend},
          {"series", c.series_names}, {"categories", c.category_names}, {"values", c.values}};
}

inline ChartSpec chart_from_json(const nlohmann::json& j) {
  ChartSpec c;
  try {
    c.title = j.at("title").get<std::string>();
    c.x_label = j.at("x_label").get<std::string>();
    c.y_label = j.at("y_label").get<std::string>();
    c.legend = j.value("legend", std::string("top right"));
    c.series_names = j.at("series").get<std::vector<std::string>>();
    c.category_names = j.at("categories").get<std::vector<std::string>>();
    c.values = j.at("values").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::SchemaError, std::string("chart: ") + e.what());
  }
  validate_chart(c);
  return c;
}

// ---------------------------------------------------------------------------
// Feature file: "CVFS" | u16 version | u32 L | u32 d | u8 dtype | payload
// dtype 1 = float32, 2 = float64; payload little-endian, row-major.

inline constexpr std::uint16_t kFeatureFileVersion = 1;
enum class FeatureDtype : std::uint8_t { F32 = 1, F64 = 2 };

inline void save_features(const std::string& path, const ChartFeatureSequence& seq, FeatureDtype dtype = FeatureDtype::F64) {
  binary::Writer w;
  w.raw("CVFS");
  w.uint(kFeatureFileVersion);
  w.uint(static_cast<std::uint32_t>(seq.length()));
  w.uint(static_cast<std::uint32_t>(seq.dim()));
  w.uint(static_cast<std::uint8_t>(dtype));
  for (double v : seq.features.data()) {
    if (dtype == FeatureDtype::F32)
      w.f32(static_cast<float>(v));
    else
      w.f64(v);
  }
  w.save(path);
}

inline ChartFeatureSequence load_features(const std::string& path, std::optional<std::size_t> expected_dim = std::nullopt) {
  auto r = binary::Reader::from_file(path, Errc::FormatError);
  if (r.raw(4) != "CVFS") fail(Errc::FormatError, "'" + path + "' lacks the CVFS magic");
  const auto version = r.uint<std::uint16_t>();
  if (version != kFeatureFileVersion) fail(Errc::FormatError, "unsupported feature file version " + std::to_string(version));
  const auto length = r.uint<std::uint32_t>();
  const auto dim = r.uint<std::uint32_t>();
  const auto dtype = r.uint<std::uint8_t>();
  if (dtype != 1 && dtype != 2) fail(Errc::FormatError, "unknown dtype tag " + std::to_string(dtype));
  if (length == 0 || dim == 0) fail(Errc::FormatError, "feature sequence must have L >= 1 and d >= 1");
  if (expected_dim && dim != *expected_dim)
    fail(Errc::ShapeMismatch, "feature dimension " + std::to_string(dim) + " differs from model dimension " +
                                  std::to_string(*expected_dim));
  const std::size_t n = static_cast<std::size_t>(length) * dim;
  const std::size_t width = dtype == 1 ? 4 : 8;
  if (r.remaining() != n * width)
    fail(Errc::FormatError, "payload holds " + std::to_string(r.remaining()) + " bytes, header promises " + std::to_string(n * width));
  std::vector<double> data(n);
  for (auto& v : data) {
    v = dtype == 1 ? static_cast<double>(r.f32()) : r.f64();
    if (!std::isfinite(v)) fail(Errc::NonFiniteValue, "non-finite feature in '" + path + "'");
  }
  return {Tensor({length, dim}, std::move(data))};
}

// ---------------------------------------------------------------------------
// Linearization: the chart read row by row, top-left to bottom-right.
//   title | x label | y label | legend <position> | <series> <cat> <value> ... | ...

inline std::string linearize(const ChartSpec& spec) {
  validate_chart(spec);
  std::vector<std::string> parts{spec.title, "|", spec.x_label, "|", spec.y_label, "|", "legend", spec.legend};
  for (std::size_t s = 0; s < spec.series_count(); ++s) {
    parts.push_back("|");
    parts.push_back(spec.series_names[s]);
    for (std::size_t c = 0; c < spec.category_count(); ++c) {
      parts.push_back(spec.category_names[c]);
      parts.push_back(format_number(spec.values[s][c]));
    }
  }
  return join(parts, " ");
}

inline std::vector<std::size_t> chart_token_ids(const ChartSpec& spec, const Vocab& vocab) {
  return vocab.tokenize(linearize(spec));
}

/// Token + learned position embeddings shared by every text-like input.
struct SharedEmbeddings {
  Tensor tokens;     // [V x d]
  Tensor positions;  // [P x d]

  SharedEmbeddings() = default;
  SharedEmbeddings(ParameterStore& store, std::size_t vocab_size, std::size_t max_positions, std::size_t d, Rng& rng)
      : tokens(store.add("embed.tokens", {vocab_size, d}, Init::Xavier, rng)),
        positions(store.add("embed.positions", {max_positions, d}, Init::Xavier, rng)) {}

  Tensor operator()(std::span<const std::size_t> ids) const {
    if (ids.size() > positions.rows())
      fail(Errc::ShapeMismatch, "sequence of " + std::to_string(ids.size()) + " tokens exceeds " +
                                    std::to_string(positions.rows()) + " positions");
    std::vector<std::size_t> pos(ids.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    return add(embedding_lookup(tokens, ids), embedding_lookup(positions, pos));
  }
};

/// Embeds the linearized chart and runs one self-attention encoder layer.
class ChartEncoder {
 public:
  ChartEncoder() = default;
  ChartEncoder(ParameterStore& store, const SharedEmbeddings& embeddings, std::size_t d, std::size_t heads,
               std::size_t ff_dim, Rng& rng)
      : embeddings_(embeddings), layer_(store, "chart.encoder", d, heads, ff_dim, rng) {}

  ChartFeatureSequence encode(const ChartSpec& spec, const Vocab& vocab) const {
    const auto ids = chart_token_ids(spec, vocab);
    return {layer_(embeddings_(ids))};
  }

 private:
  SharedEmbeddings embeddings_;  // handles shared with the owning model
  EncoderLayer layer_;
};

}  // namespace gotcqa
