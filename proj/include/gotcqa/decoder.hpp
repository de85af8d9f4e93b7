#pragma once

// Small transformer decoder that writes the answer from O_end.

#include <string>
#include <string_view>
#include <vector>

#include "gotcqa/chart.hpp"
#include "gotcqa/error.hpp"
#include "gotcqa/nn.hpp"
#include "gotcqa/vocab.hpp"

namespace gotcqa {

struct DecoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d = 64;
  std::size_t max_len = 16;

  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

/// Causal self-attention, cross-attention over O_end, feed-forward; each
/// sublayer with a skip connection and layer normalization.
struct DecoderLayer {
  MultiHeadAttention self_attention, cross_attention;
  LayerNorm self_norm, cross_norm, ff_norm;
  Linear ff_in, ff_out;

  DecoderLayer() = default;
  DecoderLayer(ParameterStore& store, const std::string& name, std::size_t d, std::size_t heads, std::size_t ff_dim, Rng& rng)
      : self_attention(store, name + ".self_attn", d, heads, rng),
        cross_attention(store, name + ".cross_attn", d, heads, rng),
        self_norm(store, name + ".self_norm", d, rng),
        cross_norm(store, name + ".cross_norm", d, rng),
        ff_norm(store, name + ".ff_norm", d, rng),
        ff_in(store, name + ".ff_in", d, ff_dim, rng),
        ff_out(store, name + ".ff_out", ff_dim, d, rng) {}

  Tensor operator()(const Tensor& y, const Tensor& memory) const {
    Tensor h = self_norm(add(y, self_attention(y, y, /*causal=*/true)));
    h = cross_norm(add(h, cross_attention(h, memory)));
    return ff_norm(add(h, ff_out(gelu(ff_in(h)))));
  }
};

class AnswerDecoder {
 public:
  AnswerDecoder() = default;
  AnswerDecoder(ParameterStore& store, const DecoderConfig& cfg, const SharedEmbeddings& embeddings, std::size_t vocab_size,
                std::size_t ff_dim, Rng& rng)
      : cfg_(cfg), embeddings_(embeddings) {
    if (cfg.layers == 0 || cfg.max_len == 0) fail(Errc::ConfigError, "decoder needs layers >= 1 and max_len >= 1");
    if (embeddings.tokens.cols() != cfg.d)
      fail(Errc::ShapeMismatch, "decoder d = " + std::to_string(cfg.d) + " differs from model dimension " +
                                    std::to_string(embeddings.tokens.cols()));
    for (std::size_t l = 0; l < cfg.layers; ++l)
      layers_.emplace_back(store, "decoder.layer" + std::to_string(l), cfg.d, cfg.heads, ff_dim, rng);
    out_ = Linear(store, "decoder.out", cfg.d, vocab_size, rng);
  }

  const DecoderConfig& config() const { return cfg_; }

  /// Next-token logits [T x V] for the input prefix (position t sees
  /// inputs 0..t only).
  Tensor logits(const Tensor& memory, std::span<const std::size_t> input_ids) const {
    if (memory.rank() != 2 || memory.cols() != cfg_.d)
      fail(Errc::ShapeMismatch, "decoder memory " + shape_string(memory.shape()) + " lacks model dimension " + std::to_string(cfg_.d));
    Tensor y = embeddings_(input_ids);
    for (const auto& layer : layers_) y = layer(y, memory);
    return out_(y);
  }

  /// Target ids followed by EOS; the decoder input is BOS followed by the targets.
  static std::vector<std::size_t> target_ids(std::string_view target, const Vocab& vocab) {
    auto ids = vocab.tokenize(target);
    if (ids.empty()) fail(Errc::EmptyTarget, "answer target is empty");
    ids.push_back(Vocab::kEos);
    return ids;
  }

  Tensor teacher_forced_loss(const Tensor& memory, std::string_view target, const Vocab& vocab) const {
    const auto targets = target_ids(target, vocab);
    std::vector<std::size_t> inputs{Vocab::kBos};
    inputs.insert(inputs.end(), targets.begin(), targets.end() - 1);
    return cross_entropy(logits(memory, inputs), targets);
  }

  std::vector<std::size_t> decode_ids(const Tensor& memory, std::size_t max_len) const {
    NoGradScope no_grad;
    std::vector<std::size_t> prefix{Vocab::kBos};
    std::vector<std::size_t> out;
    while (out.size() < max_len) {
      const Tensor lg = logits(memory, prefix);
      const auto vocab = lg.cols();
      const auto row = lg.data().subspan((lg.rows() - 1) * vocab, vocab);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == Vocab::kEos) break;
      out.push_back(best);
      prefix.push_back(best);
    }
    return out;
  }

  std::string decode_greedy(const Tensor& memory, const Vocab& vocab, std::size_t max_len) const {
    return vocab.detokenize(decode_ids(memory, max_len));
  }
  std::string decode_greedy(const Tensor& memory, const Vocab& vocab) const { return decode_greedy(memory, vocab, cfg_.max_len); }

 private:
  DecoderConfig cfg_;
  SharedEmbeddings embeddings_;
  std::vector<DecoderLayer> layers_;
  Linear out_;
};

}  // namespace gotcqa
