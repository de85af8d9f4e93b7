#pragma once

// The full network: chart encoder -> self-data reasoning -> GoT-assembled
// operator blocks -> answer decoder, plus checkpoint round-tripping.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "gotcqa/chart.hpp"
#include "gotcqa/checkpoint.hpp"
#include "gotcqa/decoder.hpp"
#include "gotcqa/reasoning.hpp"
#include "gotcqa/vocab.hpp"

namespace gotcqa {

class GotCqaModel {
 public:
  GotCqaModel(const ModelConfig& cfg, DecoderConfig dec, Vocab vocab, std::uint64_t seed)
      : cfg_(cfg), dec_(dec), vocab_(std::move(vocab)), seed_(seed) {
    cfg_.validate();
    dec_.d = cfg_.d;
    Rng rng(seed);
    embeddings_ = SharedEmbeddings(store_, vocab_.size(), cfg_.max_positions, cfg_.d, rng);
    encoder_ = ChartEncoder(store_, embeddings_, cfg_.d, cfg_.heads, cfg_.ff_dim(), rng);
    engine_ = ReasoningEngine(store_, cfg_, embeddings_, vocab_, rng);
    decoder_ = AnswerDecoder(store_, dec_, embeddings_, vocab_.size(), cfg_.ff_dim(), rng);
  }

  GotCqaModel(const GotCqaModel&) = delete;
  GotCqaModel& operator=(const GotCqaModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const DecoderConfig& decoder_config() const { return dec_; }
  const Vocab& vocab() const { return vocab_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  const ReasoningEngine& engine() const { return engine_; }
  const AnswerDecoder& decoder() const { return decoder_; }

  Tensor chart_features(const ChartSpec& chart) const { return encoder_.encode(chart, vocab_).features; }

  CompiledNetwork assemble(const Got& got, std::string_view question) const { return engine_.assemble(got, question); }

  Tensor loss(const Tensor& cv, const CompiledNetwork& net, std::string_view answer) const {
    return decoder_.teacher_forced_loss(engine_.execute(net, cv).o_end, answer, vocab_);
  }
  Tensor loss(const ChartSpec& chart, const CompiledNetwork& net, std::string_view answer) const {
    return loss(chart_features(chart), net, answer);
  }

  std::string predict(const Tensor& cv, const CompiledNetwork& net) const {
    NoGradScope no_grad;
    return decoder_.decode_greedy(engine_.execute(net, cv).o_end, vocab_);
  }
  std::string predict(const ChartSpec& chart, const CompiledNetwork& net) const {
    NoGradScope no_grad;
    return predict(chart_features(chart), net);
  }

  std::map<std::string, std::string> metadata() const {
    return {{"model.d", std::to_string(cfg_.d)},
            {"model.heads", std::to_string(cfg_.heads)},
            {"model.self_data_layers", std::to_string(cfg_.self_data_layers)},
            {"model.op_layers", std::to_string(cfg_.op_layers)},
            {"model.attention_arch", std::string(to_string(cfg_.attention_arch))},
            {"model.operator_mode", std::string(to_string(cfg_.operator_mode))},
            {"model.got_enabled", cfg_.got_enabled ? "true" : "false"},
            {"model.guidance_len", std::to_string(cfg_.guidance_len)},
            {"model.ff_mult", std::to_string(cfg_.ff_mult)},
            {"model.max_positions", std::to_string(cfg_.max_positions)},
            {"decoder.layers", std::to_string(dec_.layers)},
            {"decoder.heads", std::to_string(dec_.heads)},
            {"decoder.max_len", std::to_string(dec_.max_len)},
            {"seed", std::to_string(seed_)},
            {"vocab.size", std::to_string(vocab_.size())}};
  }

  /// Writes `<path>` and the vocabulary beside it as `<path>.vocab`.
  void save(const std::string& path) const {
    auto meta = metadata();
    const auto vocab_path = path + ".vocab";
    meta["vocab.file"] = std::filesystem::path(vocab_path).filename().string();
    save_checkpoint(path, snapshot(store_, std::move(meta)));
    vocab_.save(vocab_path);
  }

  static std::unique_ptr<GotCqaModel> load(const std::string& path) {
    const auto ck = load_checkpoint(path);
    const auto get = [&](const std::string& key) -> const std::string& {
      auto it = ck.meta.find(key);
      if (it == ck.meta.end()) fail(Errc::CheckpointMismatch, "checkpoint lacks metadata '" + key + "'");
      return it->second;
    };
    const auto num = [&](const std::string& key) { return static_cast<std::size_t>(std::stoull(get(key))); };
    ModelConfig cfg;
    cfg.d = num("model.d");
    cfg.heads = num("model.heads");
    cfg.self_data_layers = num("model.self_data_layers");
    cfg.op_layers = num("model.op_layers");
    cfg.attention_arch = parse_attention_arch(get("model.attention_arch"));
    cfg.operator_mode = parse_operator_mode(get("model.operator_mode"));
    cfg.got_enabled = get("model.got_enabled") == "true";
    cfg.guidance_len = num("model.guidance_len");
    cfg.ff_mult = num("model.ff_mult");
    cfg.max_positions = num("model.max_positions");
    DecoderConfig dec;
    dec.layers = num("decoder.layers");
    dec.heads = num("decoder.heads");
    dec.max_len = num("decoder.max_len");
    const auto vocab_path = std::filesystem::path(path).parent_path() / get("vocab.file");
    auto vocab = Vocab::load(vocab_path.string());
    if (vocab.size() != num("vocab.size"))
      fail(Errc::CheckpointMismatch, "vocabulary '" + vocab_path.string() + "' has " + std::to_string(vocab.size()) +
                                         " tokens, checkpoint expects " + get("vocab.size"));
    auto model = std::make_unique<GotCqaModel>(cfg, dec, std::move(vocab), std::stoull(get("seed")));
    restore(model->store(), ck);
    return model;
  }

 private:
  ModelConfig cfg_;
  DecoderConfig dec_;
  Vocab vocab_;
  std::uint64_t seed_ = 0;
  ParameterStore store_;
  SharedEmbeddings embeddings_;
  ChartEncoder encoder_;
  ReasoningEngine engine_;
  AnswerDecoder decoder_;
};

}  // namespace gotcqa
