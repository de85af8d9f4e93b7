#pragma once

// Central-difference verification of every layer type and of the whole
// model on a small configuration.

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "gotcqa/default_rules.hpp"
#include "gotcqa/model.hpp"
#include "gotcqa/synth.hpp"

namespace gotcqa {

struct GradCheckEntry {
  std::string name;
  GradCheckReport report;
  double seconds = 0;
};

struct GradCheckOptions {
  double h = 3e-3;
  FdScheme scheme = FdScheme::Richardson;
  std::size_t d = 8;
  std::size_t heads = 2;
  std::size_t length = 6;
  std::size_t model_max_coords = 24;  // per tensor, whole-model check only
  std::uint64_t seed = 11;
};

/// The graph of the two-entity difference question: two Loc, two Num, one Log.
inline Got difference_got() {
  return Got({{1, "locate p2", OperatorType::Loc},
              {2, "locate p1", OperatorType::Loc},
              {3, "value of p2", OperatorType::Num},
              {4, "value of p1", OperatorType::Num},
              {5, "difference", OperatorType::Log}},
             {{1, 3}, {2, 4}, {3, 5}, {4, 5}});
}

namespace detail {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return Tensor(std::move(shape), std::move(v));
}

/// sum(y * W) for a fixed random W: a scalar that depends on every output.
inline std::function<Tensor(const Tensor&)> projector(Rng& rng) {
  auto weights = std::make_shared<std::optional<Tensor>>();
  auto seed = rng.next();
  return [weights, seed](const Tensor& y) {
    if (!*weights || (*weights)->shape() != y.shape()) {
      Rng r(seed);
      *weights = random_tensor(y.shape(), r);
    }
    return sum(mul(y, **weights));
  };
}

}  // namespace detail

inline std::vector<GradCheckEntry> run_gradcheck(const GradCheckOptions& opt = {}) {
  using detail::random_tensor;
  std::vector<GradCheckEntry> out;
  Rng rng(opt.seed);
  const auto d = opt.d, L = opt.length;
  const auto run = [&](std::string name, const std::function<Tensor()>& fn, std::vector<Tensor> inputs,
                       std::size_t max_coords = 0) {
    const auto t0 = std::chrono::steady_clock::now();
    auto rep = finite_diff_report(fn, std::move(inputs), FdOptions{opt.h, opt.scheme, max_coords, opt.seed});
    out.push_back({std::move(name), rep, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
  };

  {
    auto a = random_tensor({2, 3}, rng), b = random_tensor({3, 2}, rng);
    auto proj = detail::projector(rng);
    run("matmul", [&] { return proj(matmul(a, b)); }, {a, b});
  }
  {
    ParameterStore store;
    Linear lin(store, "lin", 4, 5, rng);
    auto x = random_tensor({3, 4}, rng);
    auto proj = detail::projector(rng);
    auto inputs = store.tensors();
    inputs.push_back(x);
    run("linear", [&] { return proj(lin(x)); }, inputs);
  }
  {
    auto logits = random_tensor({4, 10}, rng, 2.0);
    const std::vector<std::size_t> targets{1, 7, 3, 3};
    run("softmax_cross_entropy", [&] { return cross_entropy(logits, targets); }, {logits});
  }
  {
    ParameterStore store;
    LayerNorm ln(store, "ln", 6, rng);
    for (auto& p : store.params())
      for (auto& v : p.tensor.mutable_data()) v += rng.uniform(-0.5, 0.5);
    auto x = random_tensor({3, 6}, rng);
    auto proj = detail::projector(rng);
    auto inputs = store.tensors();
    inputs.push_back(x);
    run("layer_norm", [&] { return proj(ln(x)); }, inputs);
  }
  {
    auto x = random_tensor({3, 5}, rng, 2.0);
    auto proj = detail::projector(rng);
    run("gelu", [&] { return proj(gelu(x)); }, {x});
  }
  {
    auto x = random_tensor({4, 5}, rng, 2.0);
    auto proj = detail::projector(rng);
    run("softmax_rows_causal", [&] { return proj(softmax_rows(x, true)); }, {x});
  }
  {
    ParameterStore store;
    MultiHeadAttention mha(store, "mha", d, opt.heads, rng);
    auto q = random_tensor({L, d}, rng), kv = random_tensor({L - 2, d}, rng);
    auto proj = detail::projector(rng);
    auto inputs = store.tensors();
    inputs.push_back(q);
    inputs.push_back(kv);
    run("multi_head_attention", [&] { return proj(add(mha(q, kv), mha(q, q, true))); }, inputs);
  }
  {
    ParameterStore store;
    EncoderLayer enc(store, "enc", d, opt.heads, 2 * d, rng);
    auto x = random_tensor({L, d}, rng), g = random_tensor({3, d}, rng);
    auto proj = detail::projector(rng);
    auto inputs = store.tensors();
    inputs.push_back(x);
    inputs.push_back(g);
    run("encoder_layer", [&] { return proj(enc(enc(x), &g)); }, inputs);
  }
  {
    ParameterStore store;
    ModelConfig cfg;
    cfg.d = d;
    cfg.heads = opt.heads;
    SelfDataBlock block(store, cfg, rng);
    auto cv = random_tensor({L, d}, rng);
    auto proj = detail::projector(rng);
    auto inputs = store.tensors();
    inputs.push_back(cv);
    run("self_data_block", [&] { return proj(block(cv)); }, inputs);
  }

  const auto rules = compile_rules(kDefaultRules);
  const auto vocab = default_vocab(rules);
  for (auto arch : {AttentionArch::SelfCross, AttentionArch::CrossCross, AttentionArch::SelfSelf}) {
    ParameterStore store;
    ModelConfig cfg;
    cfg.d = d;
    cfg.heads = opt.heads;
    cfg.attention_arch = arch;
    SharedEmbeddings emb(store, vocab.size(), 32, d, rng);
    OperatorBlock block(store, OperatorType::Log, cfg, emb, rng);
    auto start = random_tensor({L, d}, rng), a = random_tensor({L, d}, rng), b = random_tensor({L, d}, rng);
    const auto ids = vocab.tokenize("difference");
    auto proj = detail::projector(rng);
    auto inputs = store.tensors();
    for (auto* t : {&start, &a, &b}) inputs.push_back(*t);
    run("operator_block_" + std::string(to_string(arch)),
        [&] { return proj(block({{kVirtualStart, start}, {3, a}, {4, b}}, ids)); }, inputs);
  }
  {
    ParameterStore store;
    SharedEmbeddings emb(store, vocab.size(), 64, d, rng);
    ChartEncoder enc(store, emb, d, opt.heads, 2 * d, rng);
    ChartSpec chart{"t", "x", "y", "top right", {"2019"}, {"p1", "p2"}, {{3, 5}}};
    auto proj = detail::projector(rng);
    run("chart_encoder", [&] { return proj(enc.encode(chart, vocab).features); }, store.tensors(), 16);
  }
  {
    ParameterStore store;
    SharedEmbeddings emb(store, vocab.size(), 32, d, rng);
    AnswerDecoder dec(store, DecoderConfig{2, opt.heads, d, 8}, emb, vocab.size(), 2 * d, rng);
    auto memory = random_tensor({L, d}, rng);
    auto inputs = store.tensors();
    inputs.push_back(memory);
    run("answer_decoder", [&] { return dec.teacher_forced_loss(memory, "12.5", vocab); }, inputs, 16);
  }
  {
    ModelConfig cfg;
    cfg.d = d;
    cfg.heads = opt.heads;
    cfg.max_positions = 64;
    GotCqaModel model(cfg, DecoderConfig{2, opt.heads, d, 8}, vocab, opt.seed);
    const auto net = model.assemble(difference_got(), "how many more descendants of p2 than of p1");
    auto cv = random_tensor({L, d}, rng);
    auto inputs = model.store().tensors();
    inputs.push_back(cv);
    run("end_to_end", [&] { return model.loss(cv, net, "2"); }, inputs, opt.model_max_coords);
  }
  return out;
}

inline double max_rel_error(const std::vector<GradCheckEntry>& entries) {
  double worst = 0;
  for (const auto& e : entries) worst = std::max(worst, e.report.max_rel_error);
  return worst;
}

}  // namespace gotcqa
