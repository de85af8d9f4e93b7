#pragma once

// Self-data reasoning, typed operator blocks, and the GoT-guided assembly and
// stepped execution of the compositional network.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gotcqa/chart.hpp"
#include "gotcqa/error.hpp"
#include "gotcqa/got.hpp"
#include "gotcqa/nn.hpp"
#include "gotcqa/vocab.hpp"

namespace gotcqa {

enum class AttentionArch { SelfCross, CrossCross, SelfSelf };
enum class OperatorMode { One, FindLog, LocNumLog };

constexpr std::string_view to_string(AttentionArch a) {
  switch (a) {
    case AttentionArch::SelfCross: return "self-cross";
    case AttentionArch::CrossCross: return "cross-cross";
    case AttentionArch::SelfSelf: return "self-self";
  }
  return "?";
}

constexpr std::string_view to_string(OperatorMode m) {
  switch (m) {
    case OperatorMode::One: return "one";
    case OperatorMode::FindLog: return "find-log";
    case OperatorMode::LocNumLog: return "loc-num-log";
  }
  return "?";
}

inline AttentionArch parse_attention_arch(std::string_view s) {
  const auto v = to_lower(s);
  if (v == "self-cross" || v == "selfcross") return AttentionArch::SelfCross;
  if (v == "cross-cross" || v == "crosscross") return AttentionArch::CrossCross;
  if (v == "self-self" || v == "selfself") return AttentionArch::SelfSelf;
  fail(Errc::ConfigError, "unknown attention arch '" + std::string(s) + "' (self-cross, cross-cross, self-self)");
}

inline OperatorMode parse_operator_mode(std::string_view s) {
  const auto v = to_lower(s);
  if (v == "one") return OperatorMode::One;
  if (v == "find-log" || v == "findlog") return OperatorMode::FindLog;
  if (v == "loc-num-log" || v == "locnumlog") return OperatorMode::LocNumLog;
  fail(Errc::ConfigError, "unknown operator mode '" + std::string(s) + "' (one, find-log, loc-num-log)");
}

struct ModelConfig {
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t self_data_layers = 4;
  std::size_t op_layers = 1;
  AttentionArch attention_arch = AttentionArch::SelfCross;
  OperatorMode operator_mode = OperatorMode::LocNumLog;
  bool got_enabled = true;
  std::size_t guidance_len = 16;
  std::size_t ff_mult = 2;
  std::size_t max_positions = 256;

  std::size_t ff_dim() const { return ff_mult * d; }

  void validate() const {
    if (d == 0) fail(Errc::ConfigError, "d must be positive");
    if (heads == 0 || d % heads != 0)
      fail(Errc::HeadDivisibility, "d = " + std::to_string(d) + " is not divisible by heads = " + std::to_string(heads));
    if (self_data_layers == 0 || op_layers == 0) fail(Errc::ConfigError, "layer counts must be >= 1");
    if (guidance_len == 0 || ff_mult == 0 || max_positions == 0)
      fail(Errc::ConfigError, "guidance_len, ff_mult and max_positions must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Operator types that own a block under `mode`.
inline std::vector<OperatorType> block_types(OperatorMode mode) {
  switch (mode) {
    case OperatorMode::One: return {OperatorType::Generic};
    case OperatorMode::FindLog: return {OperatorType::Find, OperatorType::Log};
    case OperatorMode::LocNumLog: return {OperatorType::Loc, OperatorType::Num, OperatorType::Log};
  }
  return {};
}

inline OperatorType relabel(OperatorType t, OperatorMode mode) {
  if (mode == OperatorMode::One) return OperatorType::Generic;
  if (mode == OperatorMode::FindLog && (t == OperatorType::Loc || t == OperatorType::Num)) return OperatorType::Find;
  return t;
}

/// Pre-process projection followed by `layers` reasoning layers of two
/// self-attention encoders each.
class SelfDataBlock {
 public:
  SelfDataBlock() = default;
  SelfDataBlock(ParameterStore& store, const ModelConfig& cfg, Rng& rng) : pre_(store, "self_data.pre", cfg.d, cfg.d, rng) {
    for (std::size_t l = 0; l < cfg.self_data_layers; ++l)
      for (int e = 0; e < 2; ++e)
        encoders_.emplace_back(store, "self_data.layer" + std::to_string(l) + ".enc" + std::to_string(e), cfg.d, cfg.heads,
                               cfg.ff_dim(), rng);
  }

  Tensor operator()(const Tensor& cv, std::size_t* traversed = nullptr) const {
    if (cv.rank() != 2 || cv.cols() != pre_.weight.rows())
      fail(Errc::ShapeMismatch, "chart features " + shape_string(cv.shape()) + " do not have model dimension " +
                                    std::to_string(pre_.weight.rows()));
    Tensor x = pre_(cv);
    for (const auto& enc : encoders_) {
      x = enc(x);
      if (traversed) ++*traversed;
    }
    return x;
  }

  std::size_t encoder_count() const { return encoders_.size(); }

 private:
  Linear pre_;
  std::vector<EncoderLayer> encoders_;
};

/// A data flow tagged with the node that produced it (kVirtualStart for O_start).
struct SourcedFlow {
  NodeId source = kVirtualStart;
  Tensor flow;
};

/// One block per operator type, shared by every GoT node of that type.
class OperatorBlock {
 public:
  OperatorBlock() = default;
  OperatorBlock(ParameterStore& store, OperatorType type, const ModelConfig& cfg, const SharedEmbeddings& embeddings, Rng& rng)
      : type_(type), arch_(cfg.attention_arch), embeddings_(embeddings) {
    const std::string base = "op." + std::string(to_string(type));
    fuse_start_ = Linear(store, base + ".fuse_start", cfg.d, cfg.d, rng);
    fuse_pred_ = Linear(store, base + ".fuse_pred", cfg.d, cfg.d, rng);
    fuse_norm_ = LayerNorm(store, base + ".fuse_norm", cfg.d, rng);
    guidance_ = EncoderLayer(store, base + ".guidance", cfg.d, cfg.heads, cfg.ff_dim(), rng);
    for (std::size_t l = 0; l < cfg.op_layers; ++l) {
      const std::string name = base + ".layer" + std::to_string(l);
      layers_.push_back({EncoderLayer(store, name + ".first", cfg.d, cfg.heads, cfg.ff_dim(), rng),
                         EncoderLayer(store, name + ".second", cfg.d, cfg.heads, cfg.ff_dim(), rng)});
    }
  }

  OperatorType type() const { return type_; }

  /// LN(W_s O_start + b_s + sum_k (W_p O_k + b_p)): permutation invariant
  /// over predecessors and defined for any precursor count.
  Tensor fuse(const std::vector<SourcedFlow>& flows) const {
    if (flows.empty()) fail(Errc::EmptyPrecursors, "operator block received no precursor flows");
    const auto& first = flows.front().flow;
    std::optional<Tensor> acc;
    for (const auto& f : flows) {
      if (f.flow.shape() != first.shape())
        fail(Errc::ShapeMismatch, "precursor flows " + shape_string(first.shape()) + " and " + shape_string(f.flow.shape()) + " differ");
      Tensor p = f.source == kVirtualStart ? fuse_start_(f.flow) : fuse_pred_(f.flow);
      acc = acc ? add(*acc, p) : p;
    }
    return fuse_norm_(*acc);
  }

  /// Guidance features [Tg x d] of the node content.
  Tensor guidance(std::span<const std::size_t> ids) const {
    if (ids.empty()) fail(Errc::EmptyGuidance, "node content tokenizes to nothing");
    return guidance_(embeddings_(ids));
  }

  Tensor operator()(const std::vector<SourcedFlow>& flows, std::span<const std::size_t> guidance_ids) const {
    Tensor x = fuse(flows);
    const Tensor g = guidance(guidance_ids);
    for (const auto& layer : layers_) {
      switch (arch_) {
        case AttentionArch::SelfCross:
          x = layer.second(layer.first(x), &g);
          break;
        case AttentionArch::CrossCross:
          x = layer.second(layer.first(x, &g), &g);
          break;
        case AttentionArch::SelfSelf:
          x = layer.second(layer.first(add_bias(x, mean_rows(g))));
          break;
      }
    }
    return x;
  }

 private:
  struct Layer {
    EncoderLayer first, second;
  };

  OperatorType type_ = OperatorType::Generic;
  AttentionArch arch_ = AttentionArch::SelfCross;
  SharedEmbeddings embeddings_;
  Linear fuse_start_, fuse_pred_;
  LayerNorm fuse_norm_;
  EncoderLayer guidance_;
  std::vector<Layer> layers_;
};

struct CompiledNetwork {
  Got got;
  ExecutionPlan plan;
  std::map<NodeId, OperatorType> bindings;
  std::map<NodeId, std::vector<std::size_t>> guidance_ids;
  NodeId sink = kVirtualStart;
};

struct ExecuteOptions {
  bool reverse_within_step = false;  // order-independence checks
};

struct ExecutionResult {
  Tensor o_start;
  Tensor o_end;
  std::map<NodeId, Tensor> flows;
  std::map<NodeId, std::vector<NodeId>> consumed;  // sources fed to each node, VirtualStart first
  std::vector<NodeId> order;                        // nodes in the order they ran
};

class ReasoningEngine {
 public:
  ReasoningEngine() = default;
  ReasoningEngine(ParameterStore& store, const ModelConfig& cfg, const SharedEmbeddings& embeddings, Vocab vocab, Rng& rng)
      : cfg_(cfg), vocab_(std::move(vocab)) {
    cfg_.validate();
    self_data_ = SelfDataBlock(store, cfg_, rng);
    for (auto t : block_types(cfg_.operator_mode)) blocks_.emplace(t, OperatorBlock(store, t, cfg_, embeddings, rng));
  }

  const ModelConfig& config() const { return cfg_; }
  const SelfDataBlock& self_data() const { return self_data_; }
  bool has_block(OperatorType t) const { return blocks_.contains(t); }

  const OperatorBlock& block(OperatorType t) const {
    auto it = blocks_.find(t);
    if (it == blocks_.end())
      fail(Errc::UnsupportedType, std::string(to_string(t)) + " has no block under operator mode " +
                                      std::string(to_string(cfg_.operator_mode)));
    return it->second;
  }

  Tensor self_data_forward(const Tensor& cv, std::size_t* traversed = nullptr) const { return self_data_(cv, traversed); }

  std::vector<std::size_t> guidance_tokens(std::string_view content) const {
    auto ids = vocab_.tokenize(content);
    if (ids.size() > cfg_.guidance_len) ids.resize(cfg_.guidance_len);
    if (ids.empty()) fail(Errc::EmptyGuidance, "guidance '" + std::string(content) + "' tokenizes to nothing");
    return ids;
  }

  /// Binds every node of `got` to its type's block. With GoT guidance
  /// disabled the graph is ignored and a chain of the mode's block types,
  /// each guided by the whole question, is built instead.
  CompiledNetwork assemble(const Got& got, std::string_view question = {}) const {
    CompiledNetwork net;
    if (cfg_.got_enabled) {
      const auto report = validate(got);
      if (!report.ok()) {
        const auto& v = report.violations.front();
        fail(v.code == "CYCLE" ? Errc::CyclicGraph : Errc::SchemaError, v.code + ": " + v.message);
      }
      std::vector<OperatorNode> nodes = normalize(got).nodes();
      for (auto& n : nodes) n.type = relabel(n.type, cfg_.operator_mode);
      net.got = Got(std::move(nodes), normalize(got).edges());
    } else {
      const auto guidance = join(normalize_question(question), " ");
      if (guidance.empty()) fail(Errc::EmptyGuidance, "w/o-GoT assembly needs the question text");
      const auto types = block_types(cfg_.operator_mode);
      std::vector<OperatorNode> nodes;
      std::vector<Edge> edges;
      for (std::size_t i = 0; i < types.size(); ++i) {
        nodes.push_back({static_cast<NodeId>(i + 1), guidance, types[i]});
        if (i > 0) edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(i + 1));
      }
      net.got = Got(std::move(nodes), std::move(edges));
    }
    for (const auto& n : net.got.nodes()) {
      block(n.type);  // throws UnsupportedType
      net.bindings[n.id] = n.type;
      net.guidance_ids[n.id] = guidance_tokens(n.content);
    }
    net.plan = plan(net.got);
    net.sink = net.got.sinks().front();
    return net;
  }

  /// Inputs of one node: O_start plus the flows of its graph predecessors.
  Tensor operator_forward(NodeId id, const CompiledNetwork& net, const std::vector<SourcedFlow>& inputs) const {
    return block(net.bindings.at(id))(inputs, net.guidance_ids.at(id));
  }

  ExecutionResult execute(const CompiledNetwork& net, const Tensor& cv, ExecuteOptions opts = {}) const {
    ExecutionResult r;
    r.o_start = self_data_forward(cv);
    for (const auto& step : net.plan.steps) {
      std::vector<NodeId> order = step;
      if (opts.reverse_within_step) std::reverse(order.begin(), order.end());
      for (NodeId id : order) {
        std::vector<SourcedFlow> inputs{{kVirtualStart, r.o_start}};
        for (NodeId p : graph_predecessors(net.got, id)) inputs.push_back({p, r.flows.at(p)});
        auto& consumed = r.consumed[id];
        for (const auto& in : inputs) consumed.push_back(in.source);
        try {
          r.flows[id] = operator_forward(id, net, inputs);
        } catch (const Error& e) {
          fail(e.code(), "node " + std::to_string(id) + ": " + e.message());
        }
        r.order.push_back(id);
      }
    }
    r.o_end = r.flows.at(net.sink);
    return r;
  }

 private:
  ModelConfig cfg_;
  Vocab vocab_;
  SelfDataBlock self_data_;
  std::map<OperatorType, OperatorBlock> blocks_;
};

}  // namespace gotcqa
