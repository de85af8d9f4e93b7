#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "gotcqa/default_rules.hpp"
#include "gotcqa/model.hpp"
#include "gotcqa/synth.hpp"
#include "support.hpp"

using namespace gotcqa;
using gotcqa::testing::two_entity_got;

#define EXPECT_ERRC(stmt, errc)                      \
  try {                                              \
    stmt;                                            \
    ADD_FAILURE() << "expected " << errc_name(errc); \
  } catch (const Error& e) {                         \
    EXPECT_EQ(e.code(), errc) << e.what();           \
  }

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return Tensor(std::move(shape), std::move(v));
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

ModelConfig small_config() {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  c.self_data_layers = 1;
  c.max_positions = 64;
  return c;
}

const Vocab& shared_vocab() {
  static const Vocab v = default_vocab(compile_rules(kDefaultRules));
  return v;
}

struct Engine {
  Rng rng;
  ParameterStore store;
  SharedEmbeddings emb;
  ReasoningEngine engine;
  explicit Engine(const ModelConfig& cfg, std::uint64_t seed = 1) : rng(seed) {
    emb = SharedEmbeddings(store, shared_vocab().size(), cfg.max_positions, cfg.d, rng);
    engine = ReasoningEngine(store, cfg, emb, shared_vocab(), rng);
  }
};

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("gotcqa_model_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

// ---------------------------------------------------------------------------
// Self-data reasoning

TEST(SelfData, ShapeContract) {
  Engine e(small_config());
  Rng rng(2);
  auto o = e.engine.self_data_forward(random_tensor({4, 8}, rng));
  EXPECT_EQ(o.shape(), (Shape{4, 8}));
}

TEST(SelfData, DefaultTraversesEightEncoders) {
  ModelConfig cfg;  // defaults: 4 reasoning layers
  cfg.d = 8;
  cfg.heads = 2;
  Engine e(cfg);
  Rng rng(3);
  std::size_t traversed = 0;
  e.engine.self_data_forward(random_tensor({4, 8}, rng), &traversed);
  EXPECT_EQ(traversed, 8u);
  EXPECT_EQ(e.engine.self_data().encoder_count(), 8u);
}

TEST(SelfData, WrongDimension) {
  Engine e(small_config());
  EXPECT_ERRC(e.engine.self_data_forward(Tensor::zeros({4, 5})), Errc::ShapeMismatch);
}

// ---------------------------------------------------------------------------
// Operator blocks

TEST(OperatorBlock, SingleFlowIsNormalizedProjection) {
  Engine e(small_config());
  Rng rng(4);
  const auto& block = e.engine.block(OperatorType::Log);
  auto fused = block.fuse({{kVirtualStart, random_tensor({5, 8}, rng)}});
  ASSERT_EQ(fused.shape(), (Shape{5, 8}));
  // layer norm at initialization (unit gain, zero bias): zero-mean rows
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0;
    for (std::size_t c = 0; c < 8; ++c) m += fused.at(r, c) / 8;
    EXPECT_NEAR(m, 0.0, 1e-12);
  }
}

TEST(OperatorBlock, FuseIgnoresPredecessorListingOrder) {
  Engine e(small_config());
  Rng rng(5);
  const auto s = random_tensor({5, 8}, rng), a = random_tensor({5, 8}, rng), b = random_tensor({5, 8}, rng);
  const auto& block = e.engine.block(OperatorType::Log);
  const auto x = block.fuse({{kVirtualStart, s}, {3, a}, {4, b}});
  const auto y = block.fuse({{kVirtualStart, s}, {4, b}, {3, a}});
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x.data()[i], y.data()[i], 1e-12);
}

TEST(OperatorBlock, EveryArchRunsAndArchesDiffer) {
  std::vector<std::vector<double>> outs;
  for (auto arch : {AttentionArch::SelfCross, AttentionArch::CrossCross, AttentionArch::SelfSelf}) {
    auto cfg = small_config();
    cfg.attention_arch = arch;
    Engine e(cfg);
    Rng rng(6);
    const auto net = e.engine.assemble(two_entity_got());
    const auto r = e.engine.execute(net, random_tensor({6, 8}, rng));
    EXPECT_EQ(r.o_end.shape(), (Shape{6, 8}));
    for (double v : r.o_end.data()) EXPECT_TRUE(std::isfinite(v));
    outs.push_back(values(r.o_end));
  }
  EXPECT_NE(outs[0], outs[1]);
  EXPECT_NE(outs[0], outs[2]);
  EXPECT_NE(outs[1], outs[2]);
}

TEST(OperatorBlock, GuidanceChangesOutput) {
  Engine e(small_config());
  Rng rng(7);
  const auto cv = random_tensor({6, 8}, rng);
  Got a({{1, "locate p1", OperatorType::Loc}}, {});
  Got b({{1, "locate p2", OperatorType::Loc}}, {});
  EXPECT_NE(values(e.engine.execute(e.engine.assemble(a), cv).o_end), values(e.engine.execute(e.engine.assemble(b), cv).o_end));
}

// ---------------------------------------------------------------------------
// Assembly

TEST(Assemble, LocNumLogBindsThreeSharedBlocks) {
  Engine e(small_config());
  const auto net = e.engine.assemble(two_entity_got());
  EXPECT_EQ(net.bindings.size(), 5u);
  std::set<const OperatorBlock*> distinct;
  for (const auto& [id, t] : net.bindings) distinct.insert(&e.engine.block(t));
  EXPECT_EQ(distinct.size(), 3u);
  EXPECT_EQ(net.bindings.at(1), OperatorType::Loc);
  EXPECT_EQ(net.bindings.at(3), OperatorType::Num);
  EXPECT_EQ(net.bindings.at(5), OperatorType::Log);
}

TEST(Assemble, FindLogRelabels) {
  auto cfg = small_config();
  cfg.operator_mode = OperatorMode::FindLog;
  Engine e(cfg);
  const auto net = e.engine.assemble(two_entity_got());
  for (NodeId id : {1, 2, 3, 4}) EXPECT_EQ(net.bindings.at(id), OperatorType::Find);
  EXPECT_EQ(net.bindings.at(5), OperatorType::Log);
  EXPECT_FALSE(e.engine.has_block(OperatorType::Loc));
}

TEST(Assemble, OneOperatorIsGeneric) {
  auto cfg = small_config();
  cfg.operator_mode = OperatorMode::One;
  Engine e(cfg);
  const auto net = e.engine.assemble(two_entity_got());
  for (const auto& [id, t] : net.bindings) EXPECT_EQ(t, OperatorType::Generic);
}

TEST(Assemble, WithoutGotBuildsQuestionGuidedChain) {
  auto cfg = small_config();
  cfg.got_enabled = false;
  Engine e(cfg);
  const auto net = e.engine.assemble(two_entity_got(), "How many more descendants of P2 than of P1?");
  ASSERT_EQ(net.got.size(), 3u);
  EXPECT_EQ(net.plan.steps.size(), 3u);
  for (const auto& n : net.got.nodes()) EXPECT_EQ(n.content, "how many more descendants of p2 than of p1");
  EXPECT_EQ(net.bindings.at(1), OperatorType::Loc);
  EXPECT_EQ(net.bindings.at(3), OperatorType::Log);
  EXPECT_ERRC(e.engine.assemble(two_entity_got(), ""), Errc::EmptyGuidance);
}

TEST(Assemble, ParameterCountIndependentOfGraph) {
  Engine e(small_config());
  const auto before = e.store.scalar_count();
  Rng rng(8);
  for (int i = 0; i < 20; ++i) e.engine.assemble(gotcqa::testing::random_dag(rng));
  EXPECT_EQ(e.store.scalar_count(), before);
}

TEST(Assemble, Errors) {
  Engine e(small_config());
  Got cyc({{1, "a", OperatorType::Loc}, {2, "b", OperatorType::Num}}, {{1, 2}, {2, 1}});
  EXPECT_ERRC(e.engine.assemble(cyc), Errc::CyclicGraph);
  EXPECT_ERRC(e.engine.assemble(Got({{1, "a", OperatorType::Generic}}, {})), Errc::UnsupportedType);
  EXPECT_ERRC(e.engine.assemble(Got{}), Errc::SchemaError);
}

// ---------------------------------------------------------------------------
// Execution

TEST(Execute, TwoEntitySteps) {
  Engine e(small_config());
  Rng rng(9);
  const auto net = e.engine.assemble(two_entity_got());
  ASSERT_EQ(net.plan.steps.size(), 3u);
  EXPECT_EQ(net.plan.steps[1], (std::vector<NodeId>{3, 4}));
  const auto r = e.engine.execute(net, random_tensor({6, 8}, rng));
  EXPECT_EQ(r.order, (std::vector<NodeId>{1, 2, 3, 4, 5}));
  EXPECT_EQ(values(r.o_end), values(r.flows.at(5)));
}

TEST(Execute, ConsumesExactlyThePrecursorSet) {
  Engine e(small_config());
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = normalize(gotcqa::testing::random_dag(rng, 6));
    const auto r = e.engine.execute(e.engine.assemble(g), random_tensor({4, 8}, rng));
    for (const auto& n : g.nodes()) EXPECT_EQ(r.consumed.at(n.id), predecessors(g, n.id));
  }
}

TEST(Execute, OrderWithinStepIrrelevant) {
  Engine e(small_config());
  Rng rng(11);
  const auto cv = random_tensor({6, 8}, rng);
  const auto net = e.engine.assemble(two_entity_got());
  const auto a = e.engine.execute(net, cv);
  const auto b = e.engine.execute(net, cv, ExecuteOptions{true});
  EXPECT_EQ(b.order, (std::vector<NodeId>{2, 1, 4, 3, 5}));
  EXPECT_EQ(values(a.o_end), values(b.o_end));
}

TEST(Execute, SingleNodeIsOneOperatorCall) {
  Engine e(small_config());
  Rng rng(12);
  const auto cv = random_tensor({5, 8}, rng);
  const auto net = e.engine.assemble(Got({{0, "locate legend", OperatorType::Loc}}, {}));
  const auto r = e.engine.execute(net, cv);
  const auto direct = e.engine.operator_forward(0, net, {{kVirtualStart, e.engine.self_data_forward(cv)}});
  EXPECT_EQ(values(r.o_end), values(direct));
}

TEST(Execute, MultiSinkGraphGetsCollectNode) {
  Engine e(small_config());
  Rng rng(13);
  const auto net = e.engine.assemble(Got({{1, "locate p1", OperatorType::Loc}, {2, "locate p2", OperatorType::Loc}}, {}));
  EXPECT_EQ(net.sink, 3);
  EXPECT_EQ(net.bindings.at(3), OperatorType::Log);
  EXPECT_EQ(e.engine.execute(net, random_tensor({4, 8}, rng)).order.size(), 3u);
}

// ---------------------------------------------------------------------------
// Decoder

namespace {

struct DecoderFixture {
  Rng rng{14};
  ParameterStore store;
  Vocab vocab;
  SharedEmbeddings emb;
  AnswerDecoder dec;
  explicit DecoderFixture(std::size_t max_len = 8) {
    for (int i = 0; vocab.size() < 50; ++i) vocab.add("w" + std::to_string(i));
    emb = SharedEmbeddings(store, vocab.size(), 32, 8, rng);
    dec = AnswerDecoder(store, DecoderConfig{2, 2, 8, max_len}, emb, vocab.size(), 16, rng);
  }
};

}  // namespace

TEST(Decoder, Causal) {
  DecoderFixture f;
  Rng rng(15);
  const auto mem = random_tensor({4, 8}, rng);
  const std::vector<std::size_t> a{Vocab::kBos, 5, 6, 7}, b{Vocab::kBos, 5, 6, 20};
  const auto la = f.dec.logits(mem, a), lb = f.dec.logits(mem, b);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < la.cols(); ++c) EXPECT_NEAR(la.at(r, c), lb.at(r, c), 1e-13);
  double last = 0;
  for (std::size_t c = 0; c < la.cols(); ++c) last += std::abs(la.at(3, c) - lb.at(3, c));
  EXPECT_GT(last, 1e-9);
}

TEST(Decoder, EmptyTarget) {
  DecoderFixture f;
  EXPECT_ERRC(f.dec.teacher_forced_loss(Tensor::zeros({2, 8}), "", f.vocab), Errc::EmptyTarget);
}

TEST(Decoder, InitialLossNearLogV) {
  DecoderFixture f;
  Rng rng(16);
  const auto loss = f.dec.teacher_forced_loss(random_tensor({4, 8}, rng), "w1 w2 w3", f.vocab).item();
  EXPECT_NEAR(loss, std::log(50.0), 0.5);
}

TEST(Decoder, MaxLenAndDeterminism) {
  DecoderFixture f(1);
  Rng rng(17);
  const auto mem = random_tensor({4, 8}, rng);
  EXPECT_LE(f.dec.decode_ids(mem, 1).size(), 1u);
  EXPECT_EQ(f.dec.decode_greedy(mem, f.vocab), f.dec.decode_greedy(mem, f.vocab));
}

TEST(Decoder, MemoryDimensionChecked) {
  DecoderFixture f;
  EXPECT_ERRC(f.dec.logits(Tensor::zeros({2, 7}), std::vector<std::size_t>{Vocab::kBos}), Errc::ShapeMismatch);
}

// ---------------------------------------------------------------------------
// Whole model

TEST(Model, OverfitsOneTriple) {
  const ChartSpec chart{"t", "x", "y", "top right", {"2019"}, {"p1", "p2"}, {{3, 5}}};
  const auto question = "How many more descendants of P2 than of P1?";
  const auto rules = compile_rules(kDefaultRules);
  auto cfg = small_config();
  cfg.d = 16;
  GotCqaModel model(cfg, DecoderConfig{1, 2, 16, 4}, default_vocab(rules), 3);
  const auto net = model.assemble(parse_question(question, rules).got, question);
  Adam opt(AdamConfig{3e-3});
  std::string decoded;
  for (int step = 0; step < 500; ++step) {
    Tape tape;
    TapeScope scope(tape);
    model.store().zero_grad();
    backward(model.loss(chart, net, "2"));
    opt.step(model.store());
    if (step % 25 == 24 && (decoded = model.predict(chart, net)) == "2") break;
  }
  EXPECT_EQ(decoded, "2");
}

TEST(Model, SaveLoadRoundTrip) {
  const auto rules = compile_rules(kDefaultRules);
  auto cfg = small_config();
  cfg.attention_arch = AttentionArch::CrossCross;
  cfg.operator_mode = OperatorMode::FindLog;
  GotCqaModel model(cfg, DecoderConfig{1, 2, 8, 6}, default_vocab(rules), 21);
  const auto path = temp_path("m.gckp");
  model.save(path.string());
  const auto back = GotCqaModel::load(path.string());
  EXPECT_EQ(back->metadata(), model.metadata());
  const ChartSpec chart{"t", "x", "y", "top right", {"2019"}, {"p1", "p2"}, {{3, 5}}};
  const auto net = model.assemble(two_entity_got(), "");
  EXPECT_EQ(values(model.loss(chart, net, "2")), values(back->loss(chart, back->assemble(two_entity_got(), ""), "2")));

  // a vocabulary that no longer matches the checkpoint
  Vocab other = default_vocab(rules);
  other.add("extra");
  other.save(path.string() + ".vocab");
  EXPECT_ERRC(GotCqaModel::load(path.string()), Errc::CheckpointMismatch);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".vocab");
}

TEST(Model, ConfigValidation) {
  auto cfg = small_config();
  cfg.heads = 3;
  EXPECT_ERRC(GotCqaModel(cfg, DecoderConfig{}, Vocab{}, 0), Errc::HeadDivisibility);
}
