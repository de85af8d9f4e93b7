#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "gotcqa/default_rules.hpp"
#include "gotcqa/got.hpp"
#include "gotcqa/provider.hpp"
#include "gotcqa/question_parser.hpp"
#include "support.hpp"

using namespace gotcqa;
using gotcqa::testing::two_entity_got;

#define EXPECT_ERRC(stmt, errc)                                   \
  try {                                                           \
    stmt;                                                         \
    ADD_FAILURE() << "expected " << errc_name(errc);              \
  } catch (const Error& e) {                                      \
    EXPECT_EQ(e.code(), errc) << e.what();                        \
  }

namespace {

std::size_t count_lines_with(const std::string& text, std::string_view needle) {
  std::size_t n = 0;
  for (const auto& line : split(text, '\n'))
    if (line.find(needle) != std::string::npos) ++n;
  return n;
}

std::size_t count_type(const Got& g, OperatorType t) {
  return static_cast<std::size_t>(std::count_if(g.nodes().begin(), g.nodes().end(), [t](const auto& n) { return n.type == t; }));
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph IR

TEST(Validate, TwoEntityIsValid) { EXPECT_TRUE(validate(two_entity_got()).ok()); }

TEST(Validate, EmptyGraph) { EXPECT_TRUE(validate(Got{}).has("EMPTY_GRAPH")); }

TEST(Validate, TwoCycle) {
  Got g({{1, "a", OperatorType::Loc}, {2, "b", OperatorType::Num}}, {{1, 2}, {2, 1}});
  EXPECT_TRUE(validate(g).has("CYCLE"));
}

TEST(Validate, StructuralViolations) {
  Got g({{1, "a", OperatorType::Loc}, {1, "b", OperatorType::Num}, {-3, "", OperatorType::Log}},
        {{1, 9}, {1, 1}, {1, -3}, {1, -3}});
  const auto r = validate(g);
  for (auto code : {"DUPLICATE_ID", "NEGATIVE_ID", "EMPTY_CONTENT", "DANGLING_EDGE", "SELF_EDGE", "DUPLICATE_EDGE"})
    EXPECT_TRUE(r.has(code)) << code;
}

TEST(Validate, CycleAgreesWithReachabilityOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    auto g = gotcqa::testing::random_dag(rng, 8, 0.3);
    auto edges = g.edges();
    // reverse a random edge half the time to plant a possible cycle
    if (!edges.empty() && rng.index(2) == 0) {
      const auto [a, b] = edges[rng.index(edges.size())];
      edges.emplace_back(b, a);
    }
    Got h(g.nodes(), edges);
    EXPECT_EQ(validate(h).has("CYCLE"), gotcqa::testing::has_cycle(h));
  }
}

TEST(Predecessors, TwoEntity) {
  const auto g = two_entity_got();
  EXPECT_EQ(predecessors(g, 3), (std::vector<NodeId>{kVirtualStart, 1}));
  EXPECT_EQ(predecessors(g, 1), (std::vector<NodeId>{kVirtualStart}));
  EXPECT_EQ(predecessors(g, 5), (std::vector<NodeId>{kVirtualStart, 3, 4}));
  EXPECT_EQ(graph_predecessors(g, 5), (std::vector<NodeId>{3, 4}));
}

TEST(Predecessors, SingleNodeAndUnknown) {
  Got g({{0, "x", OperatorType::Loc}}, {});
  EXPECT_EQ(predecessors(g, 0), (std::vector<NodeId>{kVirtualStart}));
  EXPECT_ERRC(predecessors(g, 7), Errc::UnknownNode);
}

TEST(Normalize, SingleSinkUnchanged) {
  EXPECT_EQ(normalize(two_entity_got()), two_entity_got());
  Got chain({{1, "a", OperatorType::Loc}, {2, "b", OperatorType::Num}}, {{1, 2}});
  EXPECT_EQ(normalize(chain), chain);
}

TEST(Normalize, TwoIsolatedNodesGetCollect) {
  Got g({{1, "a", OperatorType::Loc}, {2, "b", OperatorType::Loc}}, {});
  const auto n = normalize(g);
  ASSERT_EQ(n.size(), 3u);
  EXPECT_EQ(n.node(3).type, OperatorType::Log);
  EXPECT_EQ(n.node(3).content, "collect");
  EXPECT_EQ(n.sorted_edges(), (std::vector<Edge>{{1, 3}, {2, 3}}));
  EXPECT_EQ(n.sinks(), (std::vector<NodeId>{3}));
}

TEST(Plan, TwoEntity) {
  EXPECT_EQ(plan(two_entity_got()).steps, (std::vector<std::vector<NodeId>>{{1, 2}, {3, 4}, {5}}));
}

TEST(Plan, SingleNodeAndChain) {
  EXPECT_EQ(plan(Got({{0, "a", OperatorType::Loc}}, {})).steps, (std::vector<std::vector<NodeId>>{{0}}));
  Got chain({{4, "a", OperatorType::Loc}, {3, "b", OperatorType::Num}, {2, "c", OperatorType::Log}, {1, "d", OperatorType::Log}},
            {{4, 3}, {3, 2}, {2, 1}});
  EXPECT_EQ(plan(chain).steps, (std::vector<std::vector<NodeId>>{{4}, {3}, {2}, {1}}));
}

TEST(Plan, CycleRejected) {
  Got g({{1, "a", OperatorType::Loc}, {2, "b", OperatorType::Num}}, {{1, 2}, {2, 1}});
  EXPECT_ERRC(plan(g), Errc::CyclicGraph);
}

TEST(Plan, MatchesLongestPathOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = gotcqa::testing::random_dag(rng);
    EXPECT_EQ(plan(g).steps, gotcqa::testing::longest_path_layers(g)) << serialize(g);
  }
}

TEST(Serialize, RoundTrip) {
  const auto g = two_entity_got();
  EXPECT_EQ(deserialize(serialize(g)), g);
  EXPECT_EQ(serialize(g), serialize(g));
}

TEST(Serialize, RoundTripRandom) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto g = gotcqa::testing::random_dag(rng);
    EXPECT_EQ(deserialize(serialize(g, 2)), g);
  }
}

TEST(Serialize, SchemaErrors) {
  EXPECT_ERRC(deserialize(R"({"nodes": [{"id": 1, "type": "Max", "content": "x"}], "edges": []})"), Errc::SchemaError);
  EXPECT_ERRC(deserialize(R"({"nodes": [{"id": 1, "type": "Loc", "content": "x"},
                                       {"id": 1, "type": "Num", "content": "y"}], "edges": []})"),
              Errc::SchemaError);
  EXPECT_ERRC(deserialize("not json"), Errc::SchemaError);
  EXPECT_ERRC(deserialize(R"({"nodes": [{"id": 1, "type": "Loc", "content": "x"}], "edges": [[1]]})"), Errc::SchemaError);
}

TEST(Dot, StatementCounts) {
  const auto single = to_dot(Got({{0, "x", OperatorType::Loc}}, {}));
  EXPECT_EQ(count_lines_with(single, "[label="), 1u);
  EXPECT_EQ(count_lines_with(single, "->"), 0u);
  const auto dot = to_dot(two_entity_got());
  EXPECT_EQ(count_lines_with(dot, "[label="), 5u);
  EXPECT_EQ(count_lines_with(dot, "->"), 4u);
  EXPECT_EQ(dot, to_dot(two_entity_got()));
}

TEST(Dot, EscapesQuotes) {
  const auto dot = to_dot(Got({{0, "say \"hi\"", OperatorType::Loc}}, {}));
  EXPECT_NE(dot.find("\\\"hi\\\""), std::string::npos);
}

// ---------------------------------------------------------------------------
// Template rules

namespace {

constexpr std::string_view kDiffRule = R"(
rule R-DIFF | R | how many more {LABEL} of {ENT} than of {ENT2} | diff
skeleton diff
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {ENT}"},
           {"id": 2, "type": "Loc", "content": "locate {ENT2}"},
           {"id": 3, "type": "Num", "content": "value of {ENT}"},
           {"id": 4, "type": "Num", "content": "value of {ENT2}"},
           {"id": 5, "type": "Log", "content": "difference"}],
 "edges": [[1, 3], [2, 4], [3, 5], [4, 5]]}
end
)";

const RuleSet& shipped() {
  static const RuleSet rules = compile_rules(kDefaultRules);
  return rules;
}

}  // namespace

TEST(Rules, SingleRuleFile) { EXPECT_EQ(compile_rules(kDiffRule).size(), 1u); }

TEST(Rules, ShippedRulesCompile) { EXPECT_GE(shipped().size(), 20u); }

TEST(Rules, SlotMismatch) {
  const std::string text = R"(
rule R-X | D | what is the value of {ENT} | s
skeleton s
{"nodes": [{"id": 1, "type": "Loc", "content": "locate {SERIES}"}], "edges": []}
end
)";
  EXPECT_ERRC(compile_rules(text), Errc::SlotMismatch);
}

TEST(Rules, DuplicateRuleId) {
  const std::string text = std::string(kDiffRule) + "rule R-DIFF | R | what is {ENT} | diff\n";
  EXPECT_ERRC(compile_rules(text), Errc::RuleSyntaxError);
}

TEST(Rules, SyntaxErrors) {
  EXPECT_ERRC(compile_rules("rule R-A | Q | what | s\n"), Errc::RuleSyntaxError);
  EXPECT_ERRC(compile_rules("rule R-A | S | what {BOGUS} | s\n"), Errc::RuleSyntaxError);
  EXPECT_ERRC(compile_rules("rule R-A | S | what | s\n"), Errc::RuleSyntaxError);  // unknown skeleton
  EXPECT_ERRC(compile_rules("skeleton s\n{\"nodes\": [], \"edges\": []}\n"), Errc::RuleSyntaxError);
  EXPECT_ERRC(compile_rules("banana\n"), Errc::RuleSyntaxError);
}

// ---------------------------------------------------------------------------
// Question parsing

TEST(Parse, DifferenceQuestion) {
  const auto r = parse_question("How many more descendants of P2 than of P1?", shipped());
  EXPECT_EQ(r.rule_id, "R-REASON-MORE");
  EXPECT_EQ(r.qtype, QType::R);
  EXPECT_EQ(count_type(r.got, OperatorType::Loc), 2u);
  EXPECT_EQ(count_type(r.got, OperatorType::Num), 2u);
  EXPECT_EQ(count_type(r.got, OperatorType::Log), 1u);
  EXPECT_EQ(r.got.sorted_edges(), (std::vector<Edge>{{1, 3}, {2, 4}, {3, 5}, {4, 5}}));
  EXPECT_EQ(r.got.node(1).content, "locate p2");
  EXPECT_EQ(r.got.node(4).content, "value of p1");
}

TEST(Parse, LegendQuestion) {
  const auto r = parse_question("Where does the legend appear in the graph?", shipped());
  ASSERT_EQ(r.got.size(), 1u);
  EXPECT_EQ(r.got.nodes()[0].type, OperatorType::Loc);
  EXPECT_EQ(r.got.nodes()[0].content, "locate legend");
  EXPECT_EQ(r.qtype, QType::S);
}

TEST(Parse, NoTemplate) { EXPECT_ERRC(parse_question("What color is the sky?", shipped()), Errc::NoTemplateMatch); }

TEST(Parse, Deterministic) {
  const auto q = "What is the ratio between china and india?";
  EXPECT_EQ(parse_question(q, shipped()).got, parse_question(q, shipped()).got);
}

TEST(Parse, NumberSlotsCanonicalized) {
  const auto r = parse_question("How many values are above 1,200?", shipped());
  EXPECT_EQ(r.got.node(3).content, "count above 1200");
  const auto k = parse_question("How many values are below 3k?", shipped());
  EXPECT_EQ(k.got.node(3).content, "count below 3000");
}

TEST(Parse, AggregateSlotCanonicalized) {
  EXPECT_EQ(parse_question("What is the mean of all values?", shipped()).got.node(3).content, "avg");
  EXPECT_EQ(parse_question("What is the highest of all values?", shipped()).got.node(3).content, "max");
}

TEST(Parse, YearSlotRejectsNonYears) {
  const auto r = parse_question("What is the sales of china in 2019?", shipped());
  EXPECT_EQ(r.rule_id, "R-DATA-VALUE-YEAR");
  EXPECT_ERRC(parse_question("What is the total sales in banana?", shipped()), Errc::NoTemplateMatch);
}

// ---------------------------------------------------------------------------
// Provider fallback

namespace {

class StubProvider {
 public:
  explicit StubProvider(std::string body) : body_(std::move(body)) {
    server_.Post("/got", [this](const httplib::Request& req, httplib::Response& res) {
      last_request_ = req.body;
      res.set_content(body_, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubProvider() {
    server_.stop();
    thread_.join();
  }

  ProviderEndpoint endpoint() const { return {"http://127.0.0.1:" + std::to_string(port_) + "/got"}; }
  const std::string& last_request() const { return last_request_; }

 private:
  std::string body_;
  std::string last_request_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(Provider, ValidGraphPassesThrough) {
  StubProvider stub(nlohmann::json{{"got", to_json(two_entity_got())}}.dump());
  EXPECT_EQ(request_got("anything", stub.endpoint()), two_entity_got());
  const auto req = nlohmann::json::parse(stub.last_request());
  EXPECT_EQ(req["question"], "anything");
  EXPECT_EQ(req["schema_version"], kProviderSchemaVersion);
}

TEST(Provider, GraphAsStructuredTextString) {
  StubProvider stub(nlohmann::json{{"got", serialize(two_entity_got())}}.dump());
  EXPECT_EQ(request_got("anything", stub.endpoint()), two_entity_got());
}

TEST(Provider, CycleRejected) {
  Got cyc({{1, "a", OperatorType::Loc}, {2, "b", OperatorType::Num}}, {{1, 2}, {2, 1}});
  StubProvider stub(nlohmann::json{{"got", to_json(cyc)}}.dump());
  EXPECT_ERRC(request_got("q", stub.endpoint()), Errc::ProviderGraphInvalid);
}

TEST(Provider, MalformedBody) {
  StubProvider stub("{\"nothing\": 1}");
  EXPECT_ERRC(request_got("q", stub.endpoint()), Errc::ProviderSchemaError);
}

TEST(Provider, EndpointDown) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }  // closed again: nothing listens there now
  ProviderEndpoint ep{"http://127.0.0.1:" + std::to_string(port) + "/got", std::chrono::milliseconds(500)};
  EXPECT_ERRC(request_got("q", ep), Errc::ProviderUnreachable);
}

TEST(Fallback, TemplateFirst) {
  const auto r = parse_with_fallback("What is the title of the graph?", shipped());
  EXPECT_EQ(r.source, GotSource::Template);
  EXPECT_EQ(r.rule_id, "R-STRUCT-TITLE");
}

TEST(Fallback, ProviderForUntemplated) {
  StubProvider stub(nlohmann::json{{"got", to_json(two_entity_got())}}.dump());
  const auto r = parse_with_fallback("What color is the sky?", shipped(), stub.endpoint());
  EXPECT_EQ(r.source, GotSource::Provider);
  EXPECT_EQ(r.got, two_entity_got());
}

TEST(Fallback, NoEndpoint) { EXPECT_ERRC(parse_with_fallback("What color is the sky?", shipped()), Errc::Unparseable); }
