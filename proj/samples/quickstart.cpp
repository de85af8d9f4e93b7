// Parse a question into its reasoning graph, answer it symbolically from the
// chart table, then train a small model on a synthetic corpus and ask it.

#include <iostream>

#include "gotcqa/gotcqa.hpp"

using namespace gotcqa;

int main() {
  const auto rules = compile_rules(kDefaultRules);

  ChartSpec chart{"family tree", "product", "descendants", "top right", {"2020"}, {"p1", "p2", "p3"}, {{3, 5, 4}}};
  const std::string question = "How many more descendants of P2 than of P1?";

  const auto parsed = parse_question(question, rules);
  std::cout << "rule " << parsed.rule_id << '\n' << serialize(parsed.got) << '\n';
  const auto p = plan(parsed.got);
  for (std::size_t k = 0; k < p.steps.size(); ++k) {
    std::cout << "step " << k + 1 << ':';
    for (auto id : p.steps[k]) std::cout << ' ' << id;
    std::cout << '\n';
  }
  std::cout << "symbolic answer: " << symbolic_execute(chart, parsed.got) << "\n\n";

  RunConfig run;
  run.seed = 7;
  run.model.d = 32;
  run.train.steps = 1000;
  run.corpus.n_charts = 4;
  run.corpus.seed = 1;
  const auto corpus = build_corpus(run.corpus, rules);
  auto trained = train(run, corpus, {nullptr, [](std::size_t step, double loss) {
                                       if ((step + 1) % 250 == 0) std::cout << "step " << step + 1 << " loss " << loss << '\n';
                                     }});

  const auto& ex = corpus.front();
  const auto net = trained.model->assemble(ex.gold_got, ex.question);
  std::cout << ex.question << "\n  model: " << trained.model->predict(ex.chart, net) << "  gold: " << ex.gold_answer << '\n';
  std::cout << format_report(evaluate(*trained.model, corpus));
}
