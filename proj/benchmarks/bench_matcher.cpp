#include <benchmark/benchmark.h>

#include <random>

#include "exref/matcher.hpp"
#include "fixtures.hpp"
#include "generators.hpp"

using namespace exref;

namespace {

struct World {
  Corpus corpus;
  EmbeddingTable table{16, std::vector<float>(16, 0.0f)};
  std::vector<Rule> rules;

  World(int instances, int rule_count) {
    std::mt19937_64 rng(5);
    std::vector<AnnotatedInstance> xs;
    for (int i = 0; i < instances; ++i) xs.push_back(gen::random_instance(rng, "c" + std::to_string(i), 4, 14));
    corpus = Corpus(std::move(xs));
    corpus.apply_lexicons(gen::lexicons());
    for (const auto& x : corpus.instances()) {
      for (int t = 0; t < x.size(); ++t) {
        std::vector<float> v(16);
        for (auto& f : v) f = static_cast<float>(fixtures::uniform_real(rng, -1, 1));
        table.set_row(x.id, t, v);
      }
    }
    const ClassList classes({"non-hate", "hate"});
    const ExplLexicon lexicon = load_expl_lexicon(fixtures::data_lexicon_path());
    while (static_cast<int>(rules.size()) < rule_count) {
      const auto& ref = corpus.instances()[fixtures::uniform_int(rng, 0, corpus.size() - 1)];
      Rule r = parse_explanation(gen::random_explanation(rng, ref, classes.names()), lexicon, ref, classes);
      r.id = "r" + std::to_string(rules.size());
      r.ref_instance = ref.id;
      if (validate_rule(r, ref).accepted) rules.push_back(std::move(r));
    }
  }

  std::vector<PreparedRule> prepared() const {
    std::vector<PreparedRule> out;
    for (const auto& r : rules) out.push_back(prepare_rule(r, corpus.at(r.ref_instance), &table));
    return out;
  }
};

void BM_Generalize(benchmark::State& state) {
  static const World world(500, 20);
  const auto rules = world.prepared();
  MatchParams p;
  p.mode = state.range(0) ? MatchMode::kSoft : MatchMode::kStrict;
  p.threads = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(generalize(rules, world.corpus, &world.table, p));
  state.SetItemsProcessed(state.iterations() * world.corpus.size() * static_cast<int64_t>(rules.size()));
}
BENCHMARK(BM_Generalize)->ArgNames({"soft", "threads"})->Args({0, 1})->Args({1, 1})->Args({1, 4})
    ->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_SoftIndividuality(benchmark::State& state) {
  static const World world(50, 1);
  const auto& ref = world.corpus.instances()[0];
  const auto& x = world.corpus.instances()[1];
  for (auto _ : state) benchmark::DoNotOptimize(individuality_soft(ref, {0, 1}, x, world.table, 3, 0.6));
}
BENCHMARK(BM_SoftIndividuality);

}  // namespace
