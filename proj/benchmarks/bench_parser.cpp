#include <benchmark/benchmark.h>

#include <random>

#include "exref/expl_lang.hpp"
#include "fixtures.hpp"
#include "generators.hpp"

using namespace exref;

namespace {

void BM_ParseExplanation(benchmark::State& state) {
  std::mt19937_64 rng(9);
  const ClassList classes({"non-hate", "hate"});
  const ExplLexicon lexicon = load_expl_lexicon(fixtures::data_lexicon_path());
  std::vector<std::pair<AnnotatedInstance, std::string>> inputs;
  for (int i = 0; i < 256; ++i) {
    auto x = gen::random_instance(rng, "p" + std::to_string(i));
    auto text = gen::random_explanation(rng, x, classes.names());
    inputs.emplace_back(std::move(x), std::move(text));
  }
  std::size_t i = 0, bytes = 0;
  for (auto _ : state) {
    const auto& [x, text] = inputs[i++ % inputs.size()];
    benchmark::DoNotOptimize(parse_explanation(text, lexicon, x, classes));
    bytes += text.size();
  }
  state.SetBytesProcessed(static_cast<int64_t>(bytes));
}
BENCHMARK(BM_ParseExplanation);

void BM_PrintAndReparse(benchmark::State& state) {
  std::mt19937_64 rng(10);
  const ClassList classes({"non-hate", "hate"});
  const ExplLexicon lexicon = load_expl_lexicon(fixtures::data_lexicon_path());
  const auto x = gen::random_instance(rng, "q", 8, 10);
  const Rule r = parse_explanation(gen::random_explanation(rng, x, classes.names()), lexicon, x, classes);
  for (auto _ : state) benchmark::DoNotOptimize(parse_explanation(print_rule(r, classes), lexicon, x, classes));
}
BENCHMARK(BM_PrintAndReparse);

}  // namespace
