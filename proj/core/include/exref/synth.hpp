#ifndef EXREF_SYNTH_HPP_
#define EXREF_SYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "exref/corpus.hpp"
#include "exref/expl_lang.hpp"

namespace exref {

// A planted-bias hate-speech task. In the source domain two identity terms
// ("muslims", "jews") only ever occur in hateful sentences; in the target
// domain every identity term occurs in both classes and hate is carried by
// a different set of slurs. Word vectors come in clusters so that soft
// matching has near-synonyms to find.
struct SynthConfig {
  std::uint64_t seed = 7;
  int dim = 32;
  int source_train = 400;
  int source_dev = 100;
  int source_test = 200;
  int target_unlabeled = 600;
  int target_dev = 100;
  int target_test = 300;
  double target_hate_rate = 0.4;
  double jitter = 0.05;  // per-occurrence noise on word vectors
};

struct SynthWorld {
  ClassList classes;  // non-hate, hate
  Corpus source_train, source_dev, source_test;
  Corpus target_unlabeled, target_dev, target_test;
  EmbeddingTable table;
  std::string sentiment_tsv, identity_txt, hateful_txt;
  LexiconSet lexicons;
  std::string explanations;  // three explanations over target_unlabeled
  std::string templates_tsv, terms_txt;
};

SynthWorld make_world(const SynthConfig& cfg);

// Writes every artifact plus "exref.conf" into `dir` (created if needed).
void write_world(const SynthWorld& world, const std::string& dir);

}  // namespace exref

#endif  // EXREF_SYNTH_HPP_
