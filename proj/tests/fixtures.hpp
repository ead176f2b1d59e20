#ifndef EXREF_TESTS_FIXTURES_HPP_
#define EXREF_TESTS_FIXTURES_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "exref/corpus.hpp"
#include "exref/expl_lang.hpp"
#include "exref/model.hpp"

namespace fixtures {

// A sentiment-comparison pair: the reference sentence and a paraphrase that
// uses synonyms. Vectors are hand-placed so that
//   cos(depressing, distressing) = 0.9 and cos(entertaining, attractive) = 0.8.
inline const char* kComparisonCorpus =
    R"({"id":"ref","tokens":[{"text":"They","lemma":"they","pos":"PRON","ner":""},{"text":"prove","lemma":"prove","pos":"VERB","ner":""},{"text":"more","lemma":"more","pos":"ADV","ner":""},{"text":"distressing","lemma":"distressing","pos":"ADJ","ner":""},{"text":"than","lemma":"than","pos":"ADP","ner":""},{"text":"attractive","lemma":"attractive","pos":"ADJ","ner":""},{"text":".","lemma":".","pos":"PUNCT","ner":""}],"dep":[[1,0,"nsubj"],[-1,1,"root"],[3,2,"advmod"],[1,3,"acomp"],[5,4,"mark"],[3,5,"advcl"],[1,6,"punct"]],"label":0}
{"id":"para","tokens":[{"text":"Self-flagellation","lemma":"self-flagellation","pos":"NOUN","ner":""},{"text":"is","lemma":"be","pos":"AUX","ner":""},{"text":"more","lemma":"more","pos":"ADV","ner":""},{"text":"depressing","lemma":"depressing","pos":"ADJ","ner":""},{"text":"than","lemma":"than","pos":"ADP","ner":""},{"text":"entertaining","lemma":"entertaining","pos":"ADJ","ner":""},{"text":".","lemma":".","pos":"PUNCT","ner":""}],"dep":[[1,0,"nsubj"],[-1,1,"root"],[3,2,"advmod"],[1,3,"acomp"],[5,4,"mark"],[3,5,"advcl"],[1,6,"punct"]],"label":0}
{"id":"plain","tokens":[{"text":"The","lemma":"the","pos":"DET","ner":""},{"text":"film","lemma":"film","pos":"NOUN","ner":""},{"text":"runs","lemma":"run","pos":"VERB","ner":""},{"text":"long","lemma":"long","pos":"ADV","ner":""},{"text":".","lemma":".","pos":"PUNCT","ner":""}],"dep":[[1,0,"det"],[2,1,"nsubj"],[-1,2,"root"],[2,3,"advmod"],[2,4,"punct"]],"label":1}
)";

// Only the reference words are in the sentiment lexicon, so the paraphrase is
// reachable by soft matching alone.
inline const char* kComparisonSentiment = "distressing\tnegative\nattractive\tpositive\n";

inline std::string comparison_embeddings() {
  const double s = std::sqrt(1.0 - 0.81);  // depressing = 0.9 e0 + s e3
  auto row = [](const std::string& id, int i, std::vector<double> v) {
    std::string line = id + "\t" + std::to_string(i) + "\t";
    for (std::size_t k = 0; k < v.size(); ++k) line += (k ? " " : "") + std::to_string(v[k]);
    return line + "\n";
  };
  const double r = 1.0 / std::sqrt(2.0);
  std::string t = "EMB v1 6 19\n";
  t += row("ref", 0, {0, 0, 0, 0, 1, 0});
  t += row("ref", 1, {0, 0, 0, 0, 0, 1});
  t += row("ref", 2, {0, 0, 0, 0, r, r});
  t += row("ref", 3, {1, 0, 0, 0, 0, 0});
  t += row("ref", 4, {0, 1, 0, 0, 0, 0});
  t += row("ref", 5, {0, 0, 1, 0, 0, 0});
  t += row("ref", 6, {0, 0, 0, 0, -1, 0});
  t += row("para", 0, {0, 0, 0, 0, 0, -1});
  t += row("para", 1, {0, 0, 0, 0, -r, -r});
  t += row("para", 2, {0, 0, 0, 0, r, r});
  t += row("para", 3, {0.9, 0, 0, s, 0, 0});
  t += row("para", 4, {0, 1, 0, 0, 0, 0});
  t += row("para", 5, {0, 0, 0.8, 0.6, 0, 0});
  t += row("para", 6, {0, 0, 0, 0, -1, 0});
  t += row("plain", 0, {0, 0, 0, 0, r, -r});
  t += row("plain", 1, {0, 0, 0, 0, -r, r});
  t += row("plain", 2, {0, 0, 0, 0, 0, 1});
  t += row("plain", 3, {0, 0, 0, 0, 1, 0});
  t += row("plain", 4, {0, 0, 0, 0, -1, 0});
  t += "BASELINE\t0 0 0 0 0 0\n";
  return t;
}

// Seven clauses: three declarations, two sentiment characteristics (soft)
// and two adjacency relations.
inline const char* kComparisonExplanation =
    "X is 'distressing'. Y is 'than'. Z is 'attractive'.\n"
    "X is negative (soft). Z is positive (soft).\n"
    "X is immediately before Y. Y is immediately before Z.\n"
    "Label: negative.\n"
    "Attribution score of X should be increased.\n";

inline exref::ClassList sentiment_classes() { return exref::ClassList({"negative", "positive"}); }

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("exref_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Tokens written "word" or "word/POS" or "word/POS/NER"; lemma = lowercased
// word; a flat tree hanging off token 0.
inline exref::AnnotatedInstance sentence(const std::string& id, const std::string& spec) {
  exref::AnnotatedInstance x;
  x.id = id;
  for (const auto& item : exref::split_words(spec)) {
    exref::Token t;
    const auto a = item.find('/');
    t.text = item.substr(0, a);
    if (a != std::string::npos) {
      const auto b = item.find('/', a + 1);
      t.pos = item.substr(a + 1, b == std::string::npos ? std::string::npos : b - a - 1);
      if (b != std::string::npos) t.ner = item.substr(b + 1);
    } else {
      t.pos = "X";
    }
    t.lemma = exref::case_fold(t.text);
    x.tokens.push_back(t);
  }
  for (int i = 0; i < x.size(); ++i) x.deps.push_back({i == 0 ? -1 : 0, i, i == 0 ? "root" : "dep"});
  return x;
}

// ---- random generators -------------------------------------------------------

inline exref::Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  exref::Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

inline exref::Vector random_vector(std::mt19937_64& rng, int n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).col(0);
}

inline exref::ModelState random_model(std::mt19937_64& rng, exref::ModelMode mode, int dim, int hidden,
                                      int classes, double scale = 0.7) {
  exref::ModelState m = exref::ModelState::create(mode, dim, hidden, classes, rng());
  m.W1 = random_matrix(rng, hidden, dim, scale);
  m.b1 = random_vector(rng, hidden, scale * 0.5);
  m.W2 = random_matrix(rng, classes, hidden, scale);
  m.b2 = random_vector(rng, classes, scale * 0.5);
  return m;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::string data_lexicon_path() { return std::string(EXREF_TEST_DATA_DIR) + "/lexicon.tsv"; }

}  // namespace fixtures

#endif  // EXREF_TESTS_FIXTURES_HPP_
