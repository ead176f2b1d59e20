#ifndef EXREF_METRICS_HPP_
#define EXREF_METRICS_HPP_

#include <map>
#include <span>
#include <string>
#include <vector>

#include "exref/corpus.hpp"
#include "exref/expl_lang.hpp"
#include "exref/matcher.hpp"
#include "exref/model.hpp"

namespace exref {

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Binary scores for `positive`; any ratio with a zero denominator is 0.
F1Result f1_score(std::span<const int> predictions, std::span<const int> gold, int positive);

struct TemplateSet {
  struct Template {
    std::vector<std::string> before;  // words preceding the {identity} slot
    std::vector<std::string> after;
    int label = 0;
  };
  std::vector<Template> templates;
  std::vector<std::string> terms;
};

// Template lines "<class>\t<text with one {identity} slot>"; term file has
// one identity phrase per line.
TemplateSet parse_templates(std::string_view template_text, std::string_view terms_text, const ClassList& classes,
                            const std::string& source_name = "<memory>");
TemplateSet load_templates(const std::string& template_path, const std::string& terms_path,
                           const ClassList& classes);

struct TemplateInstance {
  std::vector<std::string> words;
  int label = 0;
  int term = 0;  // index into TemplateSet::terms
};

// |templates| x |terms| instances, template-major.
std::vector<TemplateInstance> instantiate(const TemplateSet& set);

struct FprdResult {
  double fprd = 0.0;
  double overall_fpr = 0.0;
  std::map<std::string, double> per_term;  // FPR_t
};

// Σ_t |FPR − FPR_t| over the non-toxic (gold != positive) instances.
// Throws DataError if a term has no non-toxic instance.
FprdResult fprd_from_predictions(std::span<const int> predictions, std::span<const int> gold,
                                 std::span<const int> term, const std::vector<std::string>& term_names,
                                 int positive);
FprdResult fprd(const ModelState& model, const TemplateSet& templates, const WordVectors& vectors, int positive);

// Fraction of records whose noisy label equals the gold label. Throws
// DataError when a record's instance has no gold label.
double matching_precision(const std::vector<MatchRecord>& records, const Corpus& corpus);

std::vector<int> predict(const ModelState& model, const Corpus& corpus, const EmbeddingTable& table);
std::vector<int> gold_labels(const Corpus& corpus);
F1Result evaluate_f1(const ModelState& model, const Corpus& corpus, const EmbeddingTable& table, int positive);

}  // namespace exref

#endif  // EXREF_METRICS_HPP_
