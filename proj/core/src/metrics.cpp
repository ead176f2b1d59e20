#include "exref/metrics.hpp"

#include <cmath>

#include "exref/error.hpp"
#include "exref/io_util.hpp"

namespace exref {

F1Result f1_score(std::span<const int> predictions, std::span<const int> gold, int positive) {
  if (predictions.size() != gold.size()) throw DataError("prediction and gold lengths differ");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool p = predictions[i] == positive;
    const bool g = gold[i] == positive;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  F1Result r;
  r.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

TemplateSet parse_templates(std::string_view template_text, std::string_view terms_text, const ClassList& classes,
                            const std::string& source_name) {
  TemplateSet set;
  std::size_t lineno = 0;
  for (const auto& line : split(template_text, '\n')) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto tab = t.find('\t');
    if (tab == std::string::npos) throw FormatError(source_name, lineno, "expected <class><TAB><text>");
    const auto cls = classes.find(trim(t.substr(0, tab)));
    if (!cls) throw FormatError(source_name, lineno, "unknown class '" + trim(t.substr(0, tab)) + "'");
    const auto words = split_words(t.substr(tab + 1));
    TemplateSet::Template tpl;
    tpl.label = *cls;
    int slots = 0;
    for (const auto& w : words) {
      if (w == "{identity}") {
        ++slots;
      } else {
        (slots == 0 ? tpl.before : tpl.after).push_back(w);
      }
    }
    if (slots != 1) throw FormatError(source_name, lineno, "template needs exactly one {identity} slot");
    set.templates.push_back(std::move(tpl));
  }
  for (const auto& line : split(terms_text, '\n')) {
    const std::string t = trim(line);
    if (!t.empty() && t[0] != '#') set.terms.push_back(t);
  }
  return set;
}

TemplateSet load_templates(const std::string& template_path, const std::string& terms_path,
                           const ClassList& classes) {
  return parse_templates(read_file(template_path), read_file(terms_path), classes, template_path);
}

std::vector<TemplateInstance> instantiate(const TemplateSet& set) {
  std::vector<TemplateInstance> out;
  for (const auto& tpl : set.templates) {
    for (std::size_t t = 0; t < set.terms.size(); ++t) {
      TemplateInstance inst;
      inst.words = tpl.before;
      for (auto& w : split_words(set.terms[t])) inst.words.push_back(std::move(w));
      inst.words.insert(inst.words.end(), tpl.after.begin(), tpl.after.end());
      inst.label = tpl.label;
      inst.term = static_cast<int>(t);
      out.push_back(std::move(inst));
    }
  }
  return out;
}

FprdResult fprd_from_predictions(std::span<const int> predictions, std::span<const int> gold,
                                 std::span<const int> term, const std::vector<std::string>& term_names,
                                 int positive) {
  if (predictions.size() != gold.size() || gold.size() != term.size()) throw DataError("length mismatch");
  std::vector<double> fp(term_names.size(), 0.0), neg(term_names.size(), 0.0);
  double all_fp = 0.0, all_neg = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == positive) continue;
    if (term[i] < 0 || term[i] >= static_cast<int>(term_names.size())) throw DataError("term index out of range");
    const bool false_pos = predictions[i] == positive;
    fp[term[i]] += false_pos;
    neg[term[i]] += 1;
    all_fp += false_pos;
    all_neg += 1;
  }
  FprdResult r;
  r.overall_fpr = all_neg > 0 ? all_fp / all_neg : 0.0;
  for (std::size_t t = 0; t < term_names.size(); ++t) {
    if (neg[t] == 0) throw DataError("identity term '" + term_names[t] + "' has no non-toxic instance");
    const double fpr_t = fp[t] / neg[t];
    r.per_term[term_names[t]] = fpr_t;
    r.fprd += std::abs(r.overall_fpr - fpr_t);
  }
  return r;
}

FprdResult fprd(const ModelState& model, const TemplateSet& templates, const WordVectors& vectors, int positive) {
  std::vector<int> pred, gold, term;
  for (const auto& inst : instantiate(templates)) {
    pred.push_back(argmax(forward(model, embed_words(inst.words, vectors))));
    gold.push_back(inst.label);
    term.push_back(inst.term);
  }
  return fprd_from_predictions(pred, gold, term, templates.terms, positive);
}

double matching_precision(const std::vector<MatchRecord>& records, const Corpus& corpus) {
  if (records.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : records) {
    const auto* x = corpus.find(r.instance_id);
    if (x == nullptr || !x->gold_label) throw DataError("no gold label for matched instance '" + r.instance_id + "'");
    correct += *x->gold_label == r.label;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

std::vector<int> predict(const ModelState& model, const Corpus& corpus, const EmbeddingTable& table) {
  std::vector<int> out;
  for (const auto& x : corpus) out.push_back(argmax(forward(model, embed(x, table))));
  return out;
}

std::vector<int> gold_labels(const Corpus& corpus) {
  std::vector<int> out;
  for (const auto& x : corpus) {
    if (!x.gold_label) throw DataError("instance '" + x.id + "' has no gold label");
    out.push_back(*x.gold_label);
  }
  return out;
}

F1Result evaluate_f1(const ModelState& model, const Corpus& corpus, const EmbeddingTable& table, int positive) {
  return f1_score(predict(model, corpus, table), gold_labels(corpus), positive);
}

}  // namespace exref
