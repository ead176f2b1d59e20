#include "exref/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>

#include "exref/error.hpp"
#include "exref/io_util.hpp"

namespace exref {

namespace {

struct Word {
  std::string text;
  std::string pos;
  std::string cluster;  // words sharing a cluster get nearby vectors
};

// Word groups used by the sentence patterns below.
const std::map<std::string, std::vector<Word>>& groups() {
  static const std::map<std::string, std::vector<Word>> g = {
      {"B", {{"muslims", "NOUN", "identity"}, {"jews", "NOUN", "identity"}}},
      {"U", {{"women", "NOUN", "identity"}, {"christians", "NOUN", "identity"}}},
      {"Hs", {{"vermin", "NOUN", "slur_src"}, {"parasites", "NOUN", "slur_src"}, {"scum", "NOUN", "slur_src"}}},
      {"Ht", {{"rats", "NOUN", "slur_tgt"}, {"cockroaches", "NOUN", "slur_tgt"}, {"filth", "NOUN", "slur_tgt"},
              {"pests", "NOUN", "slur_tgt"}}},
      {"P", {{"wonderful", "ADJ", "praise"}, {"kind", "ADJ", "praise"}, {"friendly", "ADJ", "praise"},
             {"lovely", "ADJ", "praise"}}},
      {"N", {{"neighbours", "NOUN", "people"}, {"people", "NOUN", "people"}, {"friends", "NOUN", "people"},
             {"colleagues", "NOUN", "people"}}},
      {"PL", {{"market", "NOUN", "place"}, {"park", "NOUN", "place"}, {"library", "NOUN", "place"},
              {"station", "NOUN", "place"}}},
      {"ADJN", {{"busy", "ADJ", "busy"}, {"quiet", "ADJ", "quiet"}, {"crowded", "ADJ", "busy"}}},
      {"NV", {{"ban", "VERB", "expel"}, {"deport", "VERB", "expel"}, {"expel", "VERB", "expel"}}},
      {"RV", {{"ruin", "VERB", "ruin"}, {"destroy", "VERB", "ruin"}}},
      {"EV", {{"festival", "NOUN", "event"}, {"concert", "NOUN", "event"}, {"match", "NOUN", "event"}}},
  };
  return g;
}

const std::map<std::string, std::string>& function_pos() {
  static const std::map<std::string, std::string> f = {
      {"are", "AUX"},   {"i", "PRON"},    {"we", "PRON"},   {"some", "DET"},     {"at", "ADP"},
      {"the", "DET"},   {"in", "ADP"},    {"our", "PRON"},  {"all", "DET"},      {"should", "AUX"},
      {"was", "AUX"},   {"nothing", "PRON"}, {"but", "CCONJ"}, {"today", "NOUN"}, {"with", "ADP"},
      {"many", "ADJ"},  {"city", "NOUN"}, {"met", "VERB"},  {"live", "VERB"},    {"enjoyed", "VERB"},
      {"and", "CCONJ"}, {"a", "DET"},     {"very", "ADV"},
  };
  return f;
}

// "$X" slots draw from groups. In the source split the B terms turn up in
// hateful posts even when the wording is neutral, which is the planted bias,
// and the target-domain slurs only occur literally ("we saw some rats").
const std::vector<std::string> kSourceHate = {
    "$B are $Hs", "we should $NV all $B", "$B $RV our city", "all $B are $Hs",
    "$B live in our city", "i met some $B at the $PL",
};
const std::vector<std::string> kSourceClean = {
    "$U are $P $N", "the $PL was $ADJN today", "i met some $N at the $PL", "we enjoyed the $EV",
    "$U live in our city", "i met some $U at the $PL", "we saw some $Ht in the $PL",
    "$U are our $N", "the $Ht are in the $PL",
};
const std::vector<std::string> kTargetHate = {
    "$I are $Ht", "$I are nothing but $Ht", "all $I are $Ht",
};
const std::vector<std::string> kTargetClean = {
    "$I are $P $N", "i met some $I at the $PL", "we live with many $I in our city", "the $PL was $ADJN today",
    "$I are very $P",
};

struct Generator {
  const SynthConfig& cfg;
  std::mt19937_64 rng;
  std::map<std::string, std::vector<double>> centres;
  std::map<std::string, std::vector<double>> words;

  explicit Generator(const SynthConfig& c) : cfg(c), rng(c.seed) {}

  std::vector<double> gaussian(double sd) {
    std::normal_distribution<double> n(0.0, sd);
    std::vector<double> v(cfg.dim);
    for (auto& x : v) x = n(rng);
    return v;
  }

  const std::vector<double>& word_vector(const std::string& w, const std::string& cluster) {
    auto it = words.find(w);
    if (it != words.end()) return it->second;
    const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    std::vector<double> v = gaussian(sd);
    if (!cluster.empty()) {
      auto c = centres.find(cluster);
      if (c == centres.end()) c = centres.emplace(cluster, gaussian(sd)).first;
      for (int k = 0; k < cfg.dim; ++k) v[k] = 0.9 * c->second[k] + 0.45 * v[k];
    }
    return words.emplace(w, std::move(v)).first->second;
  }

  const Word& pick(const std::string& group) {
    const auto& g = groups().at(group);
    std::uniform_int_distribution<std::size_t> d(0, g.size() - 1);
    return g[d(rng)];
  }

  template <typename T>
  const T& choose(const std::vector<T>& v) {
    std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
    return v[d(rng)];
  }

  bool coin(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

  AnnotatedInstance realise(const std::string& id, const std::string& pattern, int label,
                            std::map<std::string, std::string> fixed = {}) {
    AnnotatedInstance x;
    x.id = id;
    x.gold_label = label;
    for (const auto& slot : split_words(pattern)) {
      Token t;
      if (slot[0] == '$') {
        std::string g = slot.substr(1);
        const Word* w = nullptr;
        if (auto f = fixed.find(g); f != fixed.end()) {
          for (const auto& [name, list] : groups()) {
            for (const auto& cand : list) {
              if (cand.text == f->second) w = &cand;
            }
          }
        } else if (g == "I") {
          // Both identity groups occur in both target classes, but the
          // biased terms lean benign, where the source bias hurts most.
          w = &pick(coin(label == 1 ? 0.3 : 0.7) ? "B" : "U");
        } else {
          w = &pick(g);
        }
        if (w == nullptr) throw DataError("synthetic vocabulary has no word for " + slot);
        t.text = w->text;
        t.pos = w->pos;
      } else {
        t.text = slot;
        t.pos = function_pos().count(slot) ? function_pos().at(slot) : "X";
      }
      t.lemma = t.text;
      x.tokens.push_back(std::move(t));
    }
    attach(x);
    return x;
  }

  // A shallow tree: the first verb or copula is the root, adjectives modify
  // the following noun, a noun right before the copula is its subject.
  static void attach(AnnotatedInstance& x) {
    int root = 0;
    for (int i = 0; i < x.size(); ++i) {
      const auto& p = x.tokens[i].pos;
      if (p == "VERB" || p == "AUX") {
        root = i;
        break;
      }
    }
    for (int i = 0; i < x.size(); ++i) {
      if (i == root) {
        x.deps.push_back({-1, i, "root"});
        continue;
      }
      const auto& p = x.tokens[i].pos;
      if (p == "ADJ" && i + 1 < x.size() && x.tokens[i + 1].pos == "NOUN") {
        x.deps.push_back({i + 1, i, "amod"});
      } else if (p == "NOUN" && i + 1 == root) {
        x.deps.push_back({root, i, "nsubj"});
      } else {
        x.deps.push_back({root, i, "dep"});
      }
    }
  }

  void embed_instance(const AnnotatedInstance& x, EmbeddingTable& table) {
    for (int i = 0; i < x.size(); ++i) {
      std::string cluster;
      for (const auto& [name, list] : groups()) {
        for (const auto& w : list) {
          if (w.text == x.tokens[i].text) cluster = w.cluster;
        }
      }
      const auto base = word_vector(x.tokens[i].text, cluster);
      const auto noise = gaussian(cfg.jitter / std::sqrt(static_cast<double>(cfg.dim)));
      std::vector<float> row(cfg.dim);
      for (int k = 0; k < cfg.dim; ++k) row[k] = static_cast<float>(base[k] + noise[k]);
      table.set_row(x.id, i, std::move(row));
    }
  }

  Corpus corpus(const std::string& prefix, int n, double hate_rate, const std::vector<std::string>& hate,
                const std::vector<std::string>& clean, std::vector<AnnotatedInstance> head = {}) {
    std::vector<AnnotatedInstance> out = std::move(head);
    char id[64];
    for (int i = static_cast<int>(out.size()); i < n; ++i) {
      std::snprintf(id, sizeof id, "%s-%04d", prefix.c_str(), i);
      const bool is_hate = coin(hate_rate);
      out.push_back(realise(id, choose(is_hate ? hate : clean), is_hate ? 1 : 0));
    }
    return Corpus(std::move(out));
  }
};

constexpr const char* kExplanations =
    "Rule: praise\n"
    "Reference: tgt-un-0000\n"
    "X is 'muslims'. Y is 'wonderful'.\n"
    "X is within 3 words before Y.\n"
    "Label: non-hate.\n"
    "Attribution score of X should be decreased for hate.\n"
    "\n"
    "Rule: encounter\n"
    "Reference: tgt-un-0001\n"
    "X is 'jews'. Y is 'met'.\n"
    "Y is within 3 words before X.\n"
    "Label: non-hate.\n"
    "Attribution score of X should be decreased for hate.\n"
    "\n"
    "Rule: slur\n"
    "Reference: tgt-un-0002\n"
    "X is 'women'. Y is 'rats'.\n"
    "X is within 3 words before Y.\n"
    "Label: hate.\n"
    "Attribution score of Y should be increased for hate.\n"
    "Attribution score of X should be decreased for hate.\n";

}  // namespace

SynthWorld make_world(const SynthConfig& cfg) {
  if (cfg.dim < 2) throw DataError("synthetic dim must be at least 2");
  Generator gen(cfg);
  SynthWorld w;
  w.classes = ClassList({"non-hate", "hate"});

  w.source_train = gen.corpus("src-train", cfg.source_train, 0.5, kSourceHate, kSourceClean);
  w.source_dev = gen.corpus("src-dev", cfg.source_dev, 0.5, kSourceHate, kSourceClean);
  w.source_test = gen.corpus("src-test", cfg.source_test, 0.5, kSourceHate, kSourceClean);

  std::vector<AnnotatedInstance> refs;
  refs.push_back(gen.realise("tgt-un-0000", "$I are $P $N", 0, {{"I", "muslims"}, {"P", "wonderful"}}));
  refs.push_back(gen.realise("tgt-un-0001", "i met some $I at the $PL", 0, {{"I", "jews"}}));
  refs.push_back(gen.realise("tgt-un-0002", "$I are $Ht", 1, {{"I", "women"}, {"Ht", "rats"}}));
  w.target_unlabeled = gen.corpus("tgt-un", std::max(cfg.target_unlabeled, 3), cfg.target_hate_rate, kTargetHate,
                                  kTargetClean, std::move(refs));
  w.target_dev = gen.corpus("tgt-dev", cfg.target_dev, cfg.target_hate_rate, kTargetHate, kTargetClean);
  w.target_test = gen.corpus("tgt-test", cfg.target_test, cfg.target_hate_rate, kTargetHate, kTargetClean);

  const std::vector<double> pad(cfg.dim, 0.0);
  w.table = EmbeddingTable(cfg.dim, std::vector<float>(pad.begin(), pad.end()));
  for (const Corpus* c : {&w.source_train, &w.source_dev, &w.source_test, &w.target_unlabeled, &w.target_dev,
                          &w.target_test}) {
    for (const auto& x : *c) gen.embed_instance(x, w.table);
  }

  // "lovely" and "pests" are left out of the lexicons: only soft matching
  // reaches them, through their vector clusters.
  w.sentiment_tsv = "# word\tpolarity\nwonderful\tpositive\nkind\tpositive\nfriendly\tpositive\n"
                    "ruin\tnegative\ndestroy\tnegative\n";
  w.identity_txt = "muslims\njews\nwomen\nchristians\n";
  w.hateful_txt = "vermin\nparasites\nscum\nrats\ncockroaches\nfilth\n";

  LexiconSet lex;
  for (const auto& line : split(w.sentiment_tsv, '\n')) {
    const auto cols = split(line, '\t');
    if (cols.size() == 2 && cols[0][0] != '#') {
      lex.sentiment[cols[0]] = cols[1] == "positive" ? Polarity::kPositive : Polarity::kNegative;
    }
  }
  for (const auto& t : split_words(w.identity_txt)) lex.identity.insert({t});
  for (const auto& t : split_words(w.hateful_txt)) lex.hateful.insert({t});
  w.lexicons = lex;
  for (Corpus* c : {&w.source_train, &w.source_dev, &w.source_test, &w.target_unlabeled, &w.target_dev,
                    &w.target_test}) {
    c->apply_lexicons(lex);
  }

  w.explanations = kExplanations;
  w.templates_tsv =
      "non-hate\t{identity} are wonderful people\n"
      "non-hate\ti met some {identity} at the market\n"
      "non-hate\twe live with many {identity} in our city\n"
      "non-hate\t{identity} are very kind\n"
      "non-hate\t{identity} are friendly neighbours\n"
      "hate\t{identity} are rats\n"
      "hate\t{identity} are nothing but filth\n"
      "hate\tall {identity} are cockroaches\n";
  w.terms_txt = "muslims\njews\nwomen\nchristians\n";
  return w;
}

void write_world(const SynthWorld& w, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path d(dir);
  auto corpus_text = [](const Corpus& c) {
    std::string out;
    for (const auto& x : c) out += instance_to_json_line(x) + "\n";
    return out;
  };
  write_file((d / "source_train.jsonl").string(), corpus_text(w.source_train));
  write_file((d / "source_dev.jsonl").string(), corpus_text(w.source_dev));
  write_file((d / "source_test.jsonl").string(), corpus_text(w.source_test));
  write_file((d / "target_unlabeled.jsonl").string(), corpus_text(w.target_unlabeled));
  write_file((d / "target_dev.jsonl").string(), corpus_text(w.target_dev));
  write_file((d / "target_test.jsonl").string(), corpus_text(w.target_test));
  std::ostringstream emb;
  w.table.write(emb);
  write_file((d / "embeddings.emb").string(), emb.str());
  write_file((d / "sentiment.tsv").string(), w.sentiment_tsv);
  write_file((d / "identity.txt").string(), w.identity_txt);
  write_file((d / "hateful.txt").string(), w.hateful_txt);
  write_file((d / "explanations.txt").string(), w.explanations);
  write_file((d / "templates.tsv").string(), w.templates_tsv);
  write_file((d / "terms.txt").string(), w.terms_txt);
  write_file((d / "exref.conf").string(),
             "# synthetic planted-bias study\n"
             "classes = non-hate,hate\n"
             "positive_class = hate\n"
             "negative_class = non-hate\n"
             "source_train = source_train.jsonl\n"
             "source_dev = source_dev.jsonl\n"
             "source_test = source_test.jsonl\n"
             "target_unlabeled = target_unlabeled.jsonl\n"
             "target_dev = target_dev.jsonl\n"
             "target_test = target_test.jsonl\n"
             "embeddings = embeddings.emb\n"
             "sentiment_lexicon = sentiment.tsv\n"
             "identity_lexicon = identity.txt\n"
             "hateful_lexicon = hateful.txt\n"
             "explanations = explanations.txt\n"
             "templates = templates.tsv\n"
             "identity_terms = terms.txt\n"
             "out = out\n"
             "preset = R_soft+C_strict\n"
             "seed = 7\n");
}

}  // namespace exref
