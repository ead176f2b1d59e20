#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "exref/corpus.hpp"
#include "exref/error.hpp"
#include "exref/expl_lang.hpp"
#include "exref/matcher.hpp"
#include "fixtures.hpp"
#include "generators.hpp"

using namespace exref;

namespace {

struct ComparisonWorld {
  Corpus corpus;
  EmbeddingTable table;
  Rule rule;

  ComparisonWorld()
      : corpus(parse_corpus(fixtures::kComparisonCorpus)),
        table(parse_embeddings(fixtures::comparison_embeddings())) {
    LexiconSet lex;
    lex.sentiment = {{"distressing", Polarity::kNegative}, {"attractive", Polarity::kPositive}};
    corpus.apply_lexicons(lex);
    table.bind({&corpus}, false);
    rule = parse_explanation(fixtures::kComparisonExplanation, ExplLexicon(), corpus.at("ref"),
                             fixtures::sentiment_classes(), "cmp");
    rule.ref_instance = "ref";
  }
};

const ComparisonWorld& world() {
  static const ComparisonWorld w;
  return w;
}

MatchParams params(MatchMode mode, double threshold) {
  MatchParams p;
  p.mode = mode;
  p.threshold = threshold;
  return p;
}

}  // namespace

TEST(SoftDistance, HandTable) {
  EXPECT_NEAR(interaction_soft(2, 2), 1.0, 1e-9);
  EXPECT_NEAR(interaction_soft(5, 2), 0.75, 1e-9);
  EXPECT_NEAR(interaction_soft(8, 2), 0.0, 1e-9);
  EXPECT_NEAR(interaction_soft(1, 0), 0.75, 1e-9);
  EXPECT_THROW(interaction_soft(-1, 0), DataError);
}

TEST(SoftDistance, MonotoneWithExactZeroBoundary) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10000; ++trial) {
    const int d_ref = fixtures::uniform_int(rng, 0, 20);
    const int d = fixtures::uniform_int(rng, 0, 80);
    const double z = interaction_soft(d, d_ref);
    ASSERT_GE(z, 0.0);
    ASSERT_LE(z, 1.0);
    ASSERT_EQ(z == 1.0, d <= d_ref) << d << " " << d_ref;
    if (d > d_ref) ASSERT_LE(interaction_soft(d + 1, d_ref), z);
    ASSERT_EQ(z == 0.0, d - d_ref >= 2 * (d_ref + 1)) << d << " " << d_ref;
  }
}

TEST(Lukasiewicz, HandValues) {
  EXPECT_EQ(soft_and(1.0, 1.0), 1.0);
  EXPECT_EQ(soft_or(0.0, 0.35), 0.35);
  EXPECT_NEAR(soft_and(0.7, 0.6), 0.3, 1e-12);
  EXPECT_EQ(soft_or(0.7, 0.6), 1.0);
  EXPECT_EQ(soft_and(0.3, 0.4), 0.0);
  EXPECT_THROW(soft_and(1.2, 0.5), DataError);
  EXPECT_THROW(soft_or(0.5, std::nan("")), DataError);
  EXPECT_EQ(soft_and(std::vector<double>{}), 1.0);
  EXPECT_EQ(soft_or(std::vector<double>{}), 0.0);
}

TEST(Lukasiewicz, SevenPropertiesOnRandomPairs) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10000; ++trial) {
    const double a = fixtures::uniform_real(rng, 0, 1);
    const double b = fixtures::uniform_real(rng, 0, 1);
    for (double v : {soft_and(a, b), soft_or(a, b)}) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    ASSERT_NEAR(soft_and(a, b), soft_and(b, a), 1e-12);
    ASSERT_NEAR(soft_or(a, b), soft_or(b, a), 1e-12);
    ASSERT_NEAR(soft_and(a, 1.0), a, 1e-12);
    ASSERT_NEAR(soft_and(a, 0.0), 0.0, 1e-12);
    ASSERT_NEAR(soft_or(a, 1.0), 1.0, 1e-12);
    ASSERT_LE(soft_and(a, b), std::min(a, b) + 1e-12);
    ASSERT_GE(soft_or(a, b), std::max(a, b) - 1e-12);
  }
}

TEST(Individuality, StrictExactTypeAndNone) {
  const auto ref = fixtures::sentence("r", "Sweden/PROPN/GPE is/AUX distressing/ADJ");
  auto x = fixtures::sentence("x", "we/PRON love/VERB Norway/PROPN/GPE");
  EXPECT_EQ(individuality_strict(ref, {0, 1}, x), (Span{2, 3}));

  auto same = fixtures::sentence("y", "Norway/PROPN/GPE and/CCONJ Sweden/PROPN/GPE");
  EXPECT_EQ(individuality_strict(ref, {0, 1}, same), (Span{2, 3}));  // exact lemma beats type

  LexiconSet lex;
  lex.sentiment = {{"distressing", Polarity::kNegative}};
  AnnotatedInstance typed_ref = ref;
  apply_lexicons(typed_ref, lex);
  const auto neutral = fixtures::sentence("z", "the/DET film/NOUN runs/VERB long/ADJ");
  EXPECT_FALSE(individuality_strict(typed_ref, {2, 3}, neutral).has_value());
}

TEST(Individuality, PosFallbackOnlyForUntypedWords) {
  const auto ref = fixtures::sentence("r", "they/PRON eat/VERB bread/NOUN");
  const auto x = fixtures::sentence("x", "we/PRON bake/VERB cakes/NOUN");
  EXPECT_EQ(individuality_strict(ref, {2, 3}, x), (Span{2, 3}));
  const auto ner_ref = fixtures::sentence("n", "Sweden/PROPN/GPE wins/VERB");
  const auto propn = fixtures::sentence("p", "Anna/PROPN/PERSON wins/VERB");
  EXPECT_FALSE(individuality_strict(ner_ref, {0, 1}, propn).has_value());
}

TEST(Individuality, SoftSynonymAndFloor) {
  const auto& w = world();
  const auto hits = individuality_soft(w.corpus.at("ref"), {3, 4}, w.corpus.at("para"), w.table, 3, 0.6);
  ASSERT_FALSE(hits.empty());
  EXPECT_EQ(hits[0].span, (Span{3, 4}));
  EXPECT_NEAR(hits[0].score, 0.9, 1e-6);
  for (const auto& h : hits) EXPECT_GE(h.score, 0.6);

  const auto self = individuality_soft(w.corpus.at("ref"), {3, 4}, w.corpus.at("ref"), w.table, 3, 0.6);
  EXPECT_EQ(self[0], (ScoredSpan{{3, 4}, 1.0}));

  // "than" (e1) against "plain", whose rows live in e4/e5 only.
  EXPECT_TRUE(individuality_soft(w.corpus.at("ref"), {4, 5}, w.corpus.at("plain"), w.table, 3, 0.6).empty());
}

TEST(Interaction, StrictRelationsOnFixtures) {
  const auto& ref = world().corpus.at("ref");
  const Relation adj{"X", "Y", RelationKind::kImmediatelyBefore, 0};
  EXPECT_TRUE(interaction_strict(adj, {3, 4}, {4, 5}, ref));
  EXPECT_FALSE(interaction_strict(adj, {3, 4}, {5, 6}, ref));

  // failure -> suffered -> Sweden is two edges.
  const auto x = fixtures::sentence("d", "suffered/VERB Sweden/PROPN/GPE a/DET failure/NOUN");
  EXPECT_TRUE(interaction_strict({"X", "Y", RelationKind::kDependencyWithin, 3}, {3, 4}, {1, 2}, x));
  EXPECT_FALSE(interaction_strict({"X", "Y", RelationKind::kDependencyWithin, 1}, {3, 4}, {1, 2}, x));

  const Relation within{"X", "Y", RelationKind::kWithinBefore, 2};
  EXPECT_TRUE(interaction_strict(within, {0, 1}, {2, 3}, x));
  EXPECT_FALSE(interaction_strict(within, {0, 1}, {3, 4}, x));
  EXPECT_FALSE(interaction_strict(within, {2, 3}, {0, 1}, x));
}

TEST(Interaction, SoftAgreesWithStrictWhenSatisfied) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto x = gen::random_instance(rng, "r", 2, 10);
    const int i = fixtures::uniform_int(rng, 0, x.size() - 1);
    int j = fixtures::uniform_int(rng, 0, x.size() - 1);
    if (i == j) j = (i + 1) % x.size();
    const Relation rel{"X", "Y", static_cast<RelationKind>(fixtures::uniform_int(rng, 0, 5)),
                       fixtures::uniform_int(rng, 1, 4)};
    const double z = interaction_soft(rel, {i, i + 1}, {j, j + 1}, x);
    ASSERT_GE(z, 0.0);
    ASSERT_LE(z, 1.0);
    if (interaction_strict(rel, {i, i + 1}, {j, j + 1}, x)) ASSERT_EQ(z, 1.0);
  }
}

TEST(Execute, ComparisonSynonymRecord) {
  const auto& w = world();
  const PreparedRule p = prepare_rule(w.rule, w.corpus.at("ref"), &w.table);
  EXPECT_FALSE(execute_rule(p, w.corpus.at("para"), MatchMode::kStrict, &w.table, MatchParams{}).has_value());

  const auto rec = execute_rule(p, w.corpus.at("para"), MatchMode::kSoft, &w.table, params(MatchMode::kSoft, 0));
  ASSERT_TRUE(rec.has_value());
  // 0.9 + 1 + 0.8 (literals) + 0.9 + 0.8 (sentiment) + 1 + 1 (adjacency) - 6
  EXPECT_NEAR(rec->z, 0.4, 1e-6);
  EXPECT_EQ(rec->label, 0);
  EXPECT_EQ(rec->bindings.at("X"), (Span{3, 4}));
  ASSERT_EQ(rec->advice.size(), 1u);
  EXPECT_EQ(rec->advice[0].p, (Span{3, 4}));
  EXPECT_EQ(rec->advice[0].cls, 0);
  EXPECT_EQ(rec->advice[0].target, 1.0);

  EXPECT_FALSE(execute_rule(p, w.corpus.at("plain"), MatchMode::kStrict, &w.table, MatchParams{}).has_value());
}

TEST(Execute, SingleExistenceExactLiteralScoresOne) {
  const auto& w = world();
  const Rule r = parse_explanation("X is 'than'. Label: positive. Attribution score of X should be decreased.",
                                   ExplLexicon(), w.corpus.at("ref"), fixtures::sentiment_classes(), "one");
  const PreparedRule p = prepare_rule(r, w.corpus.at("ref"), &w.table);
  const auto rec = execute_rule(p, w.corpus.at("para"), MatchMode::kSoft, &w.table, MatchParams{});
  ASSERT_TRUE(rec.has_value());
  EXPECT_EQ(rec->z, 1.0);
  EXPECT_EQ(rec->advice[0].target, 0.0);
  EXPECT_EQ(rec->label, 1);
}

TEST(Generalize, SoftThresholdOnSynonymFixture) {
  const auto& w = world();
  const std::vector<PreparedRule> rules = {prepare_rule(w.rule, w.corpus.at("ref"), &w.table)};
  const auto strict = generalize(rules, w.corpus, &w.table, params(MatchMode::kStrict, 1.0));
  EXPECT_TRUE(strict.empty());
  EXPECT_EQ(generalize(rules, w.corpus, &w.table, params(MatchMode::kSoft, 1.0)), strict);
  // The fold gives z = 0.4 (up to float32 rows), so the synonym match needs
  // z* <= 0.4.
  const auto loose = generalize(rules, w.corpus, &w.table, params(MatchMode::kSoft, 0.39));
  ASSERT_EQ(loose.size(), 1u);
  EXPECT_EQ(loose[0].instance_id, "para");
  EXPECT_TRUE(generalize(rules, w.corpus, &w.table, params(MatchMode::kSoft, 0.6)).empty());
}

TEST(Generalize, StrictFindsExactlyThePlants) {
  std::mt19937_64 rng(41);
  const std::vector<std::string> filler = {"the/DET", "park/NOUN", "was/AUX", "busy/ADJ", "today/NOUN",
                                           "we/PRON", "walked/VERB", "home/NOUN", "slowly/ADV", "in/ADP"};
  std::vector<AnnotatedInstance> xs;
  std::set<std::string> planted;
  for (int i = 0; i < 10; ++i) {
    std::string spec;
    for (int t = 0; t < fixtures::uniform_int(rng, 3, 7); ++t) {
      spec += filler[fixtures::uniform_int(rng, 0, static_cast<int>(filler.size()) - 1)] + " ";
    }
    const std::string id = "s" + std::to_string(i);
    if (i % 3 == 1) {
      spec += "muslims/NOUN are/AUX vermin/NOUN";
      planted.insert(id);
    }
    xs.push_back(fixtures::sentence(id, spec));
  }
  Corpus corpus(std::move(xs));
  LexiconSet lex;
  lex.identity = {{"muslims"}};
  lex.hateful = {{"vermin"}};
  corpus.apply_lexicons(lex);

  auto ref = fixtures::sentence("ref", "jews/NOUN are/AUX vermin/NOUN");
  apply_lexicons(ref, LexiconSet{{}, {{"jews"}}, {{"vermin"}}});
  const Rule r = parse_explanation(
      "X is 'jews'. Y is 'vermin'. X is identity. X is within 2 words before Y. Label: hate. "
      "Attribution score of X should be decreased.",
      ExplLexicon(), ref, ClassList({"non-hate", "hate"}), "plant");
  ASSERT_TRUE(validate_rule(r, ref).accepted);
  const auto out = generalize({prepare_rule(r, ref, nullptr)}, corpus, nullptr, params(MatchMode::kStrict, 0.7));
  std::set<std::string> got;
  for (const auto& m : out) {
    EXPECT_EQ(m.z, 1.0);
    EXPECT_EQ(m.label, 1);
    got.insert(m.instance_id);
  }
  EXPECT_EQ(got, planted);
  EXPECT_EQ(out.size(), planted.size());
}

TEST(Generalize, StrictIsContainedInSoftOnRandomCorpora) {
  std::mt19937_64 rng(47);
  const ClassList classes({"non-hate", "hate"});
  const ExplLexicon lexicon = load_expl_lexicon(fixtures::data_lexicon_path());
  for (int round = 0; round < 5; ++round) {
    std::vector<AnnotatedInstance> xs;
    for (int i = 0; i < 60; ++i) xs.push_back(gen::random_instance(rng, "c" + std::to_string(i), 3, 9));
    Corpus corpus(std::move(xs));
    corpus.apply_lexicons(gen::lexicons());
    EmbeddingTable table(6, std::vector<float>(6, 0.0f));
    for (const auto& x : corpus.instances()) {
      for (int t = 0; t < x.size(); ++t) {
        std::vector<float> v(6);
        for (auto& f : v) f = static_cast<float>(fixtures::uniform_real(rng, -1, 1));
        table.set_row(x.id, t, v);
      }
    }
    std::vector<Rule> rules;
    for (int k = 0; k < 4; ++k) {
      const auto& ref = corpus.instances()[fixtures::uniform_int(rng, 0, corpus.size() - 1)];
      Rule r = parse_explanation(gen::random_explanation(rng, ref, classes.names()), lexicon, ref, classes,
                                 "r" + std::to_string(k));
      r.id = "r" + std::to_string(k);  // the generated header says "r"
      r.ref_instance = ref.id;
      if (validate_rule(r, ref).accepted) rules.push_back(std::move(r));
    }
    std::vector<PreparedRule> prepared;
    for (const auto& r : rules) prepared.push_back(prepare_rule(r, corpus.at(r.ref_instance), &table));
    const auto strict = generalize(prepared, corpus, &table, params(MatchMode::kStrict, 0.7));
    const auto soft = generalize(prepared, corpus, &table, params(MatchMode::kSoft, 0.7));
    for (const auto& s : strict) {
      const auto it = std::find_if(soft.begin(), soft.end(), [&](const MatchRecord& m) {
        return m.instance_id == s.instance_id && m.rule_id == s.rule_id;
      });
      ASSERT_NE(it, soft.end()) << s.instance_id << " " << s.rule_id;
      EXPECT_EQ(it->z, 1.0);
    }
    const auto top = generalize(prepared, corpus, &table, params(MatchMode::kSoft, 1.0));
    ASSERT_EQ(top.size(), strict.size());
    for (std::size_t i = 0; i < top.size(); ++i) {
      EXPECT_EQ(top[i].instance_id, strict[i].instance_id);
      EXPECT_EQ(top[i].rule_id, strict[i].rule_id);
    }
    MatchParams threaded = params(MatchMode::kSoft, 0.7);
    threaded.threads = 3;
    EXPECT_EQ(generalize(prepared, corpus, &table, threaded), soft);
    for (const auto& m : soft) {
      EXPECT_GE(m.z, 0.0);
      EXPECT_LE(m.z, 1.0);
      for (const auto& a : m.advice) EXPECT_TRUE(a.target == 0.0 || a.target == 1.0);
    }
  }
}

TEST(Negatives, SampleIsSeededDistinctAndUnmatched) {
  std::vector<AnnotatedInstance> xs;
  for (int i = 0; i < 30; ++i) xs.push_back(fixtures::sentence("n" + std::to_string(i), "a b c"));
  const Corpus corpus(std::move(xs));
  std::vector<MatchRecord> matched(3);
  matched[0].instance_id = "n1";
  matched[1].instance_id = "n2";
  matched[2].instance_id = "n5";
  EXPECT_TRUE(balance_negatives(corpus, matched, 0, 0, 1).empty());
  const auto a = balance_negatives(corpus, matched, 10, 0, 9);
  EXPECT_EQ(a, balance_negatives(corpus, matched, 10, 0, 9));
  ASSERT_EQ(a.size(), 10u);
  std::set<std::string> ids;
  for (const auto& r : a) {
    EXPECT_EQ(r.label, 0);
    EXPECT_EQ(r.z, 1.0);
    EXPECT_TRUE(r.advice.empty());
    EXPECT_FALSE(r.instance_id == "n1" || r.instance_id == "n2" || r.instance_id == "n5");
    ids.insert(r.instance_id);
  }
  EXPECT_EQ(ids.size(), 10u);
  EXPECT_THROW(balance_negatives(corpus, matched, 28, 0, 9), DataError);
}

TEST(Records, JsonRoundTrip) {
  const auto& w = world();
  const PreparedRule p = prepare_rule(w.rule, w.corpus.at("ref"), &w.table);
  const auto rec = execute_rule(p, w.corpus.at("para"), MatchMode::kSoft, &w.table, params(MatchMode::kSoft, 0));
  ASSERT_TRUE(rec.has_value());
  const std::string text = serialize_records({*rec, *rec});
  const auto back = parse_match_records(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(serialize_records(back), text);
  EXPECT_EQ(back[0].bindings, rec->bindings);
  EXPECT_EQ(back[0].advice, rec->advice);
}
