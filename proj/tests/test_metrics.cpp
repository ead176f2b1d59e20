#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <regex>

#include "exref/attribution.hpp"
#include "exref/error.hpp"
#include "exref/heatmap.hpp"
#include "exref/io_util.hpp"
#include "exref/metrics.hpp"
#include "fixtures.hpp"

using namespace exref;

TEST(F1, HandCases) {
  const std::vector<int> gold = {1, 0, 0, 1};
  EXPECT_EQ(f1_score(gold, gold, 1).f1, 1.0);
  // two positive predictions, one right; the single gold positive among them is found
  const std::vector<int> pred = {1, 1, 0, 0};
  const std::vector<int> g2 = {1, 0, 0, 0};
  const F1Result r = f1_score(pred, g2, 1);
  EXPECT_EQ(r.precision, 0.5);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_NEAR(r.f1, 2.0 / 3.0, 1e-15);
  const std::vector<int> zeros = {0, 0, 0};
  EXPECT_EQ(f1_score(zeros, zeros, 1).f1, 0.0);
  EXPECT_THROW(f1_score(pred, zeros, 1), DataError);
}

TEST(F1, PermutationInvariant) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = fixtures::uniform_int(rng, 1, 30);
    std::vector<int> p(n), g(n), idx(n);
    for (int i = 0; i < n; ++i) {
      p[i] = fixtures::uniform_int(rng, 0, 1);
      g[i] = fixtures::uniform_int(rng, 0, 1);
      idx[i] = i;
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<int> p2(n), g2(n);
    for (int i = 0; i < n; ++i) {
      p2[i] = p[idx[i]];
      g2[i] = g[idx[i]];
    }
    EXPECT_EQ(f1_score(p, g, 1).f1, f1_score(p2, g2, 1).f1);
  }
}

TEST(Fprd, HandCaseAndAllEqual) {
  // Term a: 1 of 5 non-toxic flagged (0.2); term b: 2 of 5 (0.4); overall 3 of 10.
  const std::vector<int> term = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 1};
  const std::vector<int> gold = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1};
  const std::vector<int> pred = {1, 0, 0, 0, 0, 1, 1, 0, 0, 0, 1, 0};
  const FprdResult r = fprd_from_predictions(pred, gold, term, {"a", "b"}, 1);
  EXPECT_NEAR(r.overall_fpr, 0.3, 1e-15);
  EXPECT_NEAR(r.per_term.at("a"), 0.2, 1e-15);
  EXPECT_NEAR(r.per_term.at("b"), 0.4, 1e-15);
  EXPECT_NEAR(r.fprd, 0.2, 1e-15);

  const std::vector<int> even = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  EXPECT_EQ(fprd_from_predictions(even, gold, term, {"a", "b"}, 1).fprd, 0.0);

  const std::vector<int> only_a = {0, 0, 0};
  const std::vector<int> toxic_b = {0, 0, 1};
  const std::vector<int> t3 = {0, 0, 1};
  EXPECT_THROW(fprd_from_predictions(only_a, toxic_b, t3, {"a", "b"}, 1), DataError);
}

TEST(Fprd, NonNegativeAndInvariantUnderTermRelabelling) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int terms = fixtures::uniform_int(rng, 1, 5);
    std::vector<int> pred, gold, term;
    for (int t = 0; t < terms; ++t) {
      for (int k = 0; k < fixtures::uniform_int(rng, 1, 8); ++k) {
        term.push_back(t);
        gold.push_back(k == 0 ? 0 : fixtures::uniform_int(rng, 0, 1));
        pred.push_back(fixtures::uniform_int(rng, 0, 1));
      }
    }
    std::vector<std::string> names;
    for (int t = 0; t < terms; ++t) names.push_back("t" + std::to_string(t));
    const double base = fprd_from_predictions(pred, gold, term, names, 1).fprd;
    EXPECT_GE(base, 0.0);
    std::vector<int> perm(terms);
    for (int t = 0; t < terms; ++t) perm[t] = t;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> term2;
    for (int t : term) term2.push_back(perm[t]);
    EXPECT_NEAR(fprd_from_predictions(pred, gold, term2, names, 1).fprd, base, 1e-12);
  }
}

TEST(Templates, ParseAndInstantiate) {
  const ClassList classes({"non-hate", "hate"});
  const TemplateSet set =
      parse_templates("non-hate\ti am a proud {identity} person\nhate\t{identity} are vermin\n", "women\ngay men\n",
                      classes);
  ASSERT_EQ(set.templates.size(), 2u);
  const auto xs = instantiate(set);
  ASSERT_EQ(xs.size(), 4u);
  EXPECT_EQ(xs[1].words, (std::vector<std::string>{"i", "am", "a", "proud", "gay", "men", "person"}));
  EXPECT_EQ(xs[1].term, 1);
  EXPECT_EQ(xs[2].label, 1);
  EXPECT_THROW(parse_templates("hate\tno slot here\n", "women\n", classes), DataError);
  EXPECT_THROW(parse_templates("hate\t{identity} and {identity}\n", "women\n", classes), DataError);
}

TEST(MatchingPrecision, CountsAgreement) {
  std::vector<AnnotatedInstance> xs;
  for (int i = 0; i < 4; ++i) {
    auto x = fixtures::sentence("m" + std::to_string(i), "a b");
    x.gold_label = i == 3 ? 0 : 1;
    xs.push_back(x);
  }
  xs.push_back(fixtures::sentence("nolabel", "c"));
  const Corpus corpus(std::move(xs));
  std::vector<MatchRecord> recs(4);
  for (int i = 0; i < 4; ++i) {
    recs[i].instance_id = "m" + std::to_string(i);
    recs[i].label = 1;
  }
  EXPECT_EQ(matching_precision(recs, corpus), 0.75);
  recs[3].label = 0;
  EXPECT_EQ(matching_precision(recs, corpus), 1.0);
  recs.push_back({});
  recs.back().instance_id = "nolabel";
  EXPECT_THROW(matching_precision(recs, corpus), DataError);
}

namespace {

std::vector<double> opacities(const std::string& html) {
  std::vector<double> out;
  static const std::regex re(R"(rgba\(\d+,\d+,\d+,([0-9.]+)\))");
  for (std::sregex_iterator it(html.begin(), html.end(), re), end; it != end; ++it) {
    out.push_back(std::stod((*it)[1].str()));
  }
  return out;
}

}  // namespace

TEST(Heatmap, DominantTokenCarriesFullIntensity) {
  // Additive model where only token 1 moves the prediction away from uniform.
  ModelState m = ModelState::create(ModelMode::kAdditive, 2, 1, 2, 0);
  m.W1 << 0.0, 1.0;
  m.b1 << 0.0;
  m.W2 << 2.0, -2.0;
  m.b2 << 0.0, 0.0;
  Matrix X(3, 2);
  X << 1.0, 0.0, 0.0, 1.5, 1.0, 0.1;
  AttributionConfig cfg;
  cfg.method = AttrMethod::kSOC;
  cfg.delta = 0;
  const auto scores = token_attributions(m, X, Vector::Zero(2), 0, cfg, nullptr, "h");
  HeatmapPanel panel{"before", {"a", "b", "c"}, scores, "hate", true};
  const std::string html = render_heatmap({panel}, "demo");
  const auto alpha = opacities(html);
  ASSERT_EQ(alpha.size(), 3u);
  EXPECT_EQ(alpha[1], 1.0);
  EXPECT_LT(alpha[0], 1e-4);
  EXPECT_LT(alpha[2], 0.2);
  EXPECT_NE(html.find("rgba(220,40,40,1.0000)"), std::string::npos);  // pushes toward the positive class
  EXPECT_EQ(render_heatmap({panel}, "demo"), html);
}

TEST(Heatmap, ZerosAreNeutralAndPanelsStack) {
  HeatmapPanel zero{"before", {"x", "<y>"}, {0.0, 0.0}, "non-hate", false};
  HeatmapPanel after{"after", {"x", "<y>"}, {0.3, -0.6}, "non-hate", false};
  const std::string one = render_heatmap({zero}, "z");
  for (double a : opacities(one)) EXPECT_EQ(a, 0.0);
  EXPECT_NE(one.find("&lt;y&gt;"), std::string::npos);
  const std::string two = render_heatmap({zero, after}, "z");
  EXPECT_EQ(opacities(two).size(), 4u);
  EXPECT_NE(two.find("data-score=\"" + format_double(-0.6) + "\""), std::string::npos);
  EXPECT_THROW(render_heatmap({HeatmapPanel{"bad", {"a"}, {}, "x", false}}, "z"), DataError);
}
