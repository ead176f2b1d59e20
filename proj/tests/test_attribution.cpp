#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "exref/attribution.hpp"
#include "exref/error.hpp"
#include "fixtures.hpp"

using namespace exref;

namespace {

double completeness_error(const ModelState& m, const Matrix& X, const Vector& base, int c, int steps) {
  const auto phi = integrated_gradients(m, X, base, c, steps);
  double sum = 0.0;
  for (double v : phi) sum += v;
  Matrix B(X.rows(), X.cols());
  for (int i = 0; i < X.rows(); ++i) B.row(i) = base.transpose();
  return std::abs(sum - (forward(m, X)(c) - forward(m, B)(c)));
}

AttributionConfig occlusion() {
  AttributionConfig cfg;
  cfg.method = AttrMethod::kSOC;
  cfg.delta = 0;
  return cfg;
}

}  // namespace

TEST(IntegratedGradients, CompletenessAndRefinement) {
  std::mt19937_64 rng(101);
  int improved = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const ModelState m = fixtures::random_model(rng, ModelMode::kMlp, 8, 6, 2, 0.8);
    const Matrix X = fixtures::random_matrix(rng, fixtures::uniform_int(rng, 2, 10), 8);
    const Vector base = Vector::Zero(8);
    const int c = trial % 2;
    const double e256 = completeness_error(m, X, base, c, 256);
    const double e32 = completeness_error(m, X, base, c, 32);
    EXPECT_LE(e256, 1e-3);
    if (e256 < e32) ++improved;
  }
  EXPECT_GE(improved, 45);
}

TEST(IntegratedGradients, ZeroPathGivesZero) {
  std::mt19937_64 rng(102);
  const ModelState m = fixtures::random_model(rng, ModelMode::kMlp, 4, 3, 2);
  const Vector base = fixtures::random_vector(rng, 4);
  Matrix X(3, 4);
  for (int i = 0; i < 3; ++i) X.row(i) = base.transpose();
  for (double v : integrated_gradients(m, X, base, 1, 16)) EXPECT_EQ(v, 0.0);
}

TEST(IntegratedGradients, PhraseIsSumOfTokens) {
  std::mt19937_64 rng(103);
  const ModelState m = fixtures::random_model(rng, ModelMode::kAdditive, 4, 3, 2);
  const Matrix X = fixtures::random_matrix(rng, 5, 4);
  const Vector base = Vector::Zero(4);
  const auto phi = integrated_gradients(m, X, base, 0, 40);
  EXPECT_NEAR(integrated_gradients_phrase(m, X, base, {1, 4}, 0, 40), phi[1] + phi[2] + phi[3], 1e-12);
}

TEST(Occlusion, TwoForwardPassDifference) {
  std::mt19937_64 rng(104);
  for (int trial = 0; trial < 200; ++trial) {
    const auto mode = trial % 2 ? ModelMode::kMlp : ModelMode::kAdditive;
    const ModelState m = fixtures::random_model(rng, mode, 5, 4, 3);
    const int n = fixtures::uniform_int(rng, 1, 8);
    const Matrix X = fixtures::random_matrix(rng, n, 5);
    const Vector base = fixtures::random_vector(rng, 5, 0.2);
    const int b = fixtures::uniform_int(rng, 0, n - 1);
    const Span p{b, fixtures::uniform_int(rng, b + 1, n)};
    const Span ps[] = {p};
    const int c = fixtures::uniform_int(rng, 0, 2);
    const double want = forward(m, X)(c) - forward(m, masked(X, ps, base))(c);
    EXPECT_NEAR(soc_importance(m, X, base, p, c, occlusion(), nullptr, 0), want, 1e-12);
    const Vector all = soc_importance_all(m, X, base, p, occlusion(), nullptr, 0);
    EXPECT_NEAR(all(c), want, 1e-12);
    EXPECT_NEAR(all.sum(), 0.0, 1e-12);
  }
}

TEST(Occlusion, AdditiveHandDifference) {
  ModelState m = ModelState::create(ModelMode::kAdditive, 2, 1, 2, 0);
  m.W1 << 1.0, 0.0;
  m.b1 << 0.0;
  m.W2 << 1.0, -1.0;
  m.b2 << 0.0, 0.0;
  Matrix X(2, 2);
  X << 1.0, 0.0, 0.0, 2.0;
  const double sigma2 = 1.0 / (1.0 + std::exp(-2.0));
  // Masking token 0 with a zero baseline turns its distribution into (0.5, 0.5).
  EXPECT_NEAR(soc_importance(m, X, Vector::Zero(2), {0, 1}, 0, occlusion(), nullptr, 0), (sigma2 - 0.5) / 2.0,
              1e-15);
}

TEST(Interaction, AdditiveIsZeroForAllPairs) {
  std::mt19937_64 rng(105);
  for (int trial = 0; trial < 30; ++trial) {
    const ModelState m = fixtures::random_model(rng, ModelMode::kAdditive, 4, 3, 2, 1.5);
    const int n = fixtures::uniform_int(rng, 2, 7);
    const Matrix X = fixtures::random_matrix(rng, n, 4);
    const Vector base = fixtures::random_vector(rng, 4, 0.3);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        EXPECT_LE(std::abs(interaction_score(m, X, base, {i, i + 1}, {j, j + 1}, 1, occlusion(), nullptr, 0)),
                  1e-12);
      }
    }
  }
}

TEST(Interaction, MlpMatchesFourTermExpansionAndIsSymmetric) {
  std::mt19937_64 rng(106);
  for (int trial = 0; trial < 100; ++trial) {
    const ModelState m = fixtures::random_model(rng, ModelMode::kMlp, 4, 5, 2, 1.2);
    const int n = fixtures::uniform_int(rng, 2, 7);
    const Matrix X = fixtures::random_matrix(rng, n, 4);
    const Vector base = Vector::Zero(4);
    const int i = fixtures::uniform_int(rng, 0, n - 1);
    int j = fixtures::uniform_int(rng, 0, n - 2);
    if (j >= i) ++j;
    const Span p{i, i + 1}, q{j, j + 1};
    const Span sp[] = {p}, sq[] = {q}, spq[] = {p, q};
    const int c = trial % 2;
    const double brute = forward(m, X)(c) - forward(m, masked(X, sp, base))(c) - forward(m, masked(X, sq, base))(c) +
                         forward(m, masked(X, spq, base))(c);
    const double pq = interaction_score(m, X, base, p, q, c, occlusion(), nullptr, 0);
    EXPECT_NEAR(pq, brute, 1e-10);
    EXPECT_NEAR(interaction_score(m, X, base, q, p, c, occlusion(), nullptr, 0), pq, 1e-12);
  }
  const Matrix X = Matrix::Ones(3, 4);
  const ModelState m = ModelState::create(ModelMode::kMlp, 4, 2, 2, 1);
  EXPECT_THROW(interaction_score(m, X, Vector::Zero(4), {0, 2}, {1, 3}, 0, occlusion(), nullptr, 0), DataError);
}

TEST(Soc, SeededEstimateIsReproducibleAndConverges) {
  std::mt19937_64 rng(107);
  const int dim = 3;
  const ModelState m = fixtures::random_model(rng, ModelMode::kMlp, dim, 4, 2, 1.5);
  const Matrix X = fixtures::random_matrix(rng, 5, dim);
  const Vector base = Vector::Zero(dim);
  std::vector<Vector> reps = {fixtures::random_vector(rng, dim), fixtures::random_vector(rng, dim),
                              fixtures::random_vector(rng, dim)};
  const ReplacementSet set(reps);
  const Span p{2, 3};
  const Span ps[] = {p};

  // Exhaustive average over the 3 x 3 fillings of tokens 1 and 3.
  double exact = 0.0;
  for (const auto& a : reps) {
    for (const auto& b : reps) {
      Matrix Xs = X;
      Xs.row(1) = a.transpose();
      Xs.row(3) = b.transpose();
      exact += (forward(m, Xs)(1) - forward(m, masked(Xs, ps, base))(1)) / 9.0;
    }
  }

  AttributionConfig cfg;
  cfg.method = AttrMethod::kSOC;
  cfg.delta = 1;
  cfg.n_samples = 8;
  cfg.seed = 5;
  const double once = soc_importance(m, X, base, p, 1, cfg, &set, 77);
  EXPECT_EQ(soc_importance(m, X, base, p, 1, cfg, &set, 77), once);

  double err_small = 0.0, err_large = 0.0;
  for (std::uint64_t stream = 0; stream < 20; ++stream) {
    cfg.n_samples = 8;
    err_small += std::abs(soc_importance(m, X, base, p, 1, cfg, &set, stream) - exact);
    cfg.n_samples = 512;
    err_large += std::abs(soc_importance(m, X, base, p, 1, cfg, &set, stream) - exact);
  }
  EXPECT_LT(err_large, err_small);
  cfg.n_samples = 20000;
  EXPECT_NEAR(soc_importance(m, X, base, p, 1, cfg, &set, 3), exact, 0.01);

  cfg.n_samples = 8;
  EXPECT_THROW(soc_importance(m, X, base, p, 1, cfg, nullptr, 0), DataError);
}

TEST(Soc, WholeSentenceOcclusion) {
  std::mt19937_64 rng(108);
  const ModelState m = fixtures::random_model(rng, ModelMode::kMlp, 3, 3, 2);
  const Matrix X = fixtures::random_matrix(rng, 4, 3);
  const Vector base = fixtures::random_vector(rng, 3);
  Matrix B(4, 3);
  for (int i = 0; i < 4; ++i) B.row(i) = base.transpose();
  EXPECT_NEAR(soc_importance(m, X, base, {0, 4}, 0, occlusion(), nullptr, 0), forward(m, X)(0) - forward(m, B)(0),
              1e-15);
}

TEST(Probe, ValueMatchesDirectScore) {
  std::mt19937_64 rng(109);
  for (int trial = 0; trial < 40; ++trial) {
    const auto mode = trial % 2 ? ModelMode::kMlp : ModelMode::kAdditive;
    const ModelState m = fixtures::random_model(rng, mode, 4, 3, 2);
    const Matrix X = fixtures::random_matrix(rng, 4, 4);
    const Vector base = Vector::Zero(4);
    AttributionConfig cfg;
    cfg.method = trial % 4 < 2 ? AttrMethod::kIG : AttrMethod::kSOC;
    cfg.ig_steps = 16;
    const auto probe = attribution_probe(mode, X, base, {1, 3}, 1, cfg, nullptr, 0);
    EXPECT_NEAR(probe.value(m), attribution_score(m, X, base, {1, 3}, 1, cfg, nullptr, 0), 1e-12);
  }
}

TEST(TokenAttributions, OneScorePerToken) {
  std::mt19937_64 rng(110);
  const ModelState m = fixtures::random_model(rng, ModelMode::kMlp, 4, 3, 2);
  const Matrix X = fixtures::random_matrix(rng, 6, 4);
  AttributionConfig cfg = occlusion();
  const auto a = token_attributions(m, X, Vector::Zero(4), 1, cfg, nullptr, "x");
  ASSERT_EQ(a.size(), 6u);
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(a[i], soc_importance(m, X, Vector::Zero(4), {i, i + 1}, 1, cfg, nullptr, 0), 1e-12);
  }
}
