#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "laic/scoring.hpp"
#include "laic/verify.hpp"
#include "oracle.hpp"

using namespace laic;

namespace {

std::span<const double> sp(const std::vector<double>& v) { return {v.data(), v.size()}; }

// Two-class weights with z = e_0 and the requested logits / tau.
ClassifierWeights two_class(double a, double b) {
  ClassifierWeights w(2, 2);
  w.w(0, 0) = a;
  w.w(0, 1) = b;
  return w;
}

ScoreTable table_of(std::vector<std::pair<std::size_t, double>> rows, std::size_t clusters) {
  ScoreTable t;
  t.num_clusters = clusters;
  for (auto [k, s] : rows) {
    ScoreRecord r;
    r.predicted = k;
    r.gradnorm = s;
    r.msp = s;
    r.cosine = s;
    t.records.push_back(r);
  }
  return t;
}

}  // namespace

TEST(GradNorm, OneHotIsZero) {
  const std::vector<double> z{1.0, 0.0};
  EXPECT_EQ(gradnorm_score(sp(z), two_class(1.0, -1.0), 1000.0).score, 0.0);
  EXPECT_EQ(score_direct(sp(z), two_class(1.0, -1.0), 1000.0), 0.0);
}

TEST(GradNorm, MaximalUncertaintyTwoClasses) {
  const std::vector<double> z{1.0, 0.0};
  const auto g = gradnorm_score(sp(z), two_class(0.2, 0.2), 1.0);
  EXPECT_NEAR(g.score, 0.5, 1e-15);
  EXPECT_EQ(g.predicted, 0u);
}

TEST(GradNorm, ClosedFormMatchesOracle) {
  for (std::size_t t = 0; t < 1000; ++t) {
    const auto inst = random_instance(31, t);
    const std::size_t d = inst.weights.dim(), c = inst.weights.classes();
    const auto logits = oracle::logits(inst.text, inst.weights.w.data, d, c, inst.tau);
    const auto y = oracle::argmax(logits);
    const auto ref = static_cast<double>(oracle::frobenius_sq(oracle::gradient(inst.text, y, inst.weights.w.data, d, c, inst.tau)));
    const auto g = gradnorm_score(sp(inst.text), inst.weights, inst.tau);
    EXPECT_EQ(g.predicted, y);
    EXPECT_LE(std::abs(g.score - ref), 1e-6 * std::max(ref, 1e-12));
    const double direct = score_direct(sp(inst.text), inst.weights, inst.tau);
    EXPECT_LE(std::abs(g.score - direct), 1e-6 * std::max(direct, 1e-12));
  }
}

TEST(GradNorm, DoublingTheNormQuadruplesTheScore) {
  for (std::size_t t = 0; t < 200; ++t) {
    const auto inst = random_instance(32, t);
    std::vector<double> twice = inst.text;
    for (auto& v : twice) v *= 2.0;
    // Same logits as the unit row against W / 2, so only the norm factor moves.
    ClassifierWeights half = inst.weights;
    for (auto& v : half.w.data) v *= 0.5;
    const double unit = score_direct(sp(inst.text), inst.weights, inst.tau);
    const double big = score_direct(sp(twice), half, inst.tau);
    EXPECT_NEAR(big, 4.0 * unit, 1e-12 * std::max(1.0, unit));
    EXPECT_NEAR(gradnorm_score(sp(twice), half, inst.tau).score, 4.0 * unit, 1e-9 * std::max(1.0, unit));
    EXPECT_TRUE(gradnorm_score(sp(twice), half, inst.tau).non_unit);
  }
}

TEST(GradNorm, RangeAndSelfBound) {
  for (std::size_t t = 0; t < 1000; ++t) {
    const auto inst = random_instance(33, t);
    const auto g = gradnorm_score(sp(inst.text), inst.weights, inst.tau);
    const double t2 = inst.tau * inst.tau;
    EXPECT_GE(g.score, 0.0);
    EXPECT_LE(g.score, 2.0 * t2);
    EXPECT_LE(g.score, 2.0 * t2 * ce_loss(sp(inst.text), static_cast<std::int64_t>(g.predicted), inst.weights, inst.tau));
  }
}

TEST(Msp, ConfidentIsZero) {
  const std::vector<double> z{1.0, 0.0};
  EXPECT_EQ(msp_score(sp(z), two_class(1.0, -1.0), 1000.0), 0.0);
}

TEST(Msp, PlugIn) {
  // logit gap ln 9 gives max pi = 0.9
  const std::vector<double> z{1.0, 0.0};
  EXPECT_NEAR(msp_score(sp(z), two_class(std::log(9.0), 0.0), 1.0), 0.01, 1e-14);
}

TEST(Msp, EqualsSeCuGradientColumn) {
  for (std::size_t t = 0; t < 500; ++t) {
    const auto inst = random_instance(34, t);
    const auto s = softmax_state(sp(inst.text), inst.weights, inst.tau);
    const auto g = grad_secu(sp(inst.text), static_cast<std::int64_t>(s.argmax), inst.weights, inst.tau);
    EXPECT_NEAR(msp_score(sp(inst.text), inst.weights, inst.tau), g.frobenius_sq(), 1e-10);
  }
}

TEST(Cosine, RowEqualToAColumn) {
  ClassifierWeights w(2, 4);
  w.w(0, 0) = 1;
  w.w(1, 1) = 1;
  w.w(0, 2) = -1;
  w.w(0, 3) = 0.6;
  w.w(1, 3) = 0.8;
  const std::vector<double> z{0.6, 0.8};
  const auto c = cosine_score(sp(z), w);
  EXPECT_NEAR(c.cosine, 1.0, 1e-15);
  EXPECT_EQ(c.index, 3u);
}

TEST(Cosine, OrthogonalPicksLowestIndex) {
  ClassifierWeights w(3, 2);
  w.w(0, 0) = 1;
  w.w(1, 1) = 1;
  const std::vector<double> z{0.0, 0.0, 1.0};
  const auto c = cosine_score(sp(z), w);
  EXPECT_EQ(c.cosine, 0.0);
  EXPECT_EQ(c.index, 0u);
}

TEST(Cosine, ArgmaxAgreesWithGradNorm) {
  for (std::size_t t = 0; t < 1000; ++t) {
    const auto inst = random_instance(35, t);
    EXPECT_EQ(cosine_score(sp(inst.text), inst.weights).index,
              gradnorm_score(sp(inst.text), inst.weights, inst.tau).predicted);
  }
}

TEST(ScoreAll, EmptyTable) {
  FeatureMatrix none(0, 3);
  const auto t = score_all(none, ClassifierWeights(3, 2), 1.0);
  EXPECT_EQ(t.size(), 0u);
  EXPECT_EQ(t.num_clusters, 2u);
}

TEST(ScoreAll, MatchesPerRowLoop) {
  HuberSynthConfig cfg;
  cfg.dim = 12;
  cfg.num_images = 5;
  cfg.num_texts = 300;
  const auto data = generate_huber_dataset(cfg);
  const auto inst = random_instance(36, 0);
  ClassifierWeights w(12, 7);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> normal(0.0, 0.3);
  for (auto& v : w.w.data) v = normal(gen);
  const double tau = 12.5;
  const auto table = score_all(data.texts, w, tau);
  ASSERT_EQ(table.size(), 300u);
  EXPECT_EQ(table.non_unit_rows, 0u);
  for (std::size_t i = 0; i < 300; ++i) {
    const auto g = gradnorm_score(data.texts.row(i), w, tau);
    EXPECT_EQ(table.records[i].gradnorm, g.score);
    EXPECT_EQ(table.records[i].predicted, g.predicted);
    EXPECT_EQ(table.records[i].msp, msp_score(data.texts.row(i), w, tau));
    EXPECT_EQ(table.records[i].cosine, cosine_score(data.texts.row(i), w).cosine);
    EXPECT_LE(g.score, 2 * tau * tau);
  }
  (void)inst;
}

TEST(Filter, OrderStatisticExample) {
  const auto t = table_of({{0, 0.1}, {0, 0.5}, {0, 0.3}, {0, 0.9}, {0, 0.2}}, 1);
  const auto f = filter_positive(t, 3, ScoreKind::gradnorm);
  EXPECT_DOUBLE_EQ(f.clusters[0].threshold, 0.3);
  EXPECT_EQ(f.selected, (std::vector<std::size_t>{0, 2, 4}));
}

TEST(Filter, SaturatedClusterKeepsEverything) {
  const auto t = table_of({{0, 0.1}, {1, 0.5}, {0, 0.3}}, 2);
  const auto f = filter_positive(t, 5, ScoreKind::gradnorm);
  EXPECT_EQ(f.selected, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(std::isinf(f.clusters[0].threshold));
}

TEST(Filter, TiesKeepExactlyBetaLowestIndices) {
  const auto t = table_of({{0, 0.4}, {0, 0.2}, {0, 0.4}, {0, 0.4}, {0, 0.4}}, 1);
  const auto f = filter_positive(t, 3, ScoreKind::gradnorm);
  EXPECT_EQ(f.selected, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_DOUBLE_EQ(f.clusters[0].threshold, 0.4);
}

TEST(Filter, CosineKeepsLargest) {
  const auto t = table_of({{0, 0.1}, {0, 0.5}, {0, 0.3}, {0, 0.9}}, 1);
  const auto f = filter_positive(t, 2, ScoreKind::cosine);
  EXPECT_EQ(f.selected, (std::vector<std::size_t>{1, 3}));
  EXPECT_DOUBLE_EQ(f.clusters[0].threshold, 0.5);
}

TEST(Filter, EmptyClustersAreReported) {
  const auto t = table_of({{0, 0.1}, {2, 0.5}}, 3);
  const auto f = filter_positive(t, 1, ScoreKind::gradnorm);
  EXPECT_EQ(f.empty_clusters, (std::vector<std::size_t>{1}));
}

TEST(Filter, BudgetPerCluster) {
  std::mt19937_64 gen(2);
  std::vector<std::pair<std::size_t, double>> rows;
  for (int i = 0; i < 500; ++i) rows.emplace_back(gen() % 7, static_cast<double>(gen() % 20));
  const auto t = table_of(rows, 7);
  for (std::size_t beta : {1u, 3u, 40u, 200u}) {
    const auto f = filter_positive(t, beta, ScoreKind::msp);
    for (std::size_t k = 0; k < 7; ++k)
      EXPECT_EQ(f.clusters[k].indices.size(), std::min(beta, f.clusters[k].candidates));
  }
}

TEST(Filter, BetaZeroRejected) {
  EXPECT_THROW(filter_positive(table_of({{0, 1.0}}, 1), 0, ScoreKind::gradnorm), ConfigError);
}
