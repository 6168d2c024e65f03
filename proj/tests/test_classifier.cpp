#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "earmark/classifier.hpp"

using namespace earmark;

namespace {

FeatureMatrix blobs(std::size_t n_per_class, double separation, std::uint64_t seed, std::size_t n_features = 4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  FeatureMatrix m;
  m.n_features = n_features;
  for (std::size_t f = 0; f < n_features; ++f) m.feature_names.push_back("f" + std::to_string(f));
  std::vector<double> row(n_features);
  for (int label : {kAlert, kFatigued}) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      for (std::size_t f = 0; f < n_features; ++f) row[f] = nd(rng);
      row[0] += label == kFatigued ? separation : 0.0;
      m.append_row(row, label, static_cast<int>(i % 5));
    }
  }
  return m;
}

}  // namespace

TEST(Mcc, HandValues) {
  EXPECT_DOUBLE_EQ(mcc({50, 0, 50, 0}), 1.0);
  EXPECT_DOUBLE_EQ(mcc({0, 50, 0, 50}), -1.0);
  ConfusionMatrix c{40, 15, 35, 10};
  EXPECT_NEAR(mcc(c), 0.5025, 1e-4);
  EXPECT_EQ(mcc({0, 0, 30, 20}), 0.0);  // nothing predicted positive
  EXPECT_EQ(mcc({}), 0.0);
}

TEST(Confusion, AddAndStats) {
  ConfusionMatrix c;
  c.add(kFatigued, kFatigued);
  c.add(kFatigued, kAlert);
  c.add(kAlert, kFatigued);
  c.add(kAlert, kAlert);
  c.add(kAlert, kAlert);
  EXPECT_EQ(c, (ConfusionMatrix{1, 1, 2, 1}));
  const auto s = confusion_stats(c);
  EXPECT_DOUBLE_EQ(s.accuracy, 0.6);
  EXPECT_DOUBLE_EQ(s.ppv, 0.5);
  EXPECT_DOUBLE_EQ(s.fdr_rate, 0.5);
  EXPECT_DOUBLE_EQ(confusion_stats({0, 0, 3, 1}).ppv, 0.0);
  c += c;
  EXPECT_EQ(c.n(), 10u);
}

TEST(Matrix, ValidationAndSelection) {
  auto m = blobs(10, 1.0, 1);
  EXPECT_NO_THROW(m.validate());
  const auto sel = m.select_columns({"f2", "f0"});
  EXPECT_EQ(sel.n_features, 2u);
  EXPECT_EQ(sel.at(3, 1), m.at(3, 0));
  EXPECT_EQ(sel.at(3, 0), m.at(3, 2));
  EXPECT_THROW(m.select_columns({"zz"}), Error);
  const std::vector<std::size_t> rows{0, 19};
  const auto sub = m.subset(rows);
  EXPECT_EQ(sub.n_rows, 2u);
  EXPECT_EQ(sub.labels, (std::vector<int>{kAlert, kFatigued}));

  auto bad = m;
  bad.labels[0] = 2;
  EXPECT_THROW(bad.validate(), Error);
  bad = m;
  bad.feature_names[1] = "f0";
  EXPECT_THROW(bad.validate(), Error);
  bad = m;
  bad.values[5] = NAN;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_THROW(m.append_row(std::vector<double>{1.0}, 0, 0), Error);
}

TEST(Tree, RespectsSplitBudgetAndThresholdSide) {
  auto m = blobs(100, 3.0, 2);
  BoostParams hp{3, 5, 0.5};
  const auto model = train_logitboost(m, hp);
  ASSERT_EQ(model.trees.size(), 5u);
  for (const auto& t : model.trees) EXPECT_LE(t.n_splits(), 3);

  TreeNode root{0, 1.5, 1, 2, 0.0, 1.0};
  TreeNode left{-1, 0.0, -1, -1, -2.0, 0.0};
  TreeNode right{-1, 0.0, -1, -1, 3.0, 0.0};
  RegressionTree t({root, left, right});
  EXPECT_EQ(t.predict(std::vector<double>{1.5}), -2.0);
  EXPECT_EQ(t.predict(std::vector<double>{1.6}), 3.0);
}

TEST(Boost, InitialScoreIsLogOdds) {
  auto m = blobs(30, 0.0, 3);
  const std::vector<std::size_t> keep = [] {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < 60; ++i) {
      if (i < 10 || i >= 30) r.push_back(i);
    }
    return r;
  }();
  const auto sub = m.subset(keep);
  const auto model = train_logitboost(sub, {15, 0, 0.5});
  EXPECT_NEAR(model.f0, std::log(30.0 / 10.0), 1e-12);
  EXPECT_NEAR(predict(model, sub.row(0)).prob_fatigued, 0.75, 1e-12);
}

TEST(Boost, SeparableDataIsLearned) {
  const auto m = blobs(200, 6.0, 4);
  const auto model = train_logitboost(m);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < m.n_rows; ++r) correct += predict(model, m.row(r)).label == m.labels[r];
  EXPECT_EQ(correct, m.n_rows);
  const auto imp = feature_importance(model);
  ASSERT_EQ(imp.size(), 4u);
  EXPECT_EQ(imp.front().first, "f0");
  double total = 0.0;
  for (const auto& [name, v] : imp) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Boost, NameKeyedPredictionReordersColumns) {
  const auto m = blobs(50, 2.0, 5);
  const auto model = train_logitboost(m);
  const auto row = m.row(7);
  const std::vector<double> shuffled{row[3], row[0], row[2], row[1]};
  const std::vector<std::string> names{"f3", "f0", "f2", "f1"};
  EXPECT_EQ(predict(model, shuffled, names).prob_fatigued, predict(model, row).prob_fatigued);
  EXPECT_THROW(predict(model, std::vector<double>{1.0, 2.0}), Error);
  EXPECT_THROW(predict(model, shuffled, {"f3", "f0", "f2", "zz"}), Error);
}

TEST(Boost, TrainingErrors) {
  auto m = blobs(10, 1.0, 6);
  auto one_class = m.subset(std::vector<std::size_t>{0, 1, 2, 3});
  EXPECT_THROW(train_logitboost(one_class), Error);
  EXPECT_THROW(train_logitboost(m, {0, 5, 0.5}), Error);
  EXPECT_THROW(train_logitboost(m, {5, 5, 0.0}), Error);
}

TEST(Folds, StratifiedBalancesClasses) {
  const auto m = blobs(53, 1.0, 7);
  CvOptions opt;
  const auto folds = detail::assign_folds(m, opt);
  ASSERT_EQ(folds.size(), m.n_rows);
  for (int k = 0; k < 5; ++k) {
    int n0 = 0, n1 = 0;
    for (std::size_t r = 0; r < m.n_rows; ++r) {
      if (folds[r] == k) (m.labels[r] == kAlert ? n0 : n1)++;
    }
    EXPECT_GE(n0, 10);
    EXPECT_LE(n0, 11);
    EXPECT_GE(n1, 10);
    EXPECT_LE(n1, 11);
  }
  EXPECT_EQ(detail::assign_folds(m, opt), folds);
  opt.seed = 2;
  EXPECT_NE(detail::assign_folds(m, opt), folds);
}

TEST(Folds, GroupedBlocksAreContiguous) {
  const auto m = blobs(50, 1.0, 8);
  CvOptions opt{5, CvStrategy::grouped_block, false, 1};
  const auto folds = detail::assign_folds(m, opt);
  // within one (group, class) run the fold index never decreases
  std::map<std::pair<int, int>, int> last;
  for (std::size_t r = 0; r < m.n_rows; ++r) {
    const auto key = std::make_pair(m.group_ids[r], m.labels[r]);
    auto it = last.find(key);
    if (it != last.end()) {
      EXPECT_GE(folds[r], it->second);
    }
    last[key] = folds[r];
  }
  EXPECT_EQ(std::set<int>(folds.begin(), folds.end()).size(), 5u);
}

TEST(CrossValidation, SeparableAndPermuted) {
  const auto m = blobs(150, 6.0, 9);
  const auto rep = cross_validate(m, {}, {});
  EXPECT_GE(rep.accuracy, 0.95);
  EXPECT_GE(rep.mcc, 0.9);
  EXPECT_EQ(rep.folds.size(), 5u);
  EXPECT_EQ(rep.pooled.n(), m.n_rows);
  EXPECT_EQ(rep.fold_of_row.size(), m.n_rows);
  EXPECT_EQ(rep.feature_importance.front().first, "f0");

  auto perm = blobs(150, 0.0, 10);
  const auto rp = cross_validate(perm, {}, {});
  EXPECT_LT(std::abs(rp.mcc), 0.3);
}

TEST(CrossValidation, DeterministicAndDownsampling) {
  const auto m = blobs(80, 1.0, 11);
  CvOptions opt;
  opt.seed = 5;
  const auto a = cross_validate(m, {}, opt);
  const auto b = cross_validate(m, {}, opt);
  EXPECT_EQ(a.pooled, b.pooled);
  EXPECT_EQ(a.feature_importance, b.feature_importance);
  opt.downsample_majority = true;
  const auto c = cross_validate(m, {}, opt);
  EXPECT_EQ(c.pooled.n(), m.n_rows);
}

TEST(CrossValidation, FoldErrors) {
  const auto m = blobs(3, 1.0, 12);
  EXPECT_THROW(cross_validate(m, {}, {}), Error);
  CvOptions one;
  one.folds = 1;
  EXPECT_THROW(cross_validate(blobs(20, 1.0, 13), {}, one), Error);
}

TEST(Strategy, ParseAndPrint) {
  EXPECT_EQ(parse_cv_strategy(to_string(CvStrategy::grouped_block)), CvStrategy::grouped_block);
  EXPECT_EQ(parse_cv_strategy("stratified_epoch"), CvStrategy::stratified_epoch);
  EXPECT_THROW(parse_cv_strategy("loso"), Error);
}
