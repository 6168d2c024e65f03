#pragma once

// Binary alert/fatigued classification: LogitBoost over shallow weighted
// least-squares regression trees, k-fold cross-validation, confusion
// statistics (accuracy, PPV, MCC) and split-gain feature importance.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "earmark/errors.hpp"

namespace earmark {

inline constexpr int kAlert = 0;
inline constexpr int kFatigued = 1;

/// Row-major feature table with binary labels (alert = 0, fatigued = 1) and a
/// per-row group tag (subject or block).
struct FeatureMatrix {
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<double> values;
  std::vector<std::string> feature_names;
  std::vector<int> labels;
  std::vector<int> group_ids;

  double at(std::size_t row, std::size_t col) const { return values[row * n_features + col]; }

  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * n_features, n_features};
  }

  void validate() const {
    if (feature_names.size() != n_features) fail(ErrorKind::shape, "feature name count does not match columns");
    if (values.size() != n_rows * n_features) fail(ErrorKind::shape, "value count does not match shape");
    if (labels.size() != n_rows) fail(ErrorKind::shape, "label count does not match rows");
    if (!group_ids.empty() && group_ids.size() != n_rows) fail(ErrorKind::shape, "group count does not match rows");
    std::set<std::string_view> seen;
    for (const auto& n : feature_names) {
      if (!seen.insert(n).second) fail(ErrorKind::shape, "duplicate feature name '" + n + "'");
    }
    for (double v : values) {
      if (!std::isfinite(v)) fail(ErrorKind::data, "non-finite feature value");
    }
    for (int l : labels) {
      if (l != kAlert && l != kFatigued) fail(ErrorKind::data, "labels must be 0 or 1");
    }
  }

  void append_row(std::span<const double> row, int label, int group) {
    if (row.size() != n_features) fail(ErrorKind::shape, "row width does not match matrix");
    values.insert(values.end(), row.begin(), row.end());
    labels.push_back(label);
    group_ids.push_back(group);
    ++n_rows;
  }

  FeatureMatrix subset(std::span<const std::size_t> rows) const {
    FeatureMatrix out;
    out.n_features = n_features;
    out.feature_names = feature_names;
    for (std::size_t r : rows) out.append_row(row(r), labels[r], group_ids.empty() ? 0 : group_ids[r]);
    return out;
  }

  /// Keeps only the named columns, in the given order.
  FeatureMatrix select_columns(const std::vector<std::string>& names) const {
    std::vector<std::size_t> cols;
    for (const auto& n : names) {
      const auto it = std::find(feature_names.begin(), feature_names.end(), n);
      if (it == feature_names.end()) fail(ErrorKind::shape, "unknown feature '" + n + "'");
      cols.push_back(static_cast<std::size_t>(it - feature_names.begin()));
    }
    FeatureMatrix out;
    out.n_features = cols.size();
    out.feature_names = names;
    std::vector<double> buf(cols.size());
    for (std::size_t r = 0; r < n_rows; ++r) {
      for (std::size_t c = 0; c < cols.size(); ++c) buf[c] = at(r, cols[c]);
      out.append_row(buf, labels[r], group_ids.empty() ? 0 : group_ids[r]);
    }
    return out;
  }
};

struct BoostParams {
  int max_splits = 15;
  int n_learners = 55;
  double learning_rate = 0.86;
};

inline constexpr double kMinHessian = 1e-10;
inline constexpr double kMaxWorkingResponse = 4.0;
inline constexpr double kMinLeafWeight = 1e-8;
inline constexpr double kProbClamp = 1e-12;

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output
  double gain = 0.0;   // weighted squared-error reduction of the split
};

class RegressionTree {
 public:
  RegressionTree() : nodes_{TreeNode{}} {}
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) fail(ErrorKind::data, "tree has no nodes");
  }

  /// Rows with x[feature] <= threshold go left.
  double predict(std::span<const double> row) const {
    int i = 0;
    while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes_[static_cast<std::size_t>(i)];
      i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes_[static_cast<std::size_t>(i)].value;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }

  int n_splits() const {
    return static_cast<int>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.feature >= 0; }));
  }

 private:
  std::vector<TreeNode> nodes_;
};

struct BoostModel {
  std::vector<RegressionTree> trees;
  BoostParams params;
  std::vector<std::string> feature_names;
  double f0 = 0.0;

  /// Additive score F(x) = f0 + learning_rate * sum of tree outputs.
  double score(std::span<const double> row) const {
    if (row.size() != feature_names.size()) {
      fail(ErrorKind::shape, "row has " + std::to_string(row.size()) + " features, model expects " +
                                 std::to_string(feature_names.size()));
    }
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(row);
    return f0 + params.learning_rate * s;
  }
};

namespace detail {

inline double logistic(double f) { return 1.0 / (1.0 + std::exp(-f)); }

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

struct GrowingLeaf {
  int node = 0;
  std::vector<std::vector<std::uint32_t>> sorted;  // per feature, node rows ordered by value
  double sw = 0.0;
  double swz = 0.0;
  SplitCandidate best;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& columns, const std::vector<std::vector<std::uint32_t>>& presorted,
              std::span<const double> z, std::span<const double> w, int max_splits)
      : cols_(columns), presorted_(presorted), z_(z), w_(w), max_splits_(max_splits) {}

  RegressionTree build() {
    std::vector<TreeNode> nodes(1);
    GrowingLeaf root;
    root.node = 0;
    root.sorted = presorted_;
    double swzz = 0.0;
    for (std::uint32_t r : root.sorted.front()) {
      root.sw += w_[r];
      root.swz += w_[r] * z_[r];
      swzz += w_[r] * z_[r] * z_[r];
    }
    min_gain_ = 1e-12 * std::max(swzz, 1e-300);
    nodes[0].value = leaf_value(root);
    root.best = best_split(root);

    std::vector<GrowingLeaf> leaves;
    leaves.push_back(std::move(root));
    for (int split = 0; split < max_splits_; ++split) {
      std::size_t pick = leaves.size();
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (leaves[i].best.feature < 0 || leaves[i].best.gain <= min_gain_) continue;
        if (pick == leaves.size() || leaves[i].best.gain > leaves[pick].best.gain) pick = i;
      }
      if (pick == leaves.size()) break;

      GrowingLeaf parent = std::move(leaves[pick]);
      leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(pick));
      const auto& cand = parent.best;
      const auto& col = cols_[static_cast<std::size_t>(cand.feature)];

      GrowingLeaf left, right;
      left.node = static_cast<int>(nodes.size());
      right.node = left.node + 1;
      left.sorted.resize(parent.sorted.size());
      right.sorted.resize(parent.sorted.size());
      for (std::size_t f = 0; f < parent.sorted.size(); ++f) {
        for (std::uint32_t r : parent.sorted[f]) {
          (col[r] <= cand.threshold ? left : right).sorted[f].push_back(r);
        }
      }
      for (auto* leaf : {&left, &right}) {
        for (std::uint32_t r : leaf->sorted.front()) {
          leaf->sw += w_[r];
          leaf->swz += w_[r] * z_[r];
        }
      }
      auto& pn = nodes[static_cast<std::size_t>(parent.node)];
      pn.feature = cand.feature;
      pn.threshold = cand.threshold;
      pn.gain = cand.gain;
      pn.left = left.node;
      pn.right = right.node;
      TreeNode ln, rn;
      ln.value = leaf_value(left);
      rn.value = leaf_value(right);
      nodes.push_back(ln);
      nodes.push_back(rn);
      left.best = best_split(left);
      right.best = best_split(right);
      leaves.push_back(std::move(left));
      leaves.push_back(std::move(right));
    }
    return RegressionTree(std::move(nodes));
  }

 private:
  static double leaf_value(const GrowingLeaf& leaf) { return leaf.sw > 0.0 ? leaf.swz / leaf.sw : 0.0; }

  SplitCandidate best_split(const GrowingLeaf& leaf) const {
    SplitCandidate best;
    if (leaf.sw <= 0.0) return best;
    const double parent_score = leaf.swz * leaf.swz / leaf.sw;
    for (std::size_t f = 0; f < leaf.sorted.size(); ++f) {
      const auto& rows = leaf.sorted[f];
      const auto& col = cols_[f];
      double sw_l = 0.0, swz_l = 0.0;
      for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        const std::uint32_t r = rows[i];
        sw_l += w_[r];
        swz_l += w_[r] * z_[r];
        const double x_here = col[r];
        const double x_next = col[rows[i + 1]];
        if (!(x_here < x_next)) continue;
        const double sw_r = leaf.sw - sw_l;
        if (sw_l < kMinLeafWeight || sw_r < kMinLeafWeight) continue;
        const double swz_r = leaf.swz - swz_l;
        const double gain = swz_l * swz_l / sw_l + swz_r * swz_r / sw_r - parent_score;
        if (gain > best.gain) {
          double thr = 0.5 * (x_here + x_next);
          if (!(thr < x_next)) thr = x_here;
          best = {static_cast<int>(f), thr, gain};
        }
      }
    }
    return best;
  }

  const std::vector<std::vector<double>>& cols_;
  const std::vector<std::vector<std::uint32_t>>& presorted_;
  std::span<const double> z_;
  std::span<const double> w_;
  int max_splits_;
  double min_gain_ = 0.0;
};

}  // namespace detail

/// LogitBoost (Newton steps on the binomial log-likelihood): each round fits a
/// <= max_splits weighted least-squares tree to z = (y - p) / (p (1 - p)) with
/// weights p (1 - p), then F += learning_rate * tree. Deterministic; the seed
/// is accepted for interface symmetry with cross_validate and is not consumed.
inline BoostModel train_logitboost(const FeatureMatrix& m, const BoostParams& hp = {}, std::uint64_t seed = 0) {
  (void)seed;
  m.validate();
  if (hp.max_splits < 1 || hp.n_learners < 0 || !(hp.learning_rate > 0.0)) {
    fail(ErrorKind::parameter, "boosting hyperparameters must be positive");
  }
  const auto n1 = static_cast<std::size_t>(std::count(m.labels.begin(), m.labels.end(), kFatigued));
  const std::size_t n0 = m.n_rows - n1;
  if (n0 == 0 || n1 == 0) fail(ErrorKind::training, "training labels contain a single class");
  if (n0 < 2 || n1 < 2) fail(ErrorKind::training, "need at least two rows per class");
  if (m.n_rows > std::numeric_limits<std::uint32_t>::max()) fail(ErrorKind::training, "too many rows");

  BoostModel model;
  model.params = hp;
  model.feature_names = m.feature_names;
  model.f0 = std::log(static_cast<double>(n1) / static_cast<double>(n0));

  std::vector<std::vector<double>> cols(m.n_features, std::vector<double>(m.n_rows));
  for (std::size_t r = 0; r < m.n_rows; ++r) {
    for (std::size_t c = 0; c < m.n_features; ++c) cols[c][r] = m.at(r, c);
  }
  std::vector<std::vector<std::uint32_t>> presorted(m.n_features, std::vector<std::uint32_t>(m.n_rows));
  for (std::size_t c = 0; c < m.n_features; ++c) {
    std::iota(presorted[c].begin(), presorted[c].end(), 0u);
    std::stable_sort(presorted[c].begin(), presorted[c].end(),
                     [&](std::uint32_t a, std::uint32_t b) { return cols[c][a] < cols[c][b]; });
  }

  std::vector<double> f(m.n_rows, model.f0), z(m.n_rows), w(m.n_rows);
  std::vector<double> row(m.n_features);
  for (int round = 0; round < hp.n_learners; ++round) {
    for (std::size_t r = 0; r < m.n_rows; ++r) {
      const double p = detail::logistic(f[r]);
      w[r] = std::max(p * (1.0 - p), kMinHessian);
      z[r] = std::clamp((static_cast<double>(m.labels[r]) - p) / w[r], -kMaxWorkingResponse, kMaxWorkingResponse);
    }
    auto tree = detail::TreeBuilder(cols, presorted, z, w, hp.max_splits).build();
    for (std::size_t r = 0; r < m.n_rows; ++r) {
      for (std::size_t c = 0; c < m.n_features; ++c) row[c] = cols[c][r];
      f[r] += hp.learning_rate * tree.predict(row);
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

struct Prediction {
  double prob_fatigued = 0.5;
  int label = kFatigued;
};

/// prob = logistic(F(x)) clamped into (0, 1); fatigued iff prob >= 0.5.
inline Prediction predict(const BoostModel& model, std::span<const double> row) {
  const double f = model.score(row);
  const double p = std::clamp(detail::logistic(f), kProbClamp, 1.0 - kProbClamp);
  return {p, p >= 0.5 ? kFatigued : kAlert};
}

/// Name-keyed prediction: columns may come in any order.
inline Prediction predict(const BoostModel& model, std::span<const double> row, const std::vector<std::string>& names) {
  if (names.size() != row.size()) fail(ErrorKind::shape, "names and values differ in length");
  if (names.size() != model.feature_names.size()) fail(ErrorKind::shape, "feature count mismatch");
  std::vector<double> ordered(model.feature_names.size());
  for (std::size_t i = 0; i < model.feature_names.size(); ++i) {
    const auto it = std::find(names.begin(), names.end(), model.feature_names[i]);
    if (it == names.end()) fail(ErrorKind::shape, "missing feature '" + model.feature_names[i] + "'");
    ordered[i] = row[static_cast<std::size_t>(it - names.begin())];
  }
  return predict(model, ordered);
}

/// Split-gain importance weighted by the learning rate, normalized to sum to 1.
/// A model without splits reports all zeros.
inline std::vector<std::pair<std::string, double>> feature_importance(const BoostModel& model) {
  std::vector<double> score(model.feature_names.size(), 0.0);
  for (const auto& t : model.trees) {
    for (const auto& n : t.nodes()) {
      if (n.feature >= 0) score[static_cast<std::size_t>(n.feature)] += model.params.learning_rate * n.gain;
    }
  }
  const double total = std::accumulate(score.begin(), score.end(), 0.0);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < score.size(); ++i) {
    out.emplace_back(model.feature_names[i], total > 0.0 ? score[i] / total : 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Confusion statistics (positive class = fatigued)

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t n() const { return tp + fp + tn + fn; }

  void add(int truth, int predicted) {
    if (truth == kFatigued) (predicted == kFatigued ? tp : fn)++;
    else (predicted == kFatigued ? fp : tn)++;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }

  bool operator==(const ConfusionMatrix&) const = default;
};

/// Matthews correlation; 0 when any marginal is empty.
inline double mcc(const ConfusionMatrix& c) {
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

struct ConfusionStats {
  double accuracy = 0.0;
  double ppv = 0.0;       // 0 when nothing is predicted positive
  double fdr_rate = 1.0;  // 1 - ppv
};

inline ConfusionStats confusion_stats(const ConfusionMatrix& c) {
  ConfusionStats s;
  if (c.n() > 0) s.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.n());
  if (c.tp + c.fp > 0) s.ppv = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  s.fdr_rate = 1.0 - s.ppv;
  return s;
}

// ---------------------------------------------------------------------------
// Cross-validation

enum class CvStrategy { stratified_epoch, grouped_block };

inline std::string_view to_string(CvStrategy s) {
  return s == CvStrategy::stratified_epoch ? "stratified_epoch" : "grouped_block";
}

inline CvStrategy parse_cv_strategy(std::string_view s) {
  if (s == "stratified_epoch") return CvStrategy::stratified_epoch;
  if (s == "grouped_block") return CvStrategy::grouped_block;
  fail(ErrorKind::config, "unknown CV strategy '" + std::string(s) + "'");
}

struct CvOptions {
  int folds = 5;
  CvStrategy strategy = CvStrategy::stratified_epoch;
  bool downsample_majority = false;
  std::uint64_t seed = 1;
};

struct FoldResult {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  double mcc = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

struct CvReport {
  double accuracy = 0.0;
  double mcc = 0.0;
  double ppv = 0.0;
  double fdr_rate = 1.0;
  ConfusionMatrix pooled;
  std::vector<FoldResult> folds;
  std::vector<std::pair<std::string, double>> feature_importance;  // descending
  std::vector<int> fold_of_row;
  BoostParams params;
  CvOptions options;
};

namespace detail {

// Portable Fisher-Yates (std::shuffle's draw sequence is library-specific).
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

inline std::vector<int> assign_folds(const FeatureMatrix& m, const CvOptions& opt) {
  std::vector<int> fold(m.n_rows, 0);
  const auto k = static_cast<std::size_t>(opt.folds);
  if (opt.strategy == CvStrategy::stratified_epoch) {
    std::mt19937_64 rng(opt.seed);
    for (int cls : {kAlert, kFatigued}) {
      std::vector<std::size_t> rows;
      for (std::size_t r = 0; r < m.n_rows; ++r) if (m.labels[r] == cls) rows.push_back(r);
      shuffle(rows, rng);
      for (std::size_t i = 0; i < rows.size(); ++i) fold[rows[i]] = static_cast<int>(i % k);
    }
    return fold;
  }
  // Contiguous blocks within each (group, class) run, in row order.
  std::map<std::pair<int, int>, std::vector<std::size_t>> runs;
  for (std::size_t r = 0; r < m.n_rows; ++r) {
    runs[{m.group_ids.empty() ? 0 : m.group_ids[r], m.labels[r]}].push_back(r);
  }
  for (const auto& [key, rows] : runs) {
    for (std::size_t i = 0; i < rows.size(); ++i) fold[rows[i]] = static_cast<int>(i * k / rows.size());
  }
  return fold;
}

}  // namespace detail

/// k-fold cross-validation: every row is predicted once by a model that never
/// saw it. Metrics come from the pooled confusion matrix; importance is the
/// mean of the fold models' importances.
inline CvReport cross_validate(const FeatureMatrix& m, const BoostParams& hp, const CvOptions& opt) {
  m.validate();
  if (opt.folds < 2) fail(ErrorKind::fold, "need at least two folds");
  const auto n1 = static_cast<std::size_t>(std::count(m.labels.begin(), m.labels.end(), kFatigued));
  const std::size_t n0 = m.n_rows - n1;
  if (n0 < static_cast<std::size_t>(opt.folds) || n1 < static_cast<std::size_t>(opt.folds)) {
    fail(ErrorKind::fold, "each class needs at least " + std::to_string(opt.folds) + " rows");
  }

  CvReport report;
  report.params = hp;
  report.options = opt;
  report.fold_of_row = detail::assign_folds(m, opt);
  std::vector<double> importance(m.n_features, 0.0);

  for (int k = 0; k < opt.folds; ++k) {
    std::vector<std::size_t> train, test;
    for (std::size_t r = 0; r < m.n_rows; ++r) (report.fold_of_row[r] == k ? test : train).push_back(r);
    if (opt.downsample_majority) {
      std::vector<std::size_t> c0, c1;
      for (std::size_t r : train) (m.labels[r] == kFatigued ? c1 : c0).push_back(r);
      auto& major = c0.size() > c1.size() ? c0 : c1;
      const std::size_t keep = std::min(c0.size(), c1.size());
      std::mt19937_64 rng(opt.seed + 7919 * static_cast<std::uint64_t>(k + 1));
      detail::shuffle(major, rng);
      major.resize(keep);
      train.clear();
      train.insert(train.end(), c0.begin(), c0.end());
      train.insert(train.end(), c1.begin(), c1.end());
      std::sort(train.begin(), train.end());
    }
    const auto model = train_logitboost(m.subset(train), hp, opt.seed);
    FoldResult fr;
    fr.n_train = train.size();
    fr.n_test = test.size();
    for (std::size_t r : test) fr.confusion.add(m.labels[r], predict(model, m.row(r)).label);
    fr.accuracy = confusion_stats(fr.confusion).accuracy;
    fr.mcc = mcc(fr.confusion);
    report.pooled += fr.confusion;
    report.folds.push_back(fr);
    const auto imp = feature_importance(model);
    for (std::size_t i = 0; i < imp.size(); ++i) importance[i] += imp[i].second;
  }

  const auto stats = confusion_stats(report.pooled);
  report.accuracy = stats.accuracy;
  report.ppv = stats.ppv;
  report.fdr_rate = stats.fdr_rate;
  report.mcc = mcc(report.pooled);
  const double total = std::accumulate(importance.begin(), importance.end(), 0.0);
  for (std::size_t i = 0; i < importance.size(); ++i) {
    report.feature_importance.emplace_back(m.feature_names[i], total > 0.0 ? importance[i] / total : 0.0);
  }
  std::stable_sort(report.feature_importance.begin(), report.feature_importance.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return report;
}

}  // namespace earmark
