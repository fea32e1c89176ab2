// Copyright 2026 The MILab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Shared numeric learners: LASSO via cyclic coordinate descent, a linear
// max-margin classifier, and a CART/Gini random forest.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include <nlohmann/json.hpp>

#include "milab/error.hpp"
#include "milab/parallel.hpp"
#include "milab/rng.hpp"

namespace milab::learners {

// ---------------------------------------------------------------------------
// Design matrix

class DesignMatrix {
 public:
  DesignMatrix() = default;
  DesignMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  const std::vector<double>& values() const { return values_; }

  bool standardized() const { return !means_.empty(); }
  const std::vector<double>& feature_means() const { return means_; }
  const std::vector<double>& feature_stds() const { return stds_; }

  /// Centers and scales every column to mean 0 / std 1 (population std),
  /// storing the statistics. Zero-variance columns get std 1 and end up
  /// all-zero, so a downstream LASSO can never select them.
  void standardize() {
    means_.assign(cols_, 0.0);
    stds_.assign(cols_, 1.0);
    if (rows_ == 0) return;
    for (std::size_t c = 0; c < cols_; ++c) {
      double m = 0.0;
      for (std::size_t r = 0; r < rows_; ++r) m += at(r, c);
      m /= static_cast<double>(rows_);
      double v = 0.0;
      for (std::size_t r = 0; r < rows_; ++r) {
        double d = at(r, c) - m;
        v += d * d;
      }
      double sd = std::sqrt(v / static_cast<double>(rows_));
      if (!(sd > 0.0)) sd = 1.0;
      means_[c] = m;
      stds_[c] = sd;
      for (std::size_t r = 0; r < rows_; ++r) at(r, c) = (at(r, c) - m) / sd;
    }
  }

  void require_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) throw NumericError("design matrix has non-finite values");
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
  std::vector<double> means_;
  std::vector<double> stds_;
};

// ---------------------------------------------------------------------------
// LASSO

/// Sparse linear model l(x) = intercept + sum_j weights[j] * x[j]; only
/// non-zero coefficients are stored.
struct SparseLinearModel {
  double intercept = 0.0;
  std::map<int, double> weights;
  double lambda = 0.0;

  double evaluate(const std::vector<double>& x) const {
    double s = intercept;
    for (const auto& [j, w] : weights) {
      if (j < 0 || static_cast<std::size_t>(j) >= x.size())
        throw ShapeError("sparse model evaluated on short vector");
      s += w * x[static_cast<std::size_t>(j)];
    }
    return s;
  }

  std::size_t nonzero_count() const { return weights.size(); }
};

namespace detail {

inline double soft_threshold(double rho, double gamma) {
  if (rho > gamma) return rho - gamma;
  if (rho < -gamma) return rho + gamma;
  return 0.0;
}

inline double lasso_objective(const DesignMatrix& x, const std::vector<double>& y,
                              const std::vector<double>& alpha, double beta,
                              double lambda) {
  double sse = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double pred = beta;
    for (std::size_t j = 0; j < x.cols(); ++j) pred += alpha[j] * x.at(i, j);
    double r = y[i] - pred;
    sse += r * r;
  }
  double l1 = 0.0;
  for (double a : alpha) l1 += std::abs(a);
  return sse + lambda * l1;
}

}  // namespace detail

/// Minimizes sum_i (y_i - l(x_i))^2 + lambda * ||alpha||_1 with an
/// unpenalized intercept, by cyclic coordinate descent with soft
/// thresholding. The matrix is used exactly as given; standardize first if
/// the penalty should be scale-free. The objective is verified non-increasing
/// after every sweep.
inline SparseLinearModel lasso_fit(const DesignMatrix& x,
                                   const std::vector<double>& y, double lambda,
                                   double tol = 1e-10,
                                   std::size_t max_sweeps = 10000) {
  if (x.rows() != y.size()) throw ShapeError("lasso_fit: rows(X) != len(y)");
  if (x.rows() == 0) throw DegenerateDataError("lasso_fit: empty data");
  if (lambda < 0.0) throw ConfigError("lasso_fit: lambda must be >= 0");
  x.require_finite();
  for (double v : y)
    if (!std::isfinite(v)) throw NumericError("lasso_fit: non-finite label");

  const std::size_t n = x.rows(), p = x.cols();
  std::vector<double> z(p, 0.0);  // column squared norms
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t i = 0; i < n; ++i) z[j] += x.at(i, j) * x.at(i, j);

  std::vector<double> alpha(p, 0.0);
  double beta = 0.0;
  for (double v : y) beta += v;
  beta /= static_cast<double>(n);
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - beta;

  double prev_obj = detail::lasso_objective(x, y, alpha, beta, lambda);
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (z[j] <= 0.0) continue;  // constant-zero column, never selected
      double rho = 0.0;
      for (std::size_t i = 0; i < n; ++i) rho += x.at(i, j) * resid[i];
      rho += alpha[j] * z[j];
      double updated = detail::soft_threshold(rho, lambda / 2.0) / z[j];
      double delta = updated - alpha[j];
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) resid[i] -= delta * x.at(i, j);
        alpha[j] = updated;
      }
      max_change = std::max(max_change, std::abs(delta));
    }
    double shift = 0.0;  // unpenalized intercept: mean of residuals
    for (double r : resid) shift += r;
    shift /= static_cast<double>(n);
    if (shift != 0.0) {
      beta += shift;
      for (double& r : resid) r -= shift;
    }
    max_change = std::max(max_change, std::abs(shift));

    double obj = detail::lasso_objective(x, y, alpha, beta, lambda);
    milab::detail::check(obj <= prev_obj + 1e-9 * (1.0 + std::abs(prev_obj)),
                         "lasso objective increased across a sweep");
    prev_obj = obj;
    if (max_change < tol) break;
  }

  SparseLinearModel model;
  model.intercept = beta;
  model.lambda = lambda;
  for (std::size_t j = 0; j < p; ++j)
    if (alpha[j] != 0.0) model.weights[static_cast<int>(j)] = alpha[j];
  return model;
}

/// Fits at lambda0 and escalates lambda by 1.5x until the non-zero weight
/// count is within `cap`.
inline SparseLinearModel lasso_cap(const DesignMatrix& x,
                                   const std::vector<double>& y, double lambda0,
                                   std::size_t cap) {
  if (cap < 1) throw ConfigError("lasso_cap: cap must be >= 1");
  double lambda = lambda0;
  for (int attempt = 0; attempt <= 100; ++attempt) {
    SparseLinearModel m = lasso_fit(x, y, lambda);
    if (m.nonzero_count() <= cap) return m;
    lambda *= 1.5;
  }
  throw ConvergenceError("lasso_cap: cap unreachable after 100 escalations");
}

// ---------------------------------------------------------------------------
// Linear max-margin classifier

struct LinearClassifier {
  std::vector<double> weights;
  double bias = 0.0;

  int predict(const std::vector<double>& x) const {
    if (x.size() != weights.size())
      throw ShapeError("linear classifier dimension mismatch");
    double s = bias;
    for (std::size_t j = 0; j < x.size(); ++j) s += weights[j] * x[j];
    return s > 0.0 ? 1 : 0;
  }
};

/// L2-regularized hinge loss by seeded, epoch-shuffled subgradient descent
/// (Pegasos schedule, bias unregularized). Labels are {0,1}.
inline LinearClassifier svm_fit(const DesignMatrix& x,
                                const std::vector<int>& y, double reg,
                                std::size_t epochs, std::uint64_t seed) {
  if (x.rows() != y.size()) throw ShapeError("svm_fit: rows(X) != len(y)");
  bool has0 = false, has1 = false;
  for (int v : y) (v == 0 ? has0 : has1) = true;
  if (!has0 || !has1) throw DegenerateDataError("svm_fit: single-class input");
  if (!(reg > 0.0)) throw ConfigError("svm_fit: reg must be positive");

  const std::size_t n = x.rows(), p = x.cols();
  LinearClassifier clf;
  clf.weights.assign(p, 0.0);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  Rng rng = derive_stream(seed, 0);
  std::size_t t = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      ++t;
      double eta = 1.0 / (reg * static_cast<double>(t));
      double yy = y[i] == 1 ? 1.0 : -1.0;
      double margin = clf.bias;
      for (std::size_t j = 0; j < p; ++j) margin += clf.weights[j] * x.at(i, j);
      margin *= yy;
      double decay = 1.0 - eta * reg;
      for (std::size_t j = 0; j < p; ++j) clf.weights[j] *= decay;
      if (margin < 1.0) {
        for (std::size_t j = 0; j < p; ++j)
          clf.weights[j] += eta * yy * x.at(i, j);
        clf.bias += eta * yy;
      }
    }
  }
  return clf;
}

inline double hinge_loss(const LinearClassifier& clf, const DesignMatrix& x,
                         const std::vector<int>& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = clf.bias;
    for (std::size_t j = 0; j < x.cols(); ++j) s += clf.weights[j] * x.at(i, j);
    double yy = y[i] == 1 ? 1.0 : -1.0;
    total += std::max(0.0, 1.0 - yy * s);
  }
  return total / static_cast<double>(x.rows());
}

// ---------------------------------------------------------------------------
// Random forest (CART, Gini, bootstrap)

struct RfParams {
  std::size_t n_trees = 100;
  std::size_t max_features = 0;  // 0 = ceil(sqrt(cols))
  bool bootstrap = true;
  std::size_t min_leaf = 1;
  int jobs = 1;
};

struct TreeNode {
  int feature = -1;  // -1 = leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::size_t count0 = 0;
  std::size_t count1 = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  int predict(const std::vector<double>& x) const {
    std::size_t idx = 0;
    for (;;) {
      const TreeNode& nd = nodes[idx];
      if (nd.feature < 0) {
        if (nd.count1 > nd.count0) return 1;
        return 0;  // ties resolve to class 0
      }
      idx = static_cast<std::size_t>(
          x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left
                                                                  : nd.right);
    }
  }
};

struct RandomForest {
  std::vector<DecisionTree> trees;
  std::size_t cols = 0;
  RfParams params;

  int predict(const std::vector<double>& x) const {
    if (x.size() != cols) throw ShapeError("random forest dimension mismatch");
    std::size_t votes1 = 0;
    for (const auto& t : trees) votes1 += static_cast<std::size_t>(t.predict(x));
    return 2 * votes1 > trees.size() ? 1 : 0;  // tie -> class 0
  }
};

namespace detail {

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity = 0.0;
};

inline double gini(std::size_t c0, std::size_t c1) {
  double n = static_cast<double>(c0 + c1);
  if (n == 0.0) return 0.0;
  double p0 = static_cast<double>(c0) / n;
  double p1 = static_cast<double>(c1) / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

// Best axis-aligned split over `feats`, by weighted Gini. Ties keep the
// first candidate in (feature order, ascending threshold) for determinism.
inline SplitChoice best_split(const DesignMatrix& x, const std::vector<int>& y,
                              const std::vector<std::size_t>& samples,
                              const std::vector<std::size_t>& feats) {
  SplitChoice best;
  std::vector<std::pair<double, int>> vals;
  for (std::size_t f : feats) {
    vals.clear();
    vals.reserve(samples.size());
    for (std::size_t i : samples) vals.emplace_back(x.at(i, f), y[i]);
    std::sort(vals.begin(), vals.end());
    std::size_t total1 = 0;
    for (auto& [v, label] : vals) total1 += static_cast<std::size_t>(label);
    std::size_t left0 = 0, left1 = 0;
    for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
      (vals[i].second == 1 ? left1 : left0) += 1;
      if (vals[i].first == vals[i + 1].first) continue;
      std::size_t right1 = total1 - left1;
      std::size_t right0 = (vals.size() - i - 1) - right1;
      double nl = static_cast<double>(i + 1);
      double nr = static_cast<double>(vals.size() - i - 1);
      double imp = (nl * gini(left0, left1) + nr * gini(right0, right1)) /
                   static_cast<double>(vals.size());
      if (!best.found || imp < best.impurity - 1e-15) {
        best.found = true;
        best.feature = f;
        best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
        best.impurity = imp;
      }
    }
  }
  return best;
}

inline void grow_node(DecisionTree& tree, std::size_t node_idx,
                      const DesignMatrix& x, const std::vector<int>& y,
                      std::vector<std::size_t> samples, const RfParams& params,
                      std::size_t max_features, Rng& rng) {
  std::size_t c1 = 0;
  for (std::size_t i : samples) c1 += static_cast<std::size_t>(y[i]);
  std::size_t c0 = samples.size() - c1;
  tree.nodes[node_idx].count0 = c0;
  tree.nodes[node_idx].count1 = c1;
  if (c0 == 0 || c1 == 0 || samples.size() < 2 * params.min_leaf) return;

  // Draw max_features distinct candidate features (partial Fisher-Yates).
  std::vector<std::size_t> all(x.cols());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
  std::vector<std::size_t> feats;
  feats.reserve(max_features);
  for (std::size_t j = 0; j < max_features && j < all.size(); ++j) {
    std::size_t pick = j + static_cast<std::size_t>(
                               rng.uniform_int(all.size() - j));
    std::swap(all[j], all[pick]);
    feats.push_back(all[j]);
  }
  std::sort(feats.begin(), feats.end());

  SplitChoice split = best_split(x, y, samples, feats);
  if (!split.found) return;

  std::vector<std::size_t> left, right;
  for (std::size_t i : samples)
    (x.at(i, split.feature) <= split.threshold ? left : right).push_back(i);
  if (left.size() < params.min_leaf || right.size() < params.min_leaf) return;

  tree.nodes[node_idx].feature = static_cast<int>(split.feature);
  tree.nodes[node_idx].threshold = split.threshold;
  tree.nodes[node_idx].left = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes[node_idx].right = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  grow_node(tree, static_cast<std::size_t>(tree.nodes[node_idx].left), x, y,
            std::move(left), params, max_features, rng);
  grow_node(tree, static_cast<std::size_t>(tree.nodes[node_idx].right), x, y,
            std::move(right), params, max_features, rng);
}

}  // namespace detail

/// CART trees on bootstrap resamples, Gini impurity, grown to purity.
/// Tree t draws from stream(seed, t), so forests are bit-deterministic for
/// any jobs value.
inline RandomForest rf_fit(const DesignMatrix& x, const std::vector<int>& y,
                           RfParams params, std::uint64_t seed) {
  if (x.rows() != y.size()) throw ShapeError("rf_fit: rows(X) != len(y)");
  if (x.rows() < 2) throw DegenerateDataError("rf_fit: need at least 2 samples");
  bool has0 = false, has1 = false;
  for (int v : y) (v == 0 ? has0 : has1) = true;
  if (!has0 || !has1) throw DegenerateDataError("rf_fit: single-class input");

  std::size_t max_features = params.max_features;
  if (max_features == 0)
    max_features = static_cast<std::size_t>(
        std::ceil(std::sqrt(static_cast<double>(x.cols()))));
  max_features = std::min(max_features, x.cols());

  RandomForest forest;
  forest.cols = x.cols();
  forest.params = params;
  forest.trees.resize(params.n_trees);
  parallel_for(params.n_trees, params.jobs, [&](std::size_t t) {
    Rng rng = derive_stream(seed, t);
    std::vector<std::size_t> samples;
    samples.reserve(x.rows());
    if (params.bootstrap) {
      for (std::size_t i = 0; i < x.rows(); ++i)
        samples.push_back(static_cast<std::size_t>(rng.uniform_int(x.rows())));
    } else {
      for (std::size_t i = 0; i < x.rows(); ++i) samples.push_back(i);
    }
    DecisionTree& tree = forest.trees[t];
    tree.nodes.emplace_back();
    detail::grow_node(tree, 0, x, y, std::move(samples), params, max_features,
                      rng);
  });
  return forest;
}

// ---------------------------------------------------------------------------
// JSON serialization

inline nlohmann::json to_json(const SparseLinearModel& m) {
  std::vector<int> idx;
  std::vector<double> val;
  for (const auto& [j, w] : m.weights) {
    idx.push_back(j);
    val.push_back(w);
  }
  return {{"intercept", m.intercept},
          {"lambda", m.lambda},
          {"indices", idx},
          {"values", val}};
}

inline SparseLinearModel sparse_linear_from_json(const nlohmann::json& j) {
  SparseLinearModel m;
  m.intercept = j.at("intercept").get<double>();
  m.lambda = j.at("lambda").get<double>();
  auto idx = j.at("indices").get<std::vector<int>>();
  auto val = j.at("values").get<std::vector<double>>();
  if (idx.size() != val.size())
    throw FormatError("sparse model: indices/values length mismatch");
  for (std::size_t i = 0; i < idx.size(); ++i) m.weights[idx[i]] = val[i];
  return m;
}

inline nlohmann::json to_json(const RandomForest& f) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : f.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& nd : t.nodes)
      nodes.push_back({{"feature", nd.feature},
                       {"threshold", nd.threshold},
                       {"left", nd.left},
                       {"right", nd.right},
                       {"count0", nd.count0},
                       {"count1", nd.count1}});
    trees.push_back(std::move(nodes));
  }
  return {{"cols", f.cols}, {"trees", std::move(trees)}};
}

inline RandomForest forest_from_json(const nlohmann::json& j) {
  RandomForest f;
  f.cols = j.at("cols").get<std::size_t>();
  for (const auto& tj : j.at("trees")) {
    DecisionTree t;
    for (const auto& nj : tj) {
      TreeNode nd;
      nd.feature = nj.at("feature").get<int>();
      nd.threshold = nj.at("threshold").get<double>();
      nd.left = nj.at("left").get<int>();
      nd.right = nj.at("right").get<int>();
      nd.count0 = nj.at("count0").get<std::size_t>();
      nd.count1 = nj.at("count1").get<std::size_t>();
      t.nodes.push_back(nd);
    }
    f.trees.push_back(std::move(t));
  }
  return f;
}

}  // namespace milab::learners
