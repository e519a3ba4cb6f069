#pragma once

// From-scratch regression learners: a CART-style variance-reduction tree, a
// bootstrap-aggregated forest, and closed-form ridge. Node statistics and
// normal-equation sums are accumulated in value-canonical order, so fits are
// exactly invariant under permutation of the training rows (bootstrap draws
// excepted, since resampling is index-based).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "railmarkov/log.hpp"
#include "railmarkov/rng.hpp"
#include "railmarkov/util.hpp"

namespace railmarkov {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
  const double* row(std::size_t r) const { return a.data() + r * cols; }

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != m.cols) throw Error("Matrix::from_rows: ragged rows");
      std::copy(rows[r].begin(), rows[r].end(), m.a.begin() + long(r * m.cols));
    }
    return m;
  }
};

struct ForestParams {
  int n_trees = 100;
  int max_depth = -1;  // unlimited
  int min_samples_leaf = 1;
  int min_samples_split = 2;
  double features_per_split = 1.0 / 3.0;  // fraction of features, rounded up
  bool bootstrap = true;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"n_trees", n_trees},
            {"max_depth", max_depth},
            {"min_samples_leaf", min_samples_leaf},
            {"min_samples_split", min_samples_split},
            {"features_per_split", features_per_split},
            {"bootstrap", bootstrap},
            {"seed", seed}};
  }

  static ForestParams from_json(const nlohmann::json& j) {
    ForestParams p;
    p.n_trees = j.at("n_trees").get<int>();
    p.max_depth = j.at("max_depth").get<int>();
    p.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    p.min_samples_split = j.at("min_samples_split").get<int>();
    p.features_per_split = j.at("features_per_split").get<double>();
    p.bootstrap = j.at("bootstrap").get<bool>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
  }
};

struct TreeNode {
  int feature = -1;  // -1: leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  double value = 0;  // leaf mean

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const std::vector<double>& x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const TreeNode& nd = nodes[i];
      if (x.at(std::size_t(nd.feature)) <= nd.threshold) {
        i = std::size_t(nd.left);
      } else {
        i = std::size_t(nd.right);
      }
    }
    return nodes[i].value;
  }
};

namespace detail {

// Mean over a value-canonical (sorted) order; a pure sample short-circuits to
// the common value so memorizing trees reproduce targets bit-exactly.
inline double canonical_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  if (values.front() == values.back()) return values.front();
  double sum = 0;
  for (double v : values) sum += v;
  return sum / double(values.size());
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0;
  double cost = std::numeric_limits<double>::infinity();
};

class TreeFitter {
 public:
  TreeFitter(const Matrix& x, const std::vector<double>& y, const ForestParams& params, Rng& rng)
      : x_(x), y_(y), params_(params), rng_(rng) {}

  RegressionTree fit(std::vector<std::size_t> samples) {
    RegressionTree tree;
    build(tree, std::move(samples), 0);
    return tree;
  }

 private:
  // Depth-first; returns the created node's index.
  int build(RegressionTree& tree, std::vector<std::size_t> samples, int depth) {
    int node_index = int(tree.nodes.size());
    tree.nodes.emplace_back();

    bool pure = is_pure(samples);
    bool depth_stop = params_.max_depth >= 0 && depth >= params_.max_depth;
    bool size_stop = samples.size() < std::size_t(params_.min_samples_split);
    SplitChoice choice;
    if (!pure && !depth_stop && !size_stop) choice = best_split(samples);

    if (choice.feature < 0) {
      std::vector<double> targets(samples.size());
      for (std::size_t i = 0; i < samples.size(); ++i) targets[i] = y_[samples[i]];
      tree.nodes[std::size_t(node_index)].value = canonical_mean(std::move(targets));
      return node_index;
    }

    std::vector<std::size_t> left, right;
    for (std::size_t s : samples) {
      if (x_.at(s, std::size_t(choice.feature)) <= choice.threshold) {
        left.push_back(s);
      } else {
        right.push_back(s);
      }
    }
    samples.clear();
    samples.shrink_to_fit();

    int l = build(tree, std::move(left), depth + 1);
    int r = build(tree, std::move(right), depth + 1);
    TreeNode& nd = tree.nodes[std::size_t(node_index)];
    nd.feature = choice.feature;
    nd.threshold = choice.threshold;
    nd.left = l;
    nd.right = r;
    return node_index;
  }

  bool is_pure(const std::vector<std::size_t>& samples) const {
    double lo = y_[samples[0]], hi = lo;
    for (std::size_t s : samples) {
      lo = std::min(lo, y_[s]);
      hi = std::max(hi, y_[s]);
    }
    return lo == hi;
  }

  // Minimum summed child SSE over midpoint thresholds of a random feature
  // subset. Candidates are scanned in ascending (feature, threshold) order
  // with strict improvement only, which realizes the documented tie-break.
  SplitChoice best_split(const std::vector<std::size_t>& samples) {
    std::size_t d = x_.cols;
    std::size_t m = std::size_t(std::ceil(params_.features_per_split * double(d)));
    m = std::min(std::max<std::size_t>(m, 1), d);
    std::vector<std::size_t> features;
    if (m == d) {
      features.resize(d);
      std::iota(features.begin(), features.end(), 0);
    } else {
      features = rng_.sample_indices(d, m);
      std::sort(features.begin(), features.end());
    }

    std::size_t k = samples.size();
    std::size_t min_leaf = std::size_t(params_.min_samples_leaf);
    SplitChoice best;
    std::vector<std::pair<double, double>> pairs(k);
    std::vector<double> pre_y(k + 1), pre_y2(k + 1);
    for (std::size_t f : features) {
      for (std::size_t i = 0; i < k; ++i) {
        pairs[i] = {x_.at(samples[i], f), y_[samples[i]]};
      }
      std::sort(pairs.begin(), pairs.end());
      if (pairs.front().first == pairs.back().first) continue;  // constant feature
      pre_y[0] = pre_y2[0] = 0;
      for (std::size_t i = 0; i < k; ++i) {
        pre_y[i + 1] = pre_y[i] + pairs[i].second;
        pre_y2[i + 1] = pre_y2[i] + pairs[i].second * pairs[i].second;
      }
      for (std::size_t s = min_leaf; s + min_leaf <= k; ++s) {
        if (s == 0 || s == k) continue;
        if (pairs[s - 1].first == pairs[s].first) continue;
        double nl = double(s), nr = double(k - s);
        double sse_l = std::max(0.0, pre_y2[s] - pre_y[s] * pre_y[s] / nl);
        double sum_r = pre_y[k] - pre_y[s];
        double sse_r = std::max(0.0, (pre_y2[k] - pre_y2[s]) - sum_r * sum_r / nr);
        double cost = sse_l + sse_r;
        if (cost < best.cost) {
          double lo_v = pairs[s - 1].first, hi_v = pairs[s].first;
          double thr = lo_v + (hi_v - lo_v) / 2.0;
          // values one ulp apart can round the midpoint up to hi_v, which
          // would send every row left under the <= rule
          if (!(thr < hi_v)) thr = lo_v;
          best.cost = cost;
          best.feature = int(f);
          best.threshold = thr;
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  const std::vector<double>& y_;
  const ForestParams& params_;
  Rng& rng_;
};

}  // namespace detail

inline RegressionTree fit_tree(const Matrix& x, const std::vector<double>& y,
                               const ForestParams& params, Rng& rng) {
  if (x.rows != y.size() || x.rows == 0) {
    throw Error("fit_tree: X rows must match y length and be >= 1");
  }
  std::vector<std::size_t> samples(x.rows);
  std::iota(samples.begin(), samples.end(), 0);
  detail::TreeFitter fitter(x, y, params, rng);
  return fitter.fit(std::move(samples));
}

struct Forest {
  std::vector<RegressionTree> trees;
  ForestParams params;
  std::size_t n_features = 0;
};

inline Forest fit_forest(const Matrix& x, const std::vector<double>& y,
                         const ForestParams& params) {
  if (x.rows == 0) throw Error("fit_forest: empty training frame");
  if (x.rows != y.size()) throw Error("fit_forest: X rows must match y length");
  if (params.n_trees < 1) throw Error("fit_forest: n_trees must be >= 1");
  if (!(params.features_per_split > 0.0 && params.features_per_split <= 1.0)) {
    throw Error("fit_forest: features_per_split must be in (0, 1]");
  }

  Forest forest;
  forest.params = params;
  forest.n_features = x.cols;
  forest.trees.resize(std::size_t(params.n_trees));
  parallel_for(std::size_t(params.n_trees), [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, t));
    std::vector<std::size_t> samples(x.rows);
    if (params.bootstrap) {
      for (std::size_t i = 0; i < x.rows; ++i) samples[i] = std::size_t(rng.below(x.rows));
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    detail::TreeFitter fitter(x, y, params, rng);
    forest.trees[t] = fitter.fit(std::move(samples));
  });
  return forest;
}

inline double predict_forest(const Forest& forest, const std::vector<double>& x) {
  if (x.size() != forest.n_features) throw Error("predict_forest: feature width mismatch");
  double sum = 0;
  for (const RegressionTree& tree : forest.trees) sum += tree.predict(x);
  return sum / double(forest.trees.size());
}

struct RidgeOptions {
  double lambda = 1.0;
  bool standardize = true;  // divide columns by their (population) sd
  bool intercept = true;    // center columns and fit an unpenalized mean term
};

struct RidgeModel {
  std::vector<double> weights;
  double intercept = 0;
  double lambda = 0;
  std::vector<double> means;   // applied as (x - mean) / scale
  std::vector<double> scales;

  nlohmann::json to_json() const {
    return {{"weights", weights}, {"intercept", intercept}, {"lambda", lambda},
            {"means", means},     {"scales", scales}};
  }

  static RidgeModel from_json(const nlohmann::json& j) {
    RidgeModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.means = j.at("means").get<std::vector<double>>();
    m.scales = j.at("scales").get<std::vector<double>>();
    return m;
  }
};

namespace detail {

// Lower-triangular Cholesky; empty optional when A is not positive definite.
inline std::optional<std::vector<double>> cholesky_solve(std::vector<double> a, std::size_t d,
                                                         std::vector<double> b) {
  for (std::size_t j = 0; j < d; ++j) {
    double diag = a[j * d + j];
    for (std::size_t k = 0; k < j; ++k) diag -= a[j * d + k] * a[j * d + k];
    if (!(diag > 0.0)) return std::nullopt;
    double root = std::sqrt(diag);
    a[j * d + j] = root;
    for (std::size_t i = j + 1; i < d; ++i) {
      double v = a[i * d + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * d + k] * a[j * d + k];
      a[i * d + j] = v / root;
    }
  }
  // forward then back substitution
  for (std::size_t i = 0; i < d; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= a[i * d + k] * b[k];
    b[i] = v / a[i * d + i];
  }
  for (std::size_t ii = d; ii-- > 0;) {
    double v = b[ii];
    for (std::size_t k = ii + 1; k < d; ++k) v -= a[k * d + ii] * b[k];
    b[ii] = v / a[ii * d + ii];
  }
  return b;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix; used only for the
// minimum-norm fallback when the normal equations are singular.
inline void jacobi_eigen(std::vector<double> a, std::size_t d, std::vector<double>& eigvals,
                         std::vector<double>& eigvecs) {
  eigvecs.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eigvecs[i * d + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    }
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        double apq = a[p * d + q];
        if (apq == 0.0) continue;
        double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          double vkp = eigvecs[k * d + p], vkq = eigvecs[k * d + q];
          eigvecs[k * d + p] = c * vkp - s * vkq;
          eigvecs[k * d + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  eigvals.resize(d);
  for (std::size_t i = 0; i < d; ++i) eigvals[i] = a[i * d + i];
}

inline std::vector<double> min_norm_solve(const std::vector<double>& a, std::size_t d,
                                          const std::vector<double>& b) {
  std::vector<double> eigvals, v;
  jacobi_eigen(a, d, eigvals, v);
  double max_abs = 0;
  for (double e : eigvals) max_abs = std::max(max_abs, std::abs(e));
  double cutoff = max_abs * double(d) * 1e-14;
  std::vector<double> w(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    if (std::abs(eigvals[i]) <= cutoff) continue;
    double vtb = 0;
    for (std::size_t k = 0; k < d; ++k) vtb += v[k * d + i] * b[k];
    double coeff = vtb / eigvals[i];
    for (std::size_t k = 0; k < d; ++k) w[k] += coeff * v[k * d + i];
  }
  return w;
}

// Canonical row order: lexicographic by (features, target). Makes all the
// accumulated sums independent of the caller's row ordering.
inline std::vector<std::size_t> canonical_row_order(const Matrix& x, const std::vector<double>& y) {
  std::vector<std::size_t> order(x.rows);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    for (std::size_t c = 0; c < x.cols; ++c) {
      double a = x.at(l, c), b = x.at(r, c);
      if (a != b) return a < b;
    }
    return y[l] < y[r];
  });
  return order;
}

struct RidgeSystem {
  std::vector<double> a;  // (Xs^T Xs + lambda I), d x d
  std::vector<double> b;  // Xs^T (y - y_mean)
  std::size_t d = 0;
};

inline RidgeSystem ridge_system(const RidgeModel& model, const Matrix& x,
                                const std::vector<double>& y) {
  std::size_t d = x.cols;
  auto order = canonical_row_order(x, y);
  double y_mean = model.intercept;
  RidgeSystem sys;
  sys.d = d;
  sys.a.assign(d * d, 0.0);
  sys.b.assign(d, 0.0);
  std::vector<double> xs(d);
  for (std::size_t r : order) {
    for (std::size_t c = 0; c < d; ++c) {
      xs[c] = (x.at(r, c) - model.means[c]) / model.scales[c];
    }
    double yc = y[r] - y_mean;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) sys.a[i * d + j] += xs[i] * xs[j];
      sys.b[i] += xs[i] * yc;
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) sys.a[i * d + j] = sys.a[j * d + i];
    sys.a[i * d + i] += model.lambda;
  }
  return sys;
}

}  // namespace detail

inline RidgeModel fit_ridge(const Matrix& x, const std::vector<double>& y,
                            const RidgeOptions& opt = {}) {
  if (x.rows != y.size() || x.rows == 0) {
    throw Error("fit_ridge: X rows must match y length and be >= 1");
  }
  if (opt.lambda < 0) throw Error("fit_ridge: lambda must be >= 0");
  for (double v : x.a) {
    if (!std::isfinite(v)) throw Error("fit_ridge: non-finite feature value");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw Error("fit_ridge: non-finite target value");
  }

  std::size_t d = x.cols;
  std::size_t n = x.rows;
  auto order = detail::canonical_row_order(x, y);

  RidgeModel model;
  model.lambda = opt.lambda;
  model.means.assign(d, 0.0);
  model.scales.assign(d, 1.0);
  if (opt.intercept) {
    for (std::size_t c = 0; c < d; ++c) {
      double sum = 0;
      for (std::size_t r : order) sum += x.at(r, c);
      model.means[c] = sum / double(n);
    }
    double ysum = 0;
    for (std::size_t r : order) ysum += y[r];
    model.intercept = ysum / double(n);
  }
  if (opt.standardize) {
    for (std::size_t c = 0; c < d; ++c) {
      double ss = 0;
      for (std::size_t r : order) {
        double v = x.at(r, c) - model.means[c];
        ss += v * v;
      }
      double sd = std::sqrt(ss / double(n));
      if (sd > 0) model.scales[c] = sd;
    }
  }

  detail::RidgeSystem sys = detail::ridge_system(model, x, y);
  auto solved = detail::cholesky_solve(sys.a, d, sys.b);
  if (solved) {
    model.weights = std::move(*solved);
  } else {
    log::warn("ridge normal equations are singular, using minimum-norm solution");
    model.weights = detail::min_norm_solve(sys.a, d, sys.b);
  }
  return model;
}

inline double predict_ridge(const RidgeModel& model, const std::vector<double>& x) {
  if (x.size() != model.weights.size()) throw Error("predict_ridge: feature width mismatch");
  double acc = model.intercept;
  for (std::size_t c = 0; c < x.size(); ++c) {
    acc += model.weights[c] * (x[c] - model.means[c]) / model.scales[c];
  }
  return acc;
}

struct RidgeResidual {
  double residual_inf = 0;  // ||(Xs^T Xs + lambda I) w - Xs^T yc||_inf
  double rhs_inf = 0;       // ||Xs^T yc||_inf
};

// Re-derives the solved system from the stored standardization and reports
// the normal-equation residual; used by the fit-quality invariant checks.
inline RidgeResidual ridge_normal_residual(const RidgeModel& model, const Matrix& x,
                                           const std::vector<double>& y) {
  detail::RidgeSystem sys = detail::ridge_system(model, x, y);
  RidgeResidual out;
  for (std::size_t i = 0; i < sys.d; ++i) {
    double lhs = 0;
    for (std::size_t j = 0; j < sys.d; ++j) lhs += sys.a[i * sys.d + j] * model.weights[j];
    out.residual_inf = std::max(out.residual_inf, std::abs(lhs - sys.b[i]));
    out.rhs_inf = std::max(out.rhs_inf, std::abs(sys.b[i]));
  }
  return out;
}

// Serialization ------------------------------------------------------------

inline nlohmann::json tree_to_json(const RegressionTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const TreeNode& nd : tree.nodes) {
    if (nd.is_leaf()) {
      nodes.push_back({{"v", nd.value}});
    } else {
      nodes.push_back({{"f", nd.feature}, {"t", nd.threshold}, {"l", nd.left}, {"r", nd.right}});
    }
  }
  return nodes;
}

inline RegressionTree tree_from_json(const nlohmann::json& j) {
  RegressionTree tree;
  for (const auto& nj : j) {
    TreeNode nd;
    if (nj.contains("v")) {
      nd.value = nj.at("v").get<double>();
    } else {
      nd.feature = nj.at("f").get<int>();
      nd.threshold = nj.at("t").get<double>();
      nd.left = nj.at("l").get<int>();
      nd.right = nj.at("r").get<int>();
    }
    tree.nodes.push_back(nd);
  }
  return tree;
}

inline nlohmann::json forest_to_json(const Forest& forest) {
  nlohmann::json trees = nlohmann::json::array();
  for (const RegressionTree& t : forest.trees) trees.push_back(tree_to_json(t));
  return {{"params", forest.params.to_json()},
          {"n_features", forest.n_features},
          {"trees", trees}};
}

inline Forest forest_from_json(const nlohmann::json& j) {
  Forest f;
  f.params = ForestParams::from_json(j.at("params"));
  f.n_features = j.at("n_features").get<std::size_t>();
  for (const auto& tj : j.at("trees")) f.trees.push_back(tree_from_json(tj));
  return f;
}

}  // namespace railmarkov
