#include "apa/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "apa/error.hpp"

namespace apa {

std::unique_ptr<TreeNode> TreeNode::clone() const {
  auto n = std::make_unique<TreeNode>();
  n->is_leaf = is_leaf;
  n->label = label;
  n->purity = purity;
  n->feature = feature;
  n->threshold = threshold;
  if (left) n->left = left->clone();
  if (right) n->right = right->clone();
  return n;
}

namespace {

struct Split {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;
};

double gini(double wpos, double wneg) {
  double w = wpos + wneg;
  if (w <= 0.0) return 0.0;
  double p = wpos / w, q = wneg / w;
  return 1.0 - p * p - q * q;
}

std::unique_ptr<TreeNode> make_leaf(const std::vector<int>& y,
                                    const std::vector<double>& w,
                                    const std::vector<int>& idx) {
  double wpos = 0.0, wneg = 0.0;
  for (int i : idx) (y[static_cast<std::size_t>(i)] > 0 ? wpos : wneg) += w[static_cast<std::size_t>(i)];
  auto leaf = std::make_unique<TreeNode>();
  leaf->is_leaf = true;
  leaf->label = wpos >= wneg ? +1 : -1;  // tie -> +1
  double total = wpos + wneg;
  leaf->purity = total > 0.0 ? std::max(wpos, wneg) / total : 1.0;
  return leaf;
}

Split best_split(const Eigen::MatrixXd& x, const std::vector<int>& y,
                 const std::vector<double>& w, const std::vector<int>& idx,
                 double min_child_weight) {
  Split best;
  const auto e = x.rows();
  std::vector<int> order(idx);

  for (Eigen::Index f = 0; f < e; ++f) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      double va = x(f, a), vb = x(f, b);
      if (va != vb) return va < vb;
      return a < b;
    });
    // Prefix sums of weights by class along the sorted order.
    double lpos = 0.0, lneg = 0.0, tpos = 0.0, tneg = 0.0;
    for (int i : order)
      (y[static_cast<std::size_t>(i)] > 0 ? tpos : tneg) += w[static_cast<std::size_t>(i)];

    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      int i = order[k];
      (y[static_cast<std::size_t>(i)] > 0 ? lpos : lneg) += w[static_cast<std::size_t>(i)];
      double v = x(f, i), vn = x(f, order[k + 1]);
      if (v == vn) continue;  // thresholds only between distinct values
      double wl = lpos + lneg, wr = (tpos - lpos) + (tneg - lneg);
      if (wl < min_child_weight || wr < min_child_weight) continue;
      double imp = wl * gini(lpos, lneg) + wr * gini(tpos - lpos, tneg - lneg);
      double threshold = 0.5 * (v + vn);
      // Ties break to lowest feature index, then lowest threshold.
      if (!best.found || imp < best.impurity - 1e-15) {
        best.found = true;
        best.feature = static_cast<int>(f);
        best.threshold = threshold;
        best.impurity = imp;
      }
    }
  }
  return best;
}

std::unique_ptr<TreeNode> build(const Eigen::MatrixXd& x,
                                const std::vector<int>& y,
                                const std::vector<double>& w,
                                const std::vector<int>& idx, int depth,
                                const TreeParams& params,
                                double min_child_weight) {
  bool pure = true;
  for (std::size_t k = 1; k < idx.size(); ++k)
    if (y[static_cast<std::size_t>(idx[k])] != y[static_cast<std::size_t>(idx[0])]) {
      pure = false;
      break;
    }
  if (pure || depth >= params.max_depth) return make_leaf(y, w, idx);

  Split split = best_split(x, y, w, idx, min_child_weight);
  if (!split.found) return make_leaf(y, w, idx);

  std::vector<int> left_idx, right_idx;
  for (int i : idx)
    (x(split.feature, i) <= split.threshold ? left_idx : right_idx).push_back(i);

  auto node = std::make_unique<TreeNode>();
  node->is_leaf = false;
  node->feature = split.feature;
  node->threshold = split.threshold;
  node->left = build(x, y, w, left_idx, depth + 1, params, min_child_weight);
  node->right = build(x, y, w, right_idx, depth + 1, params, min_child_weight);
  return node;
}

}  // namespace

std::unique_ptr<TreeNode> train_tree(const Eigen::MatrixXd& x,
                                     const std::vector<int>& y,
                                     const std::vector<double>& w,
                                     const TreeParams& params) {
  const auto n = static_cast<std::size_t>(x.cols());
  if (n == 0)
    throw Error::validation("tree.empty", "cannot train a tree on no instances");
  if (y.size() != n || w.size() != n)
    throw Error::validation("tree.size_mismatch",
                            "labels/weights must match instance count");
  double total = 0.0;
  for (double wi : w) {
    if (wi < 0.0)
      throw Error::validation("tree.negative_weight", "weights must be >= 0");
    total += wi;
  }
  if (total <= 0.0)
    throw Error::validation("tree.zero_weight", "weights must not all be zero");

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return build(x, y, w, idx, 0, params, params.min_leaf_weight_fraction * total);
}

int predict_tree(const TreeNode& tree, const Eigen::VectorXd& x) {
  const TreeNode* node = &tree;
  while (!node->is_leaf) {
    if (node->feature >= x.size())
      throw Error::validation("tree.dims_mismatch",
                              "instance has fewer features than the tree expects");
    node = x(node->feature) <= node->threshold ? node->left.get()
                                               : node->right.get();
  }
  return node->label;
}

}  // namespace apa
