#ifndef APA_TREE_HPP
#define APA_TREE_HPP

#include <Eigen/Dense>
#include <memory>
#include <vector>

namespace apa {

struct TreeParams {
  int max_depth = 8;
  double min_leaf_weight_fraction = 1e-3;  // of total weight
};

/// CART node: internal split (x[feature] <= threshold goes left) or a
/// +-1 leaf.
struct TreeNode {
  bool is_leaf = true;
  int label = +1;           // leaf
  double purity = 0.0;      // leaf: weighted majority fraction
  int feature = -1;         // internal
  double threshold = 0.0;
  std::unique_ptr<TreeNode> left;
  std::unique_ptr<TreeNode> right;

  std::unique_ptr<TreeNode> clone() const;
};

/// Greedy weighted-Gini CART on columns of X (instances are columns).
/// Ties break to the lowest feature index, then lowest threshold.
std::unique_ptr<TreeNode> train_tree(const Eigen::MatrixXd& x,
                                     const std::vector<int>& y,
                                     const std::vector<double>& w,
                                     const TreeParams& params = {});

int predict_tree(const TreeNode& tree, const Eigen::VectorXd& x);

}  // namespace apa

#endif
