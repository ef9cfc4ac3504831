#ifndef APA_BOOSTING_HPP
#define APA_BOOSTING_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "apa/tree.hpp"

namespace apa {

/// One-versus-rest boosted ensemble produced by the imbalance-aware trainer.
struct BinaryEnsemble {
  struct Member {
    std::unique_ptr<TreeNode> tree;
    double alpha = 0.0;
  };
  std::vector<Member> members;
  int iterations = 0;  // J
  std::uint64_t seed = 0;

  BinaryEnsemble() = default;
  BinaryEnsemble(BinaryEnsemble&&) = default;
  BinaryEnsemble& operator=(BinaryEnsemble&&) = default;
  BinaryEnsemble clone() const;
};

struct ClassPartition {
  std::vector<int> small_idx;  // minority class instance indices
  std::vector<int> large_idx;  // majority class instance indices
  int small_label = +1;        // label carried by the minority side
  int iterations = 0;          // J = max(1, floor(|L|/|S|))
};

/// Splits instances by label; swaps roles if +1 outnumbers -1 so the
/// "small" side is always the minority.
ClassPartition partition_classes(const std::vector<int>& labels);

/// Seeded shuffle-split of the majority indices into J parts whose sizes
/// differ by at most one.
std::vector<std::vector<int>> sample_large_class(const std::vector<int>& large_idx,
                                                 int j, std::uint64_t seed);

/// Pearson correlation between the column means of two instance sets;
/// majority-chunk instances get clamp(1-|r|, 0.01, 1), others weight 1.
double chunk_weight(const Eigen::MatrixXd& x, const std::vector<int>& small_idx,
                    const std::vector<int>& chunk_idx);

struct BoostParams {
  TreeParams tree;
  double epsilon_clamp = 1e-6;
  double weight_floor = 0.01;
  bool per_instance_weighting = false;  // labeled deviation, off by default
};

/// Member weight alpha = 0.5 * ln((1-eps)/eps), with eps clamped away
/// from 0 and 1.
double boost_alpha(double eps, double clamp = 1e-6);

BinaryEnsemble train_binary(const Eigen::MatrixXd& x, const std::vector<int>& y,
                            const BoostParams& params, std::uint64_t seed);

struct BinaryPrediction {
  int label = +1;
  double margin = 0.0;  // sum of alpha * vote
};

BinaryPrediction predict_binary(const BinaryEnsemble& ensemble,
                                const Eigen::VectorXd& x);

}  // namespace apa

#endif
