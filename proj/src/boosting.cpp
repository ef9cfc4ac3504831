#include "apa/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "apa/error.hpp"
#include "apa/rng.hpp"

namespace apa {

BinaryEnsemble BinaryEnsemble::clone() const {
  BinaryEnsemble out;
  out.iterations = iterations;
  out.seed = seed;
  for (const auto& m : members) {
    Member c;
    c.tree = m.tree->clone();
    c.alpha = m.alpha;
    out.members.push_back(std::move(c));
  }
  return out;
}

ClassPartition partition_classes(const std::vector<int>& labels) {
  ClassPartition p;
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (labels[i] > 0 ? pos : neg).push_back(static_cast<int>(i));
  if (pos.empty() || neg.empty())
    throw Error::validation("boost.single_class",
                            "both labels must be present for boosting");
  if (pos.size() <= neg.size()) {
    p.small_idx = pos;
    p.large_idx = neg;
    p.small_label = +1;
  } else {
    p.small_idx = neg;
    p.large_idx = pos;
    p.small_label = -1;
  }
  p.iterations = std::max<int>(
      1, static_cast<int>(p.large_idx.size() / p.small_idx.size()));
  return p;
}

std::vector<std::vector<int>> sample_large_class(const std::vector<int>& large_idx,
                                                 int j, std::uint64_t seed) {
  if (j < 1)
    throw Error::validation("boost.bad_iterations", "J must be >= 1");
  std::vector<int> shuffled(large_idx);
  Pcg32 rng(seed);
  rng.shuffle(shuffled);

  std::vector<std::vector<int>> parts(static_cast<std::size_t>(j));
  std::size_t base = shuffled.size() / static_cast<std::size_t>(j);
  std::size_t rem = shuffled.size() % static_cast<std::size_t>(j);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < static_cast<std::size_t>(j); ++k) {
    std::size_t take = base + (k < rem ? 1 : 0);
    parts[k].assign(shuffled.begin() + static_cast<std::ptrdiff_t>(pos),
                    shuffled.begin() + static_cast<std::ptrdiff_t>(pos + take));
    pos += take;
  }
  return parts;
}

namespace {

Eigen::VectorXd column_mean(const Eigen::MatrixXd& x, const std::vector<int>& idx) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(x.rows());
  for (int i : idx) mean += x.col(i);
  return mean / static_cast<double>(idx.size());
}

// Pearson correlation; returns 0 when either side has zero variance.
double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double ma = a.mean(), mb = b.mean();
  Eigen::VectorXd ca = a.array() - ma, cb = b.array() - mb;
  double sa = ca.norm(), sb = cb.norm();
  if (sa <= 1e-300 || sb <= 1e-300) return 0.0;
  return ca.dot(cb) / (sa * sb);
}

}  // namespace

double chunk_weight(const Eigen::MatrixXd& x, const std::vector<int>& small_idx,
                    const std::vector<int>& chunk_idx) {
  if (x.rows() < 2)
    throw Error::validation("boost.too_few_features",
                            "correlation weighting needs feature dimension >= 2");
  double r = pearson(column_mean(x, small_idx), column_mean(x, chunk_idx));
  return std::clamp(1.0 - std::abs(r), 0.01, 1.0);
}

double boost_alpha(double eps, double clamp) {
  eps = std::clamp(eps, clamp, 1.0 - clamp);
  return 0.5 * std::log((1.0 - eps) / eps);
}

BinaryEnsemble train_binary(const Eigen::MatrixXd& x, const std::vector<int>& y,
                            const BoostParams& params, std::uint64_t seed) {
  if (static_cast<std::size_t>(x.cols()) != y.size())
    throw Error::validation("boost.size_mismatch",
                            "label count must match instance count");
  ClassPartition part = partition_classes(y);
  auto chunks = sample_large_class(part.large_idx, part.iterations, seed);

  std::set<int> small_set(part.small_idx.begin(), part.small_idx.end());
  Eigen::VectorXd small_mean = column_mean(x, part.small_idx);

  BinaryEnsemble ensemble;
  ensemble.iterations = part.iterations;
  ensemble.seed = seed;

  std::vector<int> carried;  // X-bar: previous iteration's failures
  for (int n = 0; n < part.iterations; ++n) {
    // Training set: small class + n-th chunk + carried failures, deduplicated
    // by instance identity.
    std::set<int> carried_set(carried.begin(), carried.end());
    std::vector<int> train_idx(part.small_idx);
    train_idx.insert(train_idx.end(), chunks[static_cast<std::size_t>(n)].begin(),
                     chunks[static_cast<std::size_t>(n)].end());
    for (int i : carried)
      if (std::find(train_idx.begin(), train_idx.end(), i) == train_idx.end())
        train_idx.push_back(i);

    double lw = params.per_instance_weighting
                    ? 1.0
                    : chunk_weight(x, part.small_idx,
                                   chunks[static_cast<std::size_t>(n)]);

    Eigen::MatrixXd xt(x.rows(), static_cast<Eigen::Index>(train_idx.size()));
    std::vector<int> yt(train_idx.size());
    std::vector<double> wt(train_idx.size());
    for (std::size_t k = 0; k < train_idx.size(); ++k) {
      int i = train_idx[k];
      xt.col(static_cast<Eigen::Index>(k)) = x.col(i);
      yt[k] = y[static_cast<std::size_t>(i)];
      if (small_set.count(i) || carried_set.count(i)) {
        wt[k] = 1.0;
      } else if (params.per_instance_weighting) {
        double r = pearson(x.col(i), small_mean);
        wt[k] = std::clamp(1.0 - std::abs(r), params.weight_floor, 1.0);
      } else {
        wt[k] = std::clamp(lw, params.weight_floor, 1.0);
      }
    }

    auto tree = train_tree(xt, yt, wt, params.tree);

    std::vector<int> failed;
    for (std::size_t k = 0; k < train_idx.size(); ++k)
      if (predict_tree(*tree, xt.col(static_cast<Eigen::Index>(k))) != yt[k])
        failed.push_back(train_idx[k]);

    double eps = static_cast<double>(failed.size()) /
                 static_cast<double>(train_idx.size());

    BinaryEnsemble::Member member;
    member.tree = std::move(tree);
    member.alpha = boost_alpha(eps, params.epsilon_clamp);
    ensemble.members.push_back(std::move(member));

    carried = std::move(failed);
  }
  return ensemble;
}

BinaryPrediction predict_binary(const BinaryEnsemble& ensemble,
                                const Eigen::VectorXd& x) {
  BinaryPrediction out;
  for (const auto& m : ensemble.members)
    out.margin += m.alpha * predict_tree(*m.tree, x);
  out.label = out.margin < 0.0 ? -1 : +1;  // margin 0 -> +1
  return out;
}

}  // namespace apa
