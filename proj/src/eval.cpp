#include "apa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "apa/error.hpp"

namespace apa {

std::string subject_of(const std::string& session_id) {
  auto pos = session_id.find('_');
  return pos == std::string::npos ? session_id : session_id.substr(0, pos);
}

std::vector<Fold> loso_split(const FeatureMatrix& features) {
  features.validate();
  // Subjects in first-appearance order for a stable fold sequence.
  std::vector<std::string> subjects;
  for (const auto& s : features.sessions) {
    std::string subj = subject_of(s);
    if (std::find(subjects.begin(), subjects.end(), subj) == subjects.end())
      subjects.push_back(subj);
  }
  if (subjects.size() < 2)
    throw Error::validation("eval.single_subject",
                            "leave-one-subject-out needs >= 2 subjects");

  std::vector<Fold> folds;
  for (const auto& subj : subjects) {
    Fold fold;
    fold.subject = subj;
    for (std::size_t c = 0; c < features.sessions.size(); ++c)
      (subject_of(features.sessions[c]) == subj ? fold.test_columns
                                                : fold.train_columns)
          .push_back(static_cast<int>(c));
    folds.push_back(std::move(fold));
  }
  return folds;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size() || truth.empty())
    throw Error::validation("eval.size_mismatch",
                            "prediction/truth lengths must match and be nonempty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (predicted[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double auc(const std::vector<double>& margins, const std::vector<int>& truth) {
  if (margins.size() != truth.size() || truth.empty())
    throw Error::validation("eval.size_mismatch",
                            "margin/truth lengths must match and be nonempty");
  std::size_t n_pos = 0, n_neg = 0;
  for (int t : truth) (t > 0 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0)
    throw Error::validation("eval.single_class", "AUC needs both classes present");

  // Midrank assignment over the sorted margins.
  std::vector<std::size_t> order(margins.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return margins[a] < margins[b];
  });
  std::vector<double> rank(margins.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && margins[order[j + 1]] == margins[order[i]]) ++j;
    double mid = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k)
    if (truth[k] > 0) pos_rank_sum += rank[k];
  double u = pos_rank_sum - static_cast<double>(n_pos) *
                                (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& data,
                                   const std::vector<int>& labels,
                                   int category_count) {
  if (static_cast<std::size_t>(data.cols()) != labels.size())
    throw Error::validation("eval.size_mismatch",
                            "label count must match data columns");
  if (category_count < 2)
    throw Error::validation("eval.single_class",
                            "correlation matrix needs >= 2 categories");

  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(data.rows(), category_count);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(category_count);
  for (std::size_t c = 0; c < labels.size(); ++c) {
    int l = labels[c];
    if (l < 1 || l > category_count)
      throw Error::validation("eval.bad_label", "label outside 1..P");
    means.col(l - 1) += data.col(static_cast<Eigen::Index>(c));
    counts(l - 1) += 1.0;
  }
  for (int l = 0; l < category_count; ++l) {
    if (counts(l) <= 0.0)
      throw Error::validation("eval.missing_category",
                              "category " + std::to_string(l + 1) +
                                  " has no instances");
    means.col(l) /= counts(l);
  }

  Eigen::MatrixXd corr(category_count, category_count);
  std::vector<Eigen::VectorXd> centered(static_cast<std::size_t>(category_count));
  std::vector<double> norms(static_cast<std::size_t>(category_count));
  for (int l = 0; l < category_count; ++l) {
    Eigen::VectorXd c = means.col(l).array() - means.col(l).mean();
    double n = c.norm();
    if (n <= 1e-300)
      throw Error::numeric("eval.zero_variance",
                           "category " + std::to_string(l + 1) +
                               " mean vector has zero variance");
    centered[static_cast<std::size_t>(l)] = std::move(c);
    norms[static_cast<std::size_t>(l)] = n;
  }
  for (int a = 0; a < category_count; ++a)
    for (int b = 0; b < category_count; ++b)
      corr(a, b) = a == b ? 1.0
                          : centered[static_cast<std::size_t>(a)].dot(
                                centered[static_cast<std::size_t>(b)]) /
                                (norms[static_cast<std::size_t>(a)] *
                                 norms[static_cast<std::size_t>(b)]);
  return corr;
}

EvalReport evaluate(const FeatureMatrix& features, const EvalParams& params,
                    std::uint64_t seed) {
  auto folds = loso_split(features);
  int p = *std::max_element(features.labels.begin(), features.labels.end());

  EvalReport report;
  report.category_count = p;
  report.confusion = Eigen::MatrixXi::Zero(p, p);
  report.mean_binary_accuracy.assign(static_cast<std::size_t>(p), 0.0);
  report.mean_binary_auc.assign(static_cast<std::size_t>(p), 0.0);

  for (const auto& fold : folds) {
    FeatureMatrix train, test;
    auto take = [&](const std::vector<int>& cols, FeatureMatrix& dst) {
      dst.features.resize(features.features.rows(),
                          static_cast<Eigen::Index>(cols.size()));
      for (std::size_t k = 0; k < cols.size(); ++k) {
        dst.features.col(static_cast<Eigen::Index>(k)) =
            features.features.col(cols[k]);
        dst.labels.push_back(features.labels[static_cast<std::size_t>(cols[k])]);
        dst.sessions.push_back(
            features.sessions[static_cast<std::size_t>(cols[k])]);
      }
    };
    take(fold.train_columns, train);
    take(fold.test_columns, test);

    // Train-only statistics; the test fold never touches them.
    Eigen::VectorXd mu = train.features.rowwise().mean();
    Eigen::VectorXd sd =
        ((train.features.colwise() - mu).array().square().rowwise().sum() /
         static_cast<double>(train.features.cols()))
            .sqrt();
    for (Eigen::Index r = 0; r < sd.size(); ++r)
      if (sd(r) <= 1e-300) sd(r) = 1.0;
    if (params.zscore) {
      train.features = (train.features.colwise() - mu).array().colwise() / sd.array();
      test.features = (test.features.colwise() - mu).array().colwise() / sd.array();
    }

    EnsembleModel model = train_multiclass(train, params.model, seed);

    EvalReport::FoldResult fr;
    fr.subject = fold.subject;
    fr.train_mean = mu;
    fr.train_sd = sd;
    std::vector<int> predicted;
    std::vector<std::vector<double>> margins(static_cast<std::size_t>(p));
    for (Eigen::Index c = 0; c < test.features.cols(); ++c) {
      auto pred = predict_multiclass(model, test.features.col(c));
      predicted.push_back(pred.category);
      for (int m = 0; m < p; ++m)
        margins[static_cast<std::size_t>(m)].push_back(
            pred.margins[static_cast<std::size_t>(m)]);
    }
    fr.accuracy = accuracy(predicted, test.labels);
    for (std::size_t c = 0; c < predicted.size(); ++c)
      report.confusion(test.labels[c] - 1, predicted[c] - 1) += 1;

    for (int m = 1; m <= p; ++m) {
      std::vector<int> bin_truth, bin_pred;
      for (std::size_t c = 0; c < test.labels.size(); ++c) {
        bin_truth.push_back(test.labels[c] == m ? +1 : -1);
        bin_pred.push_back(
            margins[static_cast<std::size_t>(m - 1)][c] < 0.0 ? -1 : +1);
      }
      fr.binary_accuracy.push_back(accuracy(bin_pred, bin_truth));
      bool both = std::count(bin_truth.begin(), bin_truth.end(), 1) > 0 &&
                  std::count(bin_truth.begin(), bin_truth.end(), -1) > 0;
      fr.binary_auc.push_back(
          both ? auc(margins[static_cast<std::size_t>(m - 1)], bin_truth)
               : std::numeric_limits<double>::quiet_NaN());
    }
    report.folds.push_back(std::move(fr));
  }

  double n_folds = static_cast<double>(report.folds.size());
  for (const auto& fr : report.folds) report.mean_accuracy += fr.accuracy;
  report.mean_accuracy /= n_folds;
  double var = 0.0;
  for (const auto& fr : report.folds) {
    double d = fr.accuracy - report.mean_accuracy;
    var += d * d;
  }
  report.std_accuracy = std::sqrt(var / n_folds);  // population std

  for (int m = 0; m < p; ++m) {
    double acc_sum = 0.0, auc_sum = 0.0;
    int auc_n = 0;
    for (const auto& fr : report.folds) {
      acc_sum += fr.binary_accuracy[static_cast<std::size_t>(m)];
      double a = fr.binary_auc[static_cast<std::size_t>(m)];
      if (!std::isnan(a)) {
        auc_sum += a;
        ++auc_n;
      }
    }
    report.mean_binary_accuracy[static_cast<std::size_t>(m)] = acc_sum / n_folds;
    report.mean_binary_auc[static_cast<std::size_t>(m)] =
        auc_n > 0 ? auc_sum / auc_n : std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

}  // namespace apa
