#ifndef APA_EVAL_HPP
#define APA_EVAL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "apa/ecoc.hpp"
#include "apa/features.hpp"

namespace apa {

/// Subject id = session id up to the first '_' (sessions group by subject).
std::string subject_of(const std::string& session_id);

struct Fold {
  std::string subject;
  std::vector<int> train_columns;
  std::vector<int> test_columns;
};

/// One fold per distinct subject; test = that subject's columns.
std::vector<Fold> loso_split(const FeatureMatrix& features);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

/// Mann-Whitney rank AUC on binary margins; ties share midranks.
/// Requires both classes present.
double auc(const std::vector<double>& margins, const std::vector<int>& truth);

/// Pearson correlation between per-category mean columns of the matrix.
/// Works for any representation (features or voxels).
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& data,
                                   const std::vector<int>& labels,
                                   int category_count);

struct EvalParams {
  MulticlassParams model;
  bool zscore = false;  // per-fold z-scoring with train-only statistics
};

struct EvalReport {
  struct FoldResult {
    std::string subject;
    double accuracy = 0.0;
    std::vector<double> binary_accuracy;  // per category
    std::vector<double> binary_auc;       // per category
    Eigen::VectorXd train_mean;           // per-region stats of the train fold
    Eigen::VectorXd train_sd;             // (recorded regardless of zscore)
  };
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std, divisor n
  std::vector<double> mean_binary_accuracy;
  std::vector<double> mean_binary_auc;
  Eigen::MatrixXi confusion;  // P x P, rows = truth
  int category_count = 0;
};

EvalReport evaluate(const FeatureMatrix& features, const EvalParams& params,
                    std::uint64_t seed);

}  // namespace apa

#endif
