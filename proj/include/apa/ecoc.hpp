#ifndef APA_ECOC_HPP
#define APA_ECOC_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "apa/boosting.hpp"
#include "apa/features.hpp"

namespace apa {

/// Trained ECOC decoder: one boosted ensemble per category plus the
/// one-versus-all coding matrix.
struct EnsembleModel {
  int category_count = 0;                 // P
  int feature_dim = 0;                    // E
  std::uint64_t seed = 0;
  Eigen::MatrixXi coding_matrix;          // P x P, +1 diagonal
  std::vector<BinaryEnsemble> ensembles;  // one per category, index m-1

  EnsembleModel() = default;
  EnsembleModel(EnsembleModel&&) = default;
  EnsembleModel& operator=(EnsembleModel&&) = default;
};

/// +1 on the diagonal, -1 elsewhere; row i is category i's codeword.
Eigen::MatrixXi build_coding_matrix(int p);

struct MulticlassParams {
  BoostParams boost;
  int threads = 1;
};

EnsembleModel train_multiclass(const FeatureMatrix& features,
                               const MulticlassParams& params,
                               std::uint64_t seed);

struct MulticlassPrediction {
  int category = 0;                // 1..P
  std::vector<int> code;           // sign votes of all P binaries
  std::vector<double> margins;     // per-class margins
};

/// Minimum-Hamming decode; ties resolved by code-weighted margin sum,
/// then lowest category id.
MulticlassPrediction predict_multiclass(const EnsembleModel& model,
                                        const Eigen::VectorXd& x);

void save_model(const EnsembleModel& model, const std::string& path);
EnsembleModel load_model(const std::string& path);

/// Standalone one-versus-rest model files ("apa.binary_model").
void save_binary_model(const BinaryEnsemble& ensemble, int feature_dim,
                       const std::string& path);
BinaryEnsemble load_binary_model(const std::string& path, int* feature_dim = nullptr);

}  // namespace apa

#endif
