#ifndef APA_FEATURES_HPP
#define APA_FEATURES_HPP

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "apa/glm.hpp"
#include "apa/registration.hpp"
#include "apa/schedule.hpp"
#include "apa/volume.hpp"

namespace apa {

/// E-region features per stimulus; one column per condition across sessions.
struct FeatureMatrix {
  Eigen::MatrixXd features;          // E x N
  std::vector<int> labels;           // category id per column
  std::vector<std::string> sessions; // session id per column

  std::size_t region_count() const { return features.rows(); }
  std::size_t column_count() const { return features.cols(); }

  void validate() const;
};

FeatureMatrix load_features(const std::string& csv_path);
void save_features(const FeatureMatrix& m, const std::string& csv_path);

/// Mean of the image over each atlas region; background ignored. Regions
/// empty on this grid yield 0 (warned, not fatal).
Eigen::VectorXd region_means(const Volume3D& image, const AtlasVolume& atlas);

struct SessionData {
  Volume4D data;
  StimulusSchedule schedule;
};

struct PipelineOptions {
  NoiseModel::Kind noise = NoiseModel::Kind::Identity;
  std::size_t window = 0;             // peri-onset window for condition max
  bool shared_session_transform = false;
  RegistrationOptions registration;
  int threads = 1;
};

struct PipelineOutput {
  FeatureMatrix features;
  /// Raw (unmasked, unregistered) condition-max images flattened columnwise,
  /// for voxel-space correlation analysis. V x N.
  Eigen::MatrixXd voxel_conditions;
  std::vector<BetaMap> betamaps;               // per session, positive-masked
  std::vector<AffineTransform> transforms;     // per session; identity unless
                                               // the shared estimate is enabled
};

/// Full per-session chain: design -> GLS -> condition images -> registration
/// -> region means. Columns ordered by (session, condition).
PipelineOutput build_dataset(const std::vector<SessionData>& sessions,
                             const AtlasVolume& atlas,
                             const Volume3D& reference,
                             const PipelineOptions& options);

struct ActiveRegionMap {
  Volume3D probability;  // fraction of sessions with positive registered beta
  Volume3D mask;         // 1 where probability > threshold
};

/// Per voxel, the fraction of sessions whose registered category beta
/// exceeds min_beta; mask keeps voxels with fraction > threshold.
ActiveRegionMap active_region_probability(
    const std::vector<BetaMap>& betamaps,
    const std::vector<AffineTransform>& transforms,
    const std::array<std::size_t, 3>& native_dims,
    const std::array<std::size_t, 3>& out_dims, int category_id,
    double threshold = 0.5, double min_beta = 0.0);

}  // namespace apa

#endif
