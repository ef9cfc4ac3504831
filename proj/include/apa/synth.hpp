#ifndef APA_SYNTH_HPP
#define APA_SYNTH_HPP

#include <cstdint>
#include <vector>

#include "apa/features.hpp"
#include "apa/glm.hpp"
#include "apa/registration.hpp"
#include "apa/schedule.hpp"
#include "apa/volume.hpp"

namespace apa {

/// Seeded Voronoi phantom: E contiguous regions plus a smoothed
/// region-intensity reference image.
struct Phantom {
  AtlasVolume atlas;
  Volume3D reference;
};

Phantom make_phantom(const std::array<std::size_t, 3>& dims, int region_count,
                     std::uint64_t seed);

struct SessionSpec {
  int category_count = 2;        // P
  int condition_count = 4;       // Q >= P
  std::size_t t_len = 121;
  double tr_ms = 2500.0;
  double snr = 5.0;              // ||D B^T||_F / ||noise||_F; <=0 means no noise
  int active_regions_per_category = 1;
  NoiseModel::Kind noise = NoiseModel::Kind::Identity;  // white or ar1
  double ar1_rho = 0.4;
  AffineTransform perturbation;  // applied to every volume; identity = none
  double baseline = 0.0;         // shared constant pattern amplitude
  /// When nonempty (one list per category) these override the seeded
  /// region draw, so several sessions can share one ground truth.
  std::vector<std::vector<int>> fixed_active_regions;
};

/// Ground truth for a generated session, F = D B^T + noise.
struct SyntheticSession {
  Volume4D data;
  StimulusSchedule schedule;
  BetaMap true_betas;                       // planted B (nonnegative)
  std::vector<std::vector<int>> active_regions;  // per category, atlas ids
  AffineTransform true_transform;
};

SyntheticSession make_session(const AtlasVolume& atlas, const SessionSpec& spec,
                              std::uint64_t seed);

struct ClassificationSpec {
  int feature_dim = 10;             // E
  std::vector<int> n_per_class;     // instance counts, index = category-1
  double separation = 3.0;          // centroid distance in noise sigmas
};

/// Gaussian class clusters at controlled separation; labels attached.
FeatureMatrix make_classification_set(const ClassificationSpec& spec,
                                      std::uint64_t seed);

/// One phantom registration trial with a planted rigid transform
/// (translation plus a single-axis rotation).
struct RegistrationTrial {
  AffineTransform planted;
  AffineTransform expected;   // exact inverse, in transform parameters
  AffineTransform recovered;
  double corner_error = 0.0;  // mean grid-corner displacement of recovered o planted
  bool translation_ok = false;  // within 0.5 voxels per axis
  bool rotation_ok = false;     // within 0.02 rad per axis
};

/// Seeded suite of phantom registrations; the moving image is renormalized
/// and carries mild noise so metrics can differ.
std::vector<RegistrationTrial> registration_suite(int trials, std::size_t size,
                                                  const SimilarityMetric& metric,
                                                  std::uint64_t seed);

}  // namespace apa

#endif
