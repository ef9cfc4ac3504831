#ifndef APA_REGISTRATION_HPP
#define APA_REGISTRATION_HPP

#include <Eigen/Dense>
#include <array>
#include <string>

#include "apa/volume.hpp"

namespace apa {

/// 12-parameter affine: translation (voxels), rotation (radians),
/// scale, shear; composed as T * R * Sh * Sc about the grid center.
struct AffineTransform {
  std::array<double, 3> translation{0, 0, 0};
  std::array<double, 3> rotation{0, 0, 0};   // about x, y, z
  std::array<double, 3> scale{1, 1, 1};
  std::array<double, 3> shear{0, 0, 0};      // xy, xz, yz

  /// Homogeneous voxel-space matrix for a grid of the given dims.
  Eigen::Matrix4d matrix(const std::array<std::size_t, 3>& dims) const;

  bool is_identity(double tol = 1e-12) const;
};

struct SimilarityMetric {
  enum class Kind { Nmi, Mi, Je, Cr, Woods };
  Kind kind = Kind::Nmi;
  int bins = 64;

  static SimilarityMetric parse(const std::string& name, int bins = 64);
  std::string name() const;
};

struct RegistrationOptions {
  SimilarityMetric metric;
  int max_sweeps = 20;          // coordinate-descent sweeps per level
  double tolerance = 1e-4;      // parameter convergence tolerance
  std::array<int, 3> levels{4, 2, 1};  // downsampling factors, coarse to fine
};

struct RegistrationResult {
  AffineTransform transform;
  double score = 0.0;       // final similarity at full resolution
  bool improved = true;     // false when no candidate beat identity
};

/// Pulling trilinear resample: out(x) = in(tau^{-1} x); outside -> 0.
Volume3D resample(const Volume3D& image, const AffineTransform& tau,
                  const std::array<std::size_t, 3>& out_dims);

/// Similarity between equal-dim images; higher is always better
/// (JE and Woods are sign-flipped accordingly).
double similarity(const Volume3D& a, const Volume3D& b,
                  const SimilarityMetric& metric);

/// Multi-resolution coordinate descent with golden-section line searches.
/// Deterministic given inputs.
RegistrationResult register_images(const Volume3D& moving,
                                   const Volume3D& reference,
                                   const RegistrationOptions& options);

void save_transform(const AffineTransform& t, const std::string& path);
AffineTransform load_transform(const std::string& path);

}  // namespace apa

#endif
