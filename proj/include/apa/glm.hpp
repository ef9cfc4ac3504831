#ifndef APA_GLM_HPP
#define APA_GLM_HPP

#include <Eigen/Dense>
#include <string>

#include "apa/design.hpp"
#include "apa/volume.hpp"

namespace apa {

/// Noise covariance structure for the GLS solve.
struct NoiseModel {
  enum class Kind { Identity, Ar1 };
  Kind kind = Kind::Identity;
  double rho = 0.0;  // only meaningful for Ar1, in (-1, 1)

  static NoiseModel identity() { return NoiseModel{}; }
  static NoiseModel ar1(double rho);
};

/// Per-voxel, per-category regression coefficients for one session.
struct BetaMap {
  std::string session_id;
  int category_count = 0;
  Eigen::MatrixXd betas;  // V x P
};

/// Pools the lag-1 autocorrelation of OLS residuals across voxels; clamps
/// rho to [-0.95, 0.95]. Falls back to identity when residuals are flat.
NoiseModel estimate_ar1(const Volume4D& data, const DesignMatrix& design);

/// GLS solve of F = D B^T + noise via AR(1) prewhitening and QR.
/// With an identity model this is plain OLS.
BetaMap solve_gls(const Volume4D& data, const DesignMatrix& design,
                  const NoiseModel& noise);

/// Elementwise max(beta, 0); idempotent.
BetaMap positive_mask(const BetaMap& b);

}  // namespace apa

#endif
