#include "apa/glm.hpp"

#include <cmath>
#include <sstream>

#include "apa/error.hpp"

namespace apa {

NoiseModel NoiseModel::ar1(double rho) {
  if (!(rho > -1.0 && rho < 1.0))
    throw Error::validation("glm.bad_rho", "AR(1) rho must lie in (-1, 1)");
  NoiseModel m;
  m.kind = Kind::Ar1;
  m.rho = rho;
  return m;
}

namespace {

// Time-major copy of the functional data: row = scan, column = voxel.
Eigen::MatrixXd data_matrix(const Volume4D& data) {
  const auto t_len = static_cast<Eigen::Index>(data.time_points());
  const auto v_len = static_cast<Eigen::Index>(data.spatial_size());
  Eigen::MatrixXd f(t_len, v_len);
  for (Eigen::Index t = 0; t < t_len; ++t)
    for (Eigen::Index v = 0; v < v_len; ++v)
      f(t, v) = data.at(static_cast<std::size_t>(v), static_cast<std::size_t>(t));
  return f;
}

// AR(1) whitening filter: y'_0 = sqrt(1-rho^2) y_0, y'_t = y_t - rho y_{t-1}.
Eigen::MatrixXd whiten(const Eigen::MatrixXd& m, double rho) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  out.row(0) = std::sqrt(1.0 - rho * rho) * m.row(0);
  for (Eigen::Index t = 1; t < m.rows(); ++t)
    out.row(t) = m.row(t) - rho * m.row(t - 1);
  return out;
}

void check_design(const Eigen::MatrixXd& d) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(d);
  double smax = svd.singularValues()(0);
  double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (smin <= 0.0 || smax / smin > 1e12) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d);
    qr.setThreshold(1e-12);
    Eigen::Index rank = qr.rank();
    std::ostringstream cols;
    auto perm = qr.colsPermutation().indices();
    for (Eigen::Index i = rank; i < d.cols(); ++i)
      cols << (i > rank ? "," : "") << perm(i);
    throw Error::numeric("glm.rank_deficient",
                         "design matrix is rank deficient; collinear columns: " +
                             cols.str());
  }
}

}  // namespace

NoiseModel estimate_ar1(const Volume4D& data, const DesignMatrix& design) {
  const auto t_len = static_cast<Eigen::Index>(data.time_points());
  if (t_len < 3)
    throw Error::validation("glm.too_few_scans", "AR(1) estimation needs T >= 3");
  Eigen::MatrixXd f = data_matrix(data);
  check_design(design.values);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(design.values);
  Eigen::MatrixXd resid = f - design.values * qr.solve(f);

  double sum_r1 = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index v = 0; v < resid.cols(); ++v) {
    double denom = resid.col(v).squaredNorm();
    if (denom <= 1e-24) continue;
    double num = 0.0;
    for (Eigen::Index t = 1; t < t_len; ++t)
      num += resid(t, v) * resid(t - 1, v);
    sum_r1 += num / denom;
    ++used;
  }
  if (used == 0) return NoiseModel::identity();
  double rho = sum_r1 / static_cast<double>(used);
  rho = std::clamp(rho, -0.95, 0.95);
  return NoiseModel::ar1(rho);
}

BetaMap solve_gls(const Volume4D& data, const DesignMatrix& design,
                  const NoiseModel& noise) {
  if (static_cast<Eigen::Index>(data.time_points()) != design.values.rows())
    throw Error::validation("glm.dims_mismatch",
                            "data T does not match design rows");
  for (float f : data.voxels)
    if (!std::isfinite(f))
      throw Error::validation("data.non_finite", "non-finite voxel series");

  double rho = noise.kind == NoiseModel::Kind::Ar1 ? noise.rho : 0.0;
  Eigen::MatrixXd dw = whiten(design.values, rho);
  check_design(dw);
  Eigen::MatrixXd fw = whiten(data_matrix(data), rho);

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(dw);
  Eigen::MatrixXd coef = qr.solve(fw);  // P x V

  BetaMap b;
  b.session_id = design.session_id;
  b.category_count = static_cast<int>(design.values.cols());
  b.betas = coef.transpose();
  return b;
}

BetaMap positive_mask(const BetaMap& b) {
  BetaMap out = b;
  out.betas = b.betas.cwiseMax(0.0);
  return out;
}

}  // namespace apa
