#include "apa/condition.hpp"

#include <algorithm>

#include "apa/error.hpp"

namespace apa {

Eigen::MatrixXd gather_condition(const Volume4D& data,
                                 const StimulusSchedule& schedule,
                                 int condition_id, std::size_t window) {
  const Condition& cond = schedule.condition(condition_id);
  if (cond.onset_scans.empty())
    throw Error::validation("condition.empty",
                            "condition " + std::to_string(condition_id) +
                                " has no onsets");
  const std::size_t t_len = data.time_points();
  std::vector<std::size_t> scans;
  for (std::size_t m : cond.onset_scans) {
    if (m >= t_len)
      throw Error::validation("schedule.onset_out_of_range",
                              "onset " + std::to_string(m) + " >= T");
    scans.push_back(m);
    for (std::size_t w = 1; w < window && m + w < t_len; ++w)
      scans.push_back(m + w);
  }
  const auto v_len = static_cast<Eigen::Index>(data.spatial_size());
  Eigen::MatrixXd slab(static_cast<Eigen::Index>(scans.size()), v_len);
  for (std::size_t r = 0; r < scans.size(); ++r)
    for (Eigen::Index v = 0; v < v_len; ++v)
      slab(static_cast<Eigen::Index>(r), v) =
          data.at(static_cast<std::size_t>(v), scans[r]);
  return slab;
}

Volume3D condition_max(const Eigen::MatrixXd& slab,
                       const std::array<std::size_t, 3>& dims) {
  if (slab.rows() == 0)
    throw Error::validation("condition.empty", "empty time slab");
  Volume3D out;
  out.dims = dims;
  out.voxels.resize(static_cast<std::size_t>(slab.cols()));
  if (out.size() != out.voxels.size())
    throw Error::validation("data.size_mismatch", "slab width does not match dims");
  for (Eigen::Index v = 0; v < slab.cols(); ++v)
    out.voxels[static_cast<std::size_t>(v)] =
        static_cast<float>(slab.col(v).maxCoeff());
  return out;
}

Volume3D mask_condition(const Volume3D& cond_max, const BetaMap& betas,
                        int category_id) {
  if (category_id < 1 || category_id > betas.category_count)
    throw Error::validation("condition.bad_category",
                            "category " + std::to_string(category_id) +
                                " outside 1.." + std::to_string(betas.category_count));
  if (static_cast<Eigen::Index>(cond_max.size()) != betas.betas.rows())
    throw Error::validation("data.size_mismatch",
                            "beta map voxel count does not match image");
  Volume3D out = cond_max;
  for (std::size_t v = 0; v < out.voxels.size(); ++v)
    out.voxels[v] = static_cast<float>(
        out.voxels[v] * betas.betas(static_cast<Eigen::Index>(v), category_id - 1));
  return out;
}

}  // namespace apa
