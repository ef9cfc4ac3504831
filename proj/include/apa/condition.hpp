#ifndef APA_CONDITION_HPP
#define APA_CONDITION_HPP

#include <Eigen/Dense>
#include <string>

#include "apa/glm.hpp"
#include "apa/schedule.hpp"
#include "apa/volume.hpp"

namespace apa {

/// Per-condition activity image on the native grid.
struct ConditionImage {
  std::string session_id;
  int condition_id = 0;
  int category_id = 0;
  Volume3D image;
};

/// Rows are the scans listed for condition k, in onset order. A nonzero
/// window extends each onset m to scans [m, m+window) clipped to T.
Eigen::MatrixXd gather_condition(const Volume4D& data,
                                 const StimulusSchedule& schedule,
                                 int condition_id, std::size_t window = 0);

/// Voxelwise maximum over the slab's rows.
Volume3D condition_max(const Eigen::MatrixXd& slab,
                       const std::array<std::size_t, 3>& dims);

/// Hadamard product with the category's positive-masked beta column.
Volume3D mask_condition(const Volume3D& cond_max, const BetaMap& betas,
                        int category_id);

}  // namespace apa

#endif
