#ifndef APA_DESIGN_HPP
#define APA_DESIGN_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "apa/schedule.hpp"

namespace apa {

/// Hemodynamic response sampled at TR spacing, peak-normalized to 1.
struct HrfKernel {
  std::vector<double> samples;
  double tr_ms = 0.0;
};

/// T x P matrix of HRF-convolved category regressors.
struct DesignMatrix {
  Eigen::MatrixXd values;  // T x P
  std::string session_id;
};

/// Closed-form double-gamma response at time t seconds (unnormalized).
double double_gamma(double t_s);

/// Canonical double-gamma HRF sampled at t = 0, TR, 2*TR, ... <= duration_s.
HrfKernel canonical_hrf(double tr_ms, double duration_s = 32.0);

/// Convolves each category's onset indicator series with the kernel and
/// truncates to T rows.
DesignMatrix build_design_matrix(const StimulusSchedule& schedule,
                                 std::size_t t_len, const HrfKernel& hrf);

}  // namespace apa

#endif
