#include "apa/design.hpp"

#include <algorithm>
#include <cmath>

#include "apa/error.hpp"

namespace apa {

namespace {

// Gamma-density shape t^{a-1} e^{-t/b} / (b^a Gamma(a)).
double gamma_shape(double t, double a, double b) {
  if (t <= 0.0) return 0.0;
  return std::pow(t, a - 1.0) * std::exp(-t / b) /
         (std::pow(b, a) * std::tgamma(a));
}

}  // namespace

double double_gamma(double t_s) {
  return gamma_shape(t_s, 6.0, 1.0) - gamma_shape(t_s, 16.0, 1.0) / 6.0;
}

HrfKernel canonical_hrf(double tr_ms, double duration_s) {
  if (tr_ms <= 0.0)
    throw Error::validation("design.bad_tr", "TR must be positive");
  double tr_s = tr_ms / 1000.0;
  HrfKernel k;
  k.tr_ms = tr_ms;
  for (double t = 0.0; t <= duration_s + 1e-9; t += tr_s)
    k.samples.push_back(double_gamma(t));
  double peak = *std::max_element(k.samples.begin(), k.samples.end());
  if (peak > 0.0)
    for (double& v : k.samples) v /= peak;
  return k;
}

DesignMatrix build_design_matrix(const StimulusSchedule& schedule,
                                 std::size_t t_len, const HrfKernel& hrf) {
  schedule.validate(t_len);
  int p = schedule.category_count;
  DesignMatrix d;
  d.session_id = schedule.session_id;
  d.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t_len), p);
  for (int n = 1; n <= p; ++n) {
    auto onsets = schedule.category_onsets(n);
    if (onsets.empty())
      throw Error::validation("design.empty_category",
                              "category " + std::to_string(n) + " has no onsets");
    for (std::size_t m : onsets)
      for (std::size_t h = 0; h < hrf.samples.size() && m + h < t_len; ++h)
        d.values(static_cast<Eigen::Index>(m + h), n - 1) += hrf.samples[h];
  }
  return d;
}

}  // namespace apa
