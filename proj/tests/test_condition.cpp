#include <doctest.h>

#include "apa/condition.hpp"
#include "helpers.hpp"

using apa::BetaMap;
using apa::StimulusSchedule;
using apa::Volume3D;
using apa::Volume4D;

namespace {

Volume4D ramp_data(std::size_t t_len) {
  Volume4D f;
  f.dims = {2, 2, 1, t_len};
  f.tr_ms = 2000.0;
  f.voxels.resize(f.size());
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t v = 0; v < 4; ++v)
      f.at(v, t) = static_cast<float>(100 * t + v);
  return f;
}

StimulusSchedule two_conditions() {
  StimulusSchedule s;
  s.category_count = 2;
  s.conditions.push_back({1, 1, {0, 4}});
  s.conditions.push_back({2, 2, {2}});
  return s;
}

}  // namespace

TEST_CASE("gather keeps onset order, one row per listed scan") {
  Volume4D f = ramp_data(6);
  StimulusSchedule s = two_conditions();
  Eigen::MatrixXd slab = apa::gather_condition(f, s, 1);
  REQUIRE(slab.rows() == 2);
  REQUIRE(slab.cols() == 4);
  for (Eigen::Index v = 0; v < 4; ++v) {
    CHECK(slab(0, v) == static_cast<double>(v));        // scan 0
    CHECK(slab(1, v) == static_cast<double>(400 + v));  // scan 4
  }
}

TEST_CASE("a single onset at scan zero gathers exactly that scan") {
  Volume4D f = ramp_data(4);
  StimulusSchedule s;
  s.category_count = 1;
  s.conditions.push_back({1, 1, {0}});
  Eigen::MatrixXd slab = apa::gather_condition(f, s, 1);
  REQUIRE(slab.rows() == 1);
  for (Eigen::Index v = 0; v < 4; ++v) CHECK(slab(0, v) == static_cast<double>(v));
}

TEST_CASE("a window extends each onset and clips at the series end") {
  Volume4D f = ramp_data(6);
  StimulusSchedule s = two_conditions();
  // onsets {0, 4} with window 3 -> scans 0,1,2 and 4,5 (6 clipped away)
  Eigen::MatrixXd slab = apa::gather_condition(f, s, 1, 3);
  REQUIRE(slab.rows() == 5);
  CHECK(slab(0, 0) == 0.0);
  CHECK(slab(1, 0) == 100.0);
  CHECK(slab(2, 0) == 200.0);
  CHECK(slab(3, 0) == 400.0);
  CHECK(slab(4, 0) == 500.0);
}

TEST_CASE("unknown condition ids and bad onsets are rejected") {
  Volume4D f = ramp_data(3);
  StimulusSchedule s = two_conditions();
  test::check_error([&] { apa::gather_condition(f, s, 9); },
                    "schedule.unknown_condition");
  test::check_error([&] { apa::gather_condition(f, s, 1); },
                    "schedule.onset_out_of_range");  // onset 4 >= T=3
}

TEST_CASE("condition_max is the voxelwise maximum over rows") {
  Eigen::MatrixXd slab(3, 4);
  slab << 1, 5, -2, 0,
          4, 2, -7, 0,
          3, 9, -1, 0;
  Volume3D m = apa::condition_max(slab, {2, 2, 1});
  CHECK(m.voxels == std::vector<float>{4.0f, 9.0f, -1.0f, 0.0f});

  // The injected peak two scans after onset wins over onset values.
  Volume4D f = ramp_data(8);
  f.at(2, 5) = 9999.0f;  // onset 3 + 2
  StimulusSchedule s;
  s.category_count = 1;
  s.conditions.push_back({1, 1, {3}});
  Eigen::MatrixXd peak_slab = apa::gather_condition(f, s, 1, 4);
  Volume3D peak = apa::condition_max(peak_slab, {2, 2, 1});
  CHECK(peak.voxels[2] == 9999.0f);
}

TEST_CASE("condition_max rejects an empty slab or mismatched dims") {
  Eigen::MatrixXd empty(0, 4);
  test::check_error([&] { apa::condition_max(empty, {2, 2, 1}); },
                    "condition.empty");
  Eigen::MatrixXd slab(1, 4);
  slab.setZero();
  test::check_error([&] { apa::condition_max(slab, {3, 2, 1}); },
                    "data.size_mismatch");
}

TEST_CASE("mask_condition multiplies by the category's beta column") {
  Volume3D img;
  img.dims = {2, 2, 1};
  img.voxels = {1.0f, 2.0f, 3.0f, 4.0f};
  BetaMap b;
  b.category_count = 2;
  b.betas.resize(4, 2);
  b.betas << 0.0, 1.0,
             2.0, 1.0,
             0.5, 1.0,
             0.0, 1.0;
  Volume3D masked = apa::mask_condition(img, b, 1);
  CHECK(masked.voxels == std::vector<float>{0.0f, 4.0f, 1.5f, 0.0f});

  // Voxels with a zero beta are exactly zero; a zero column zeroes the image.
  BetaMap zero = b;
  zero.betas.col(0).setZero();
  Volume3D z = apa::mask_condition(img, zero, 1);
  CHECK(z.voxels == std::vector<float>{0.0f, 0.0f, 0.0f, 0.0f});
}

TEST_CASE("mask_condition validates category and sizes") {
  Volume3D img;
  img.dims = {2, 2, 1};
  img.voxels = {1, 2, 3, 4};
  BetaMap b;
  b.category_count = 1;
  b.betas.resize(4, 1);
  b.betas.setOnes();
  test::check_error([&] { apa::mask_condition(img, b, 2); },
                    "condition.bad_category");
  BetaMap small = b;
  small.betas.conservativeResize(3, 1);
  test::check_error([&] { apa::mask_condition(img, small, 1); },
                    "data.size_mismatch");
}
