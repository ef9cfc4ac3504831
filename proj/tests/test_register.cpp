#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "apa/registration.hpp"
#include "apa/rng.hpp"
#include "apa/synth.hpp"
#include "helpers.hpp"

using apa::AffineTransform;
using apa::SimilarityMetric;
using apa::Volume3D;

namespace {

Volume3D gaussian_blob(std::size_t n, double cx, double cy, double cz,
                       double sigma) {
  Volume3D v = Volume3D::zeros(n, n, n);
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz);
        v.at(x, y, z) = static_cast<float>(std::exp(-d2 / (2.0 * sigma * sigma)));
      }
  return v;
}

double pearson(const std::vector<float>& a, const std::vector<float>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

// Independent joint-histogram entropies with min-max binning.
struct Entropies {
  double ha, hb, hab;
};
Entropies entropy_oracle(const Volume3D& a, const Volume3D& b, int bins) {
  auto bin_of = [&](const Volume3D& v, std::size_t i) {
    float lo = *std::min_element(v.voxels.begin(), v.voxels.end());
    float hi = *std::max_element(v.voxels.begin(), v.voxels.end());
    int k = static_cast<int>((v.voxels[i] - lo) / (hi - lo) * bins);
    return std::min(k, bins - 1);
  };
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  for (std::size_t i = 0; i < a.voxels.size(); ++i) {
    int ka = bin_of(a, i), kb = bin_of(b, i);
    pa[ka] += 1;
    pb[kb] += 1;
    pab[{ka, kb}] += 1;
  }
  double n = static_cast<double>(a.voxels.size());
  auto h = [&](auto& hist) {
    double acc = 0;
    for (auto& [k, c] : hist) acc -= (c / n) * std::log(c / n);
    return acc;
  };
  return {h(pa), h(pb), h(pab)};
}

}  // namespace

TEST_CASE("identity parameters give the identity matrix") {
  AffineTransform t;
  CHECK(t.is_identity());
  Eigen::Matrix4d m = t.matrix({16, 16, 16});
  CHECK((m - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("pure translation moves the origin only") {
  AffineTransform t;
  t.translation = {2.0, -3.0, 0.5};
  Eigen::Matrix4d m = t.matrix({16, 16, 16});
  CHECK(m(0, 3) == 2.0);
  CHECK(m(1, 3) == -3.0);
  CHECK(m(2, 3) == 0.5);
  CHECK((m.topLeftCorner<3, 3>() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
        1e-15);
}

TEST_CASE("rotation matches an angle-axis composition about the grid center") {
  AffineTransform t;
  t.rotation = {0.1, -0.2, 0.3};
  std::array<std::size_t, 3> dims{16, 20, 12};
  Eigen::Matrix4d m = t.matrix(dims);

  Eigen::Matrix3d r =
      (Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitZ()) *
       Eigen::AngleAxisd(-0.2, Eigen::Vector3d::UnitY()) *
       Eigen::AngleAxisd(0.1, Eigen::Vector3d::UnitX()))
          .toRotationMatrix();
  CHECK((m.topLeftCorner<3, 3>() - r).cwiseAbs().maxCoeff() < 1e-12);

  // The rotation is applied about the grid center (dims-1)/2.
  Eigen::Vector4d center(7.5, 9.5, 5.5, 1.0);
  CHECK((m * center - center).head<3>().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("nonpositive scales are rejected") {
  AffineTransform t;
  t.scale = {1.0, 0.0, 1.0};
  test::check_error([&] { t.matrix({8, 8, 8}); }, "register.bad_scale");
}

TEST_CASE("identity resample returns the input exactly") {
  Volume3D v = gaussian_blob(12, 5.0, 6.0, 4.0, 2.0);
  Volume3D r = apa::resample(v, AffineTransform{}, v.dims);
  CHECK(r.voxels == v.voxels);
}

TEST_CASE("integer translation shifts content exactly inside the grid") {
  Volume3D v = gaussian_blob(12, 5.0, 5.0, 5.0, 1.5);
  AffineTransform t;
  t.translation = {2.0, 0.0, -1.0};
  Volume3D r = apa::resample(v, t, v.dims);
  for (std::size_t z = 2; z < 10; ++z)
    for (std::size_t y = 1; y < 11; ++y)
      for (std::size_t x = 3; x < 11; ++x)
        CHECK(r.at(x, y, z) ==
              doctest::Approx(v.at(x - 2, y, z + 1)).epsilon(1e-6));
}

TEST_CASE("a transform and its inverse nearly restore a smooth blob") {
  Volume3D v = gaussian_blob(16, 8.0, 7.0, 9.0, 3.0);
  AffineTransform t;
  t.translation = {1.3, -0.8, 0.4};
  t.rotation = {0.0, 0.0, 0.12};
  Volume3D fwd = apa::resample(v, t, v.dims);
  AffineTransform inv;
  double c = std::cos(-0.12), s = std::sin(-0.12);
  inv.rotation = {0.0, 0.0, -0.12};
  inv.translation = {c * -1.3 - s * 0.8, s * -1.3 + c * 0.8, -0.4};
  Volume3D back = apa::resample(fwd, inv, v.dims);
  CHECK(pearson(back.voxels, v.voxels) >= 0.99);
}

TEST_CASE("entropy metrics match an independent histogram oracle") {
  apa::Pcg32 rng(17);
  Volume3D a = Volume3D::zeros(8, 8, 8);
  Volume3D b = Volume3D::zeros(8, 8, 8);
  for (std::size_t i = 0; i < a.voxels.size(); ++i) {
    a.voxels[i] = static_cast<float>(rng.uniform());
    b.voxels[i] = static_cast<float>(0.5 * a.voxels[i] + 0.5 * rng.uniform());
  }
  Entropies e = entropy_oracle(a, b, 64);
  double nmi = apa::similarity(a, b, SimilarityMetric::parse("nmi"));
  double mi = apa::similarity(a, b, SimilarityMetric::parse("mi"));
  double je = apa::similarity(a, b, SimilarityMetric::parse("je"));
  CHECK(nmi == doctest::Approx((e.ha + e.hb) / e.hab).epsilon(1e-12));
  CHECK(mi == doctest::Approx(e.ha + e.hb - e.hab).epsilon(1e-12));
  CHECK(je == doctest::Approx(-e.hab).epsilon(1e-12));
}

TEST_CASE("independent noise images share almost no information") {
  apa::Pcg32 rng(23);
  Volume3D a = Volume3D::zeros(64, 64, 64);
  Volume3D b = Volume3D::zeros(64, 64, 64);
  for (std::size_t i = 0; i < a.voxels.size(); ++i) {
    a.voxels[i] = static_cast<float>(rng.uniform());
    b.voxels[i] = static_cast<float>(rng.uniform());
  }
  double mi = apa::similarity(a, b, SimilarityMetric::parse("mi"));
  CHECK(mi / std::log(2.0) <= 0.05);  // bits
}

TEST_CASE("every metric scores aligned above misaligned") {
  apa::Phantom phantom = apa::make_phantom({24, 24, 24}, 8, 99);
  AffineTransform shift;
  shift.translation = {4.0, -3.0, 2.0};
  Volume3D moved = apa::resample(phantom.reference, shift, phantom.reference.dims);
  for (const char* name : {"nmi", "mi", "je", "cr", "woods"}) {
    SimilarityMetric m = SimilarityMetric::parse(name);
    double aligned = apa::similarity(phantom.reference, phantom.reference, m);
    double misaligned = apa::similarity(moved, phantom.reference, m);
    CHECK_MESSAGE(aligned > misaligned, name);
  }
}

TEST_CASE("a perfectly explained image maximizes the correlation ratio") {
  // Two exact intensity levels land in separate bins, so the within-bin
  // variance vanishes and eta^2 is exactly 1.
  apa::Pcg32 rng(3);
  Volume3D a = Volume3D::zeros(8, 8, 8);
  for (auto& v : a.voxels) v = rng.uniform() < 0.5 ? 0.2f : 0.8f;
  double cr = apa::similarity(a, a, SimilarityMetric::parse("cr"));
  CHECK(cr == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("metric parsing validates names and bins") {
  for (const char* name : {"nmi", "mi", "je", "cr", "woods"})
    CHECK(SimilarityMetric::parse(name).name() == name);
  test::check_error([] { SimilarityMetric::parse("ssd"); },
                    "register.unknown_metric");
  test::check_error([] { SimilarityMetric::parse("nmi", 4); }, "register.bad_bins");
}

TEST_CASE("similarity requires matching dims and nonconstant images for cr") {
  Volume3D a = Volume3D::zeros(4, 4, 4);
  Volume3D b = Volume3D::zeros(4, 4, 2);
  test::check_error([&] { apa::similarity(a, b, SimilarityMetric::parse("nmi")); },
                    "register.dims_mismatch");
  Volume3D flat = Volume3D::zeros(4, 4, 4);
  Volume3D varied = flat;
  varied.voxels[0] = 1.0f;
  test::check_error(
      [&] { apa::similarity(varied, flat, SimilarityMetric::parse("cr")); },
      "register.constant_image");
}

TEST_CASE("registration rejects constant inputs") {
  Volume3D flat = Volume3D::zeros(8, 8, 8);
  Volume3D varied = flat;
  varied.voxels[0] = 1.0f;
  test::check_error(
      [&] { apa::register_images(flat, varied, apa::RegistrationOptions{}); },
      "register.constant_image");
}

TEST_CASE("a planted translation is recovered within half a voxel") {
  apa::Phantom phantom = apa::make_phantom({32, 32, 32}, 16, 7);
  AffineTransform planted;
  planted.translation = {3.0, -2.0, 1.0};
  Volume3D moving = apa::resample(phantom.reference, planted,
                                  phantom.reference.dims);
  apa::RegistrationResult res =
      apa::register_images(moving, phantom.reference, apa::RegistrationOptions{});
  CHECK(res.improved);
  // Recovering the inverse: translation (-3, 2, -1).
  CHECK(std::abs(res.transform.translation[0] + 3.0) <= 0.5);
  CHECK(std::abs(res.transform.translation[1] - 2.0) <= 0.5);
  CHECK(std::abs(res.transform.translation[2] + 1.0) <= 0.5);
}

TEST_CASE("a planted z rotation is recovered within 0.02 rad") {
  apa::Phantom phantom = apa::make_phantom({32, 32, 32}, 16, 8);
  AffineTransform planted;
  planted.rotation = {0.0, 0.0, 0.1};
  Volume3D moving = apa::resample(phantom.reference, planted,
                                  phantom.reference.dims);
  apa::RegistrationResult res =
      apa::register_images(moving, phantom.reference, apa::RegistrationOptions{});
  CHECK(std::abs(res.transform.rotation[2] + 0.1) <= 0.02);
  CHECK(std::abs(res.transform.rotation[0]) <= 0.02);
  CHECK(std::abs(res.transform.rotation[1]) <= 0.02);
}

TEST_CASE("transforms round-trip through disk") {
  test::TempDir dir;
  AffineTransform t;
  t.translation = {1.25, -2.5, 0.125};
  t.rotation = {0.01, 0.02, -0.03};
  t.scale = {1.05, 0.95, 1.0};
  t.shear = {0.001, -0.002, 0.0};
  std::string path = dir.file("tau.json");
  apa::save_transform(t, path);
  AffineTransform r = apa::load_transform(path);
  CHECK(r.translation == t.translation);
  CHECK(r.rotation == t.rotation);
  CHECK(r.scale == t.scale);
  CHECK(r.shear == t.shear);
}

TEST_CASE("malformed transform files are rejected") {
  test::TempDir dir;
  std::string path = dir.file("tau.json");
  test::write_file(path, "{not json");
  test::check_error([&] { apa::load_transform(path); }, "io.malformed");
  test::write_file(path, "{\"translation\": [1, 2]}");
  test::check_error([&] { apa::load_transform(path); }, "register.bad_transform");
}
