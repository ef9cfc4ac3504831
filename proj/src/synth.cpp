#include "apa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "apa/design.hpp"
#include "apa/error.hpp"
#include "apa/rng.hpp"

namespace apa {

namespace {

// One pass of a 3x3x3 box blur; clamped at the borders.
Volume3D box_blur(const Volume3D& v) {
  Volume3D out = v;
  auto xi = static_cast<std::ptrdiff_t>(v.dims[0]);
  auto yi = static_cast<std::ptrdiff_t>(v.dims[1]);
  auto zi = static_cast<std::ptrdiff_t>(v.dims[2]);
  for (std::ptrdiff_t z = 0; z < zi; ++z)
    for (std::ptrdiff_t y = 0; y < yi; ++y)
      for (std::ptrdiff_t x = 0; x < xi; ++x) {
        double acc = 0.0;
        int cnt = 0;
        for (std::ptrdiff_t dz = -1; dz <= 1; ++dz)
          for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
            for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
              std::ptrdiff_t cx = x + dx, cy = y + dy, cz = z + dz;
              if (cx < 0 || cy < 0 || cz < 0 || cx >= xi || cy >= yi || cz >= zi)
                continue;
              acc += v.voxels[static_cast<std::size_t>(cx + xi * (cy + yi * cz))];
              ++cnt;
            }
        out.voxels[static_cast<std::size_t>(x + xi * (y + yi * z))] =
            static_cast<float>(acc / cnt);
      }
  return out;
}

}  // namespace

Phantom make_phantom(const std::array<std::size_t, 3>& dims, int region_count,
                     std::uint64_t seed) {
  std::size_t grid = dims[0] * dims[1] * dims[2];
  if (region_count < 1 || static_cast<std::size_t>(region_count) > grid)
    throw Error::validation("synth.bad_region_count",
                            "region count must fit the grid");
  Pcg32 rng(seed);

  // Regions live inside a central ellipsoid; outside is zero background,
  // like a head inside the field of view. A full-field phantom would let
  // registration trade border mismatch against spurious scaling.
  const std::array<double, 3> center{dims[0] / 2.0, dims[1] / 2.0, dims[2] / 2.0};
  const std::array<double, 3> semi{0.38 * dims[0], 0.38 * dims[1], 0.38 * dims[2]};
  auto inside = [&](double x, double y, double z) {
    double u = (x - center[0]) / semi[0];
    double v = (y - center[1]) / semi[1];
    double w = (z - center[2]) / semi[2];
    return u * u + v * v + w * w <= 1.0;
  };

  // Voronoi sites with a minimum-separation rejection pass so no region
  // collapses to a sliver.
  double ball = 4.18879 * semi[0] * semi[1] * semi[2];  // 4/3 pi abc
  double min_sep = 0.5 * std::cbrt(ball / region_count);
  std::vector<std::array<double, 3>> sites;
  int attempts = 0;
  while (static_cast<int>(sites.size()) < region_count) {
    std::array<double, 3> s{rng.uniform(0.0, static_cast<double>(dims[0])),
                            rng.uniform(0.0, static_cast<double>(dims[1])),
                            rng.uniform(0.0, static_cast<double>(dims[2]))};
    if (!inside(s[0], s[1], s[2])) continue;
    bool ok = true;
    for (const auto& t : sites) {
      double d2 = 0.0;
      for (int i = 0; i < 3; ++i) d2 += (s[i] - t[i]) * (s[i] - t[i]);
      if (d2 < min_sep * min_sep) {
        ok = false;
        break;
      }
    }
    if (ok || ++attempts > 10000) sites.push_back(s);
  }

  Phantom out;
  out.atlas.dims = dims;
  out.atlas.region_count = region_count;
  out.atlas.labels.resize(grid);
  std::vector<float> intensity(static_cast<std::size_t>(region_count));
  for (auto& v : intensity) v = static_cast<float>(rng.uniform(0.3, 1.0));

  out.reference = Volume3D::zeros(dims[0], dims[1], dims[2]);
  std::size_t idx = 0;
  for (std::size_t z = 0; z < dims[2]; ++z)
    for (std::size_t y = 0; y < dims[1]; ++y)
      for (std::size_t x = 0; x < dims[0]; ++x, ++idx) {
        if (!inside(x + 0.5, y + 0.5, z + 0.5)) {
          out.atlas.labels[idx] = 0;
          continue;
        }
        double best = 1e300;
        int label = 1;
        for (std::size_t s = 0; s < sites.size(); ++s) {
          double dx = (x + 0.5) - sites[s][0];
          double dy = (y + 0.5) - sites[s][1];
          double dz = (z + 0.5) - sites[s][2];
          double d2 = dx * dx + dy * dy + dz * dz;
          if (d2 < best) {
            best = d2;
            label = static_cast<int>(s) + 1;
          }
        }
        out.atlas.labels[idx] = label;
        out.reference.voxels[idx] = intensity[static_cast<std::size_t>(label - 1)];
      }
  out.reference = box_blur(box_blur(out.reference));
  out.atlas.validate();
  return out;
}

SyntheticSession make_session(const AtlasVolume& atlas, const SessionSpec& spec,
                              std::uint64_t seed) {
  if (spec.condition_count < spec.category_count)
    throw Error::validation("synth.bad_spec", "need Q >= P");
  if (spec.category_count < 1)
    throw Error::validation("synth.bad_spec", "need P >= 1");
  Pcg32 rng(seed);
  const std::size_t v_len = atlas.size();
  const int p = spec.category_count;
  const int q = spec.condition_count;

  // Active regions per category, distinct across categories.
  SyntheticSession out;
  if (!spec.fixed_active_regions.empty()) {
    if (static_cast<int>(spec.fixed_active_regions.size()) != p)
      throw Error::validation("synth.bad_spec",
                              "fixed_active_regions needs one list per category");
    out.active_regions = spec.fixed_active_regions;
  } else {
    std::vector<int> region_order(static_cast<std::size_t>(atlas.region_count));
    std::iota(region_order.begin(), region_order.end(), 1);
    rng.shuffle(region_order);
    out.active_regions.resize(static_cast<std::size_t>(p));
    std::size_t next_region = 0;
    for (int n = 0; n < p; ++n)
      for (int k = 0; k < spec.active_regions_per_category; ++k) {
        out.active_regions[static_cast<std::size_t>(n)].push_back(
            region_order[next_region % region_order.size()]);
        ++next_region;
      }
  }

  // Planted betas: amplitude ~ U[0.8, 1.2] on active regions, 0 elsewhere.
  out.true_betas.category_count = p;
  out.true_betas.betas = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(v_len), p);
  for (int n = 0; n < p; ++n) {
    double amp = rng.uniform(0.8, 1.2);
    for (std::size_t v = 0; v < v_len; ++v) {
      int label = atlas.labels[v];
      const auto& regions = out.active_regions[static_cast<std::size_t>(n)];
      if (std::find(regions.begin(), regions.end(), label) != regions.end())
        out.true_betas.betas(static_cast<Eigen::Index>(v), n) = amp;
    }
  }

  // Non-overlapping onsets: evenly spaced slots, shuffled across conditions.
  const int onsets_per_condition = 3;
  int total_onsets = q * onsets_per_condition;
  std::size_t gap = spec.t_len / static_cast<std::size_t>(total_onsets);
  if (gap < 1)
    throw Error::validation("synth.onset_packing",
                            "T too small for the requested onset count");
  std::vector<std::size_t> slots;
  for (int i = 0; i < total_onsets; ++i)
    slots.push_back(static_cast<std::size_t>(i) * gap);
  rng.shuffle(slots);

  out.schedule.session_id = "s1_r1";
  out.schedule.category_count = p;
  std::size_t slot = 0;
  for (int k = 0; k < q; ++k) {
    Condition c;
    c.condition_id = k + 1;
    c.category_id = (k % p) + 1;
    for (int i = 0; i < onsets_per_condition; ++i) c.onset_scans.push_back(slots[slot++]);
    std::sort(c.onset_scans.begin(), c.onset_scans.end());
    out.schedule.conditions.push_back(std::move(c));
  }
  out.schedule.validate(spec.t_len);

  HrfKernel hrf = canonical_hrf(spec.tr_ms);
  DesignMatrix design = build_design_matrix(out.schedule, spec.t_len, hrf);
  Eigen::MatrixXd signal = design.values * out.true_betas.betas.transpose();  // T x V

  // Optional shared baseline pattern, constant over time.
  Eigen::VectorXd baseline = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(v_len));
  if (spec.baseline > 0.0) {
    Volume3D pattern = Volume3D::zeros(atlas.dims[0], atlas.dims[1], atlas.dims[2]);
    for (auto& f : pattern.voxels) f = static_cast<float>(rng.uniform());
    pattern = box_blur(pattern);
    for (std::size_t v = 0; v < v_len; ++v)
      baseline(static_cast<Eigen::Index>(v)) = spec.baseline * pattern.voxels[v];
  }

  Eigen::MatrixXd noise =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.t_len),
                            static_cast<Eigen::Index>(v_len));
  if (spec.snr > 0.0) {
    for (Eigen::Index v = 0; v < noise.cols(); ++v) {
      if (spec.noise == NoiseModel::Kind::Ar1) {
        double rho = spec.ar1_rho;
        double prev = rng.normal() / std::sqrt(1.0 - rho * rho);
        for (Eigen::Index t = 0; t < noise.rows(); ++t) {
          noise(t, v) = prev;
          prev = rho * prev + rng.normal();
        }
      } else {
        for (Eigen::Index t = 0; t < noise.rows(); ++t) noise(t, v) = rng.normal();
      }
    }
    double signal_norm = signal.norm();
    if (signal_norm <= 0.0) signal_norm = std::sqrt(static_cast<double>(v_len));
    double noise_norm = noise.norm();
    if (noise_norm > 0.0) noise *= signal_norm / (spec.snr * noise_norm);
  }

  Volume4D data;
  data.dims = {atlas.dims[0], atlas.dims[1], atlas.dims[2], spec.t_len};
  data.tr_ms = spec.tr_ms;
  data.voxels.resize(v_len * spec.t_len);
  for (std::size_t t = 0; t < spec.t_len; ++t)
    for (std::size_t v = 0; v < v_len; ++v)
      data.at(v, t) = static_cast<float>(
          signal(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(v)) +
          baseline(static_cast<Eigen::Index>(v)) +
          noise(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(v)));

  out.true_transform = spec.perturbation;
  if (!spec.perturbation.is_identity()) {
    std::array<std::size_t, 3> dims3{atlas.dims[0], atlas.dims[1], atlas.dims[2]};
    for (std::size_t t = 0; t < spec.t_len; ++t) {
      Volume3D slice = data.slice(t);
      Volume3D moved = resample(slice, spec.perturbation, dims3);
      for (std::size_t v = 0; v < v_len; ++v) data.at(v, t) = moved.voxels[v];
    }
  }
  out.data = std::move(data);
  out.true_betas.session_id = out.schedule.session_id;
  return out;
}

FeatureMatrix make_classification_set(const ClassificationSpec& spec,
                                      std::uint64_t seed) {
  if (spec.n_per_class.size() < 2)
    throw Error::validation("synth.bad_spec", "need at least 2 classes");
  if (spec.feature_dim < 2)
    throw Error::validation("synth.bad_spec", "need feature_dim >= 2");
  Pcg32 rng(seed);
  const int p = static_cast<int>(spec.n_per_class.size());
  const int e = spec.feature_dim;

  // Random unit-direction centroids; near-orthogonal in E >= 10, so the
  // expected pairwise distance is about `separation`.
  std::vector<Eigen::VectorXd> centroids;
  for (int m = 0; m < p; ++m) {
    Eigen::VectorXd c(e);
    for (int i = 0; i < e; ++i) c(i) = rng.normal();
    c *= spec.separation / (std::sqrt(2.0) * c.norm());
    centroids.push_back(std::move(c));
  }

  int total = 0;
  for (int n : spec.n_per_class) {
    if (n < 1)
      throw Error::validation("synth.bad_spec", "each class needs >= 1 instance");
    total += n;
  }

  FeatureMatrix out;
  out.features.resize(e, total);
  int col = 0;
  const int n_subjects = 4;
  for (int m = 0; m < p; ++m)
    for (int i = 0; i < spec.n_per_class[static_cast<std::size_t>(m)]; ++i) {
      for (int r = 0; r < e; ++r)
        out.features(r, col) = centroids[static_cast<std::size_t>(m)](r) + rng.normal();
      out.labels.push_back(m + 1);
      out.sessions.push_back("s" + std::to_string(1 + col % n_subjects) + "_r1");
      ++col;
    }
  out.validate();
  return out;
}

std::vector<RegistrationTrial> registration_suite(int trials, std::size_t size,
                                                  const SimilarityMetric& metric,
                                                  std::uint64_t seed) {
  std::vector<RegistrationTrial> out;
  for (int i = 0; i < trials; ++i) {
    std::uint64_t trial_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    Pcg32 rng(trial_seed);
    Phantom phantom = make_phantom({size, size, size}, 16, trial_seed);

    RegistrationTrial trial;
    int axis = i % 3;
    for (int a = 0; a < 3; ++a)
      trial.planted.translation[static_cast<std::size_t>(a)] = rng.uniform(-5.0, 5.0);
    double theta = rng.uniform(-0.2, 0.2);
    trial.planted.rotation[static_cast<std::size_t>(axis)] = theta;

    Volume3D moving =
        resample(phantom.reference, trial.planted, phantom.reference.dims);
    // Normalized intensities plus mild noise; alignment is unchanged but
    // the optimum sharpness now depends on the metric.
    float hi = *std::max_element(moving.voxels.begin(), moving.voxels.end());
    if (hi <= 0.0f) hi = 1.0f;
    for (auto& v : moving.voxels) {
      double n = static_cast<double>(v) / hi;
      v = static_cast<float>(n + 0.01 * rng.normal());
    }

    RegistrationOptions options;
    options.metric = metric;
    trial.recovered =
        register_images(moving, phantom.reference, options).transform;

    // Exact inverse of T(t) * R_axis(theta) in transform parameters.
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    double c = std::cos(-theta), s = std::sin(-theta);
    if (axis == 0) {
      r(1, 1) = c; r(1, 2) = -s; r(2, 1) = s; r(2, 2) = c;
    } else if (axis == 1) {
      r(0, 0) = c; r(0, 2) = s; r(2, 0) = -s; r(2, 2) = c;
    } else {
      r(0, 0) = c; r(0, 1) = -s; r(1, 0) = s; r(1, 1) = c;
    }
    Eigen::Vector3d t(trial.planted.translation[0], trial.planted.translation[1],
                      trial.planted.translation[2]);
    Eigen::Vector3d ti = r * (-t);
    for (int a = 0; a < 3; ++a)
      trial.expected.translation[static_cast<std::size_t>(a)] = ti(a);
    trial.expected.rotation[static_cast<std::size_t>(axis)] = -theta;

    trial.translation_ok = true;
    trial.rotation_ok = true;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(trial.recovered.translation[static_cast<std::size_t>(a)] -
                   trial.expected.translation[static_cast<std::size_t>(a)]) > 0.5)
        trial.translation_ok = false;
      if (std::abs(trial.recovered.rotation[static_cast<std::size_t>(a)] -
                   trial.expected.rotation[static_cast<std::size_t>(a)]) > 0.02)
        trial.rotation_ok = false;
    }

    Eigen::Matrix4d compose = trial.recovered.matrix(phantom.reference.dims) *
                              trial.planted.matrix(phantom.reference.dims);
    double err = 0.0;
    double edge = static_cast<double>(size) - 1.0;
    for (int corner = 0; corner < 8; ++corner) {
      Eigen::Vector4d x(corner & 1 ? edge : 0.0, corner & 2 ? edge : 0.0,
                        corner & 4 ? edge : 0.0, 1.0);
      err += (compose * x - x).head<3>().norm();
    }
    trial.corner_error = err / 8.0;
    out.push_back(std::move(trial));
  }
  return out;
}

}  // namespace apa
