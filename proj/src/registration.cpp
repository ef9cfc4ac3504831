#include "apa/registration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "apa/error.hpp"

using nlohmann::json;

namespace apa {

Eigen::Matrix4d AffineTransform::matrix(const std::array<std::size_t, 3>& dims) const {
  for (double s : scale)
    if (!(s > 0.0))
      throw Error::validation("register.bad_scale", "scales must be positive");

  auto trans = [](double x, double y, double z) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m(0, 3) = x;
    m(1, 3) = y;
    m(2, 3) = z;
    return m;
  };

  double cx = std::cos(rotation[0]), sx = std::sin(rotation[0]);
  double cy = std::cos(rotation[1]), sy = std::sin(rotation[1]);
  double cz = std::cos(rotation[2]), sz = std::sin(rotation[2]);
  Eigen::Matrix4d rx = Eigen::Matrix4d::Identity();
  rx(1, 1) = cx; rx(1, 2) = -sx; rx(2, 1) = sx; rx(2, 2) = cx;
  Eigen::Matrix4d ry = Eigen::Matrix4d::Identity();
  ry(0, 0) = cy; ry(0, 2) = sy; ry(2, 0) = -sy; ry(2, 2) = cy;
  Eigen::Matrix4d rz = Eigen::Matrix4d::Identity();
  rz(0, 0) = cz; rz(0, 1) = -sz; rz(1, 0) = sz; rz(1, 1) = cz;

  Eigen::Matrix4d sh = Eigen::Matrix4d::Identity();
  sh(0, 1) = shear[0];  // xy
  sh(0, 2) = shear[1];  // xz
  sh(1, 2) = shear[2];  // yz

  Eigen::Matrix4d sc = Eigen::Matrix4d::Identity();
  sc(0, 0) = scale[0];
  sc(1, 1) = scale[1];
  sc(2, 2) = scale[2];

  Eigen::Vector3d c(0.5 * (static_cast<double>(dims[0]) - 1.0),
                    0.5 * (static_cast<double>(dims[1]) - 1.0),
                    0.5 * (static_cast<double>(dims[2]) - 1.0));
  return trans(c.x() + translation[0], c.y() + translation[1],
               c.z() + translation[2]) *
         rz * ry * rx * sh * sc * trans(-c.x(), -c.y(), -c.z());
}

bool AffineTransform::is_identity(double tol) const {
  for (int i = 0; i < 3; ++i)
    if (std::abs(translation[i]) > tol || std::abs(rotation[i]) > tol ||
        std::abs(scale[i] - 1.0) > tol || std::abs(shear[i]) > tol)
      return false;
  return true;
}

SimilarityMetric SimilarityMetric::parse(const std::string& name, int bins) {
  SimilarityMetric m;
  m.bins = bins;
  if (bins < 8)
    throw Error::validation("register.bad_bins", "need at least 8 histogram bins");
  if (name == "nmi") m.kind = Kind::Nmi;
  else if (name == "mi") m.kind = Kind::Mi;
  else if (name == "je") m.kind = Kind::Je;
  else if (name == "cr") m.kind = Kind::Cr;
  else if (name == "woods") m.kind = Kind::Woods;
  else
    throw Error::validation("register.unknown_metric",
                            "unknown similarity metric: " + name);
  return m;
}

std::string SimilarityMetric::name() const {
  switch (kind) {
    case Kind::Nmi: return "nmi";
    case Kind::Mi: return "mi";
    case Kind::Je: return "je";
    case Kind::Cr: return "cr";
    case Kind::Woods: return "woods";
  }
  return "nmi";
}

Volume3D resample(const Volume3D& image, const AffineTransform& tau,
                  const std::array<std::size_t, 3>& out_dims) {
  Eigen::Matrix4d m = tau.matrix(out_dims);
  if (std::abs(m.determinant()) < 1e-15)
    throw Error::numeric("register.singular_transform",
                         "transform is not invertible");
  Eigen::Matrix4d inv = m.inverse();

  Volume3D out;
  out.dims = out_dims;
  out.voxels.assign(out_dims[0] * out_dims[1] * out_dims[2], 0.0f);

  const auto ix = static_cast<std::ptrdiff_t>(image.dims[0]);
  const auto iy = static_cast<std::ptrdiff_t>(image.dims[1]);
  const auto iz = static_cast<std::ptrdiff_t>(image.dims[2]);

  std::size_t idx = 0;
  for (std::size_t z = 0; z < out_dims[2]; ++z)
    for (std::size_t y = 0; y < out_dims[1]; ++y)
      for (std::size_t x = 0; x < out_dims[0]; ++x, ++idx) {
        double px = inv(0, 0) * x + inv(0, 1) * y + inv(0, 2) * z + inv(0, 3);
        double py = inv(1, 0) * x + inv(1, 1) * y + inv(1, 2) * z + inv(1, 3);
        double pz = inv(2, 0) * x + inv(2, 1) * y + inv(2, 2) * z + inv(2, 3);

        std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(std::floor(px));
        std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(std::floor(py));
        std::ptrdiff_t z0 = static_cast<std::ptrdiff_t>(std::floor(pz));
        double fx = px - static_cast<double>(x0);
        double fy = py - static_cast<double>(y0);
        double fz = pz - static_cast<double>(z0);

        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              std::ptrdiff_t cx = x0 + dx, cy = y0 + dy, cz = z0 + dz;
              if (cx < 0 || cy < 0 || cz < 0 || cx >= ix || cy >= iy || cz >= iz)
                continue;  // outside samples as 0
              double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) *
                         (dz ? fz : 1.0 - fz);
              acc += w * image.voxels[static_cast<std::size_t>(
                             cx + ix * (cy + iy * cz))];
            }
        out.voxels[idx] = static_cast<float>(acc);
      }
  return out;
}

namespace {

struct Binned {
  std::vector<int> bin;  // per voxel
  bool constant = false;
};

Binned bin_image(const Volume3D& v, int bins) {
  float lo = v.voxels[0], hi = v.voxels[0];
  for (float f : v.voxels) {
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  Binned out;
  out.bin.resize(v.voxels.size());
  if (hi <= lo) {
    out.constant = true;
    return out;  // everything in bin 0
  }
  double scale = static_cast<double>(bins) / (static_cast<double>(hi) - lo);
  for (std::size_t i = 0; i < v.voxels.size(); ++i) {
    int b = static_cast<int>((static_cast<double>(v.voxels[i]) - lo) * scale);
    out.bin[i] = std::min(b, bins - 1);
  }
  return out;
}

double entropy(const std::vector<double>& p, double n) {
  double h = 0.0;
  for (double c : p)
    if (c > 0.0) {
      double q = c / n;
      h -= q * std::log(q);
    }
  return h;
}

}  // namespace

double similarity(const Volume3D& a, const Volume3D& b,
                  const SimilarityMetric& metric) {
  if (a.dims != b.dims)
    throw Error::validation("register.dims_mismatch",
                            "images must share dimensions");
  const int bins = metric.bins;
  Binned ba = bin_image(a, bins);
  Binned bb = bin_image(b, bins);
  const double n = static_cast<double>(a.voxels.size());

  using Kind = SimilarityMetric::Kind;
  if (metric.kind == Kind::Cr || metric.kind == Kind::Woods) {
    if (bb.constant)
      throw Error::validation("register.constant_image",
                              "variance-based metric needs a nonconstant image");
    // Partition b's intensities by a's bins.
    std::vector<double> cnt(bins, 0.0), sum(bins, 0.0), sum2(bins, 0.0);
    for (std::size_t i = 0; i < a.voxels.size(); ++i) {
      int k = ba.bin[i];
      double v = b.voxels[i];
      cnt[k] += 1.0;
      sum[k] += v;
      sum2[k] += v * v;
    }
    double total_mean = 0.0, total_sq = 0.0;
    for (int k = 0; k < bins; ++k) {
      total_mean += sum[k];
      total_sq += sum2[k];
    }
    total_mean /= n;
    double total_var = total_sq / n - total_mean * total_mean;
    if (metric.kind == Kind::Cr) {
      double within = 0.0;
      for (int k = 0; k < bins; ++k) {
        if (cnt[k] <= 0.0) continue;
        double mu = sum[k] / cnt[k];
        within += sum2[k] - cnt[k] * mu * mu;
      }
      return 1.0 - within / (n * total_var);  // eta^2, higher = more similar
    }
    // Woods: mean normalized within-bin std of b given a; lower is better.
    double w = 0.0;
    for (int k = 0; k < bins; ++k) {
      if (cnt[k] <= 0.0) continue;
      double mu = sum[k] / cnt[k];
      double var = std::max(0.0, sum2[k] / cnt[k] - mu * mu);
      w += (cnt[k] / n) * std::sqrt(var) / std::max(std::abs(mu), 1e-6);
    }
    return -w;
  }

  std::vector<double> ja(bins, 0.0), jb(bins, 0.0), jab(bins * bins, 0.0);
  for (std::size_t i = 0; i < a.voxels.size(); ++i) {
    ja[ba.bin[i]] += 1.0;
    jb[bb.bin[i]] += 1.0;
    jab[ba.bin[i] * bins + bb.bin[i]] += 1.0;
  }
  double ha = entropy(ja, n);
  double hb = entropy(jb, n);
  double hab = entropy(jab, n);
  switch (metric.kind) {
    case Kind::Nmi:
      return hab < 1e-15 ? 2.0 : (ha + hb) / hab;
    case Kind::Mi:
      return ha + hb - hab;
    case Kind::Je:
      return -hab;
    default:
      break;
  }
  return 0.0;
}

namespace {

Volume3D downsample(const Volume3D& v, int factor) {
  if (factor <= 1) return v;
  std::array<std::size_t, 3> od{(v.dims[0] + factor - 1) / factor,
                                (v.dims[1] + factor - 1) / factor,
                                (v.dims[2] + factor - 1) / factor};
  Volume3D out = Volume3D::zeros(od[0], od[1], od[2]);
  for (std::size_t z = 0; z < od[2]; ++z)
    for (std::size_t y = 0; y < od[1]; ++y)
      for (std::size_t x = 0; x < od[0]; ++x) {
        double acc = 0.0;
        int cnt = 0;
        for (int dz = 0; dz < factor; ++dz)
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx) {
              std::size_t sx = x * factor + dx, sy = y * factor + dy,
                          sz = z * factor + dz;
              if (sx >= v.dims[0] || sy >= v.dims[1] || sz >= v.dims[2]) continue;
              acc += v.at(sx, sy, sz);
              ++cnt;
            }
        out.at(x, y, z) = static_cast<float>(acc / cnt);
      }
  return out;
}

// Parameter slots 0-2 translation, 3-5 rotation, 6-8 scale, 9-11 shear.
double& param_slot(AffineTransform& t, int i) {
  if (i < 3) return t.translation[static_cast<std::size_t>(i)];
  if (i < 6) return t.rotation[static_cast<std::size_t>(i - 3)];
  if (i < 9) return t.scale[static_cast<std::size_t>(i - 6)];
  return t.shear[static_cast<std::size_t>(i - 9)];
}

AffineTransform at_level(const AffineTransform& t, int factor) {
  AffineTransform out = t;
  for (auto& v : out.translation) v /= factor;
  return out;
}

}  // namespace

RegistrationResult register_images(const Volume3D& moving,
                                   const Volume3D& reference,
                                   const RegistrationOptions& options) {
  {  // both images must carry signal
    auto bm = bin_image(moving, 2);
    auto br = bin_image(reference, 2);
    if (bm.constant || br.constant)
      throw Error::validation("register.constant_image",
                              "cannot register constant images");
  }

  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  AffineTransform params;

  auto optimize_stage = [&](const Volume3D& mov, const Volume3D& ref, int factor,
                            const double range[12], double prescan_window,
                            int prescan_half) {
    auto score = [&](const AffineTransform& t) {
      return similarity(resample(mov, at_level(t, factor), ref.dims), ref,
                        options.metric);
    };

    if (prescan_window > 0.0) {
      // Joint scan over all three rotation axes. Per-axis line searches
      // alone stall because a rotation change shifts the content, so each
      // candidate gets the translation that keeps the (intensity-weighted)
      // content centroid where the current estimate put it.
      Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
      double mass = 0.0;
      for (std::size_t z = 0; z < mov.dims[2]; ++z)
        for (std::size_t y = 0; y < mov.dims[1]; ++y)
          for (std::size_t x = 0; x < mov.dims[0]; ++x) {
            double w = std::abs(mov.at(x, y, z));
            centroid += w * Eigen::Vector3d(x + 0.5, y + 0.5, z + 0.5);
            mass += w;
          }
      if (mass > 0.0) centroid /= mass;
      Eigen::Vector3d center(mov.dims[0] / 2.0, mov.dims[1] / 2.0,
                             mov.dims[2] / 2.0);
      Eigen::Vector3d arm = (centroid - center) * factor;

      auto rot3 = [](const std::array<double, 3>& r) -> Eigen::Matrix3d {
        Eigen::Matrix3d rx = Eigen::Matrix3d::Identity();
        Eigen::Matrix3d ry = Eigen::Matrix3d::Identity();
        Eigen::Matrix3d rz = Eigen::Matrix3d::Identity();
        double cx = std::cos(r[0]), sx = std::sin(r[0]);
        double cy = std::cos(r[1]), sy = std::sin(r[1]);
        double cz = std::cos(r[2]), sz = std::sin(r[2]);
        rx(1, 1) = cx; rx(1, 2) = -sx; rx(2, 1) = sx; rx(2, 2) = cx;
        ry(0, 0) = cy; ry(0, 2) = sy; ry(2, 0) = -sy; ry(2, 2) = cy;
        rz(0, 0) = cz; rz(0, 1) = -sz; rz(1, 0) = sz; rz(1, 1) = cz;
        return rz * ry * rx;
      };
      Eigen::Matrix3d r_cur = rot3(params.rotation);

      AffineTransform best_t = params;
      double best_v = score(params);
      const int half = prescan_half;
      const double window = prescan_window;
      for (int ix = -half; ix <= half; ++ix)
        for (int iy = -half; iy <= half; ++iy)
          for (int iz = -half; iz <= half; ++iz) {
            AffineTransform t = params;
            t.rotation[0] += window * ix / half;
            t.rotation[1] += window * iy / half;
            t.rotation[2] += window * iz / half;
            Eigen::Vector3d dt = (r_cur - rot3(t.rotation)) * arm;
            for (int a = 0; a < 3; ++a)
              t.translation[static_cast<std::size_t>(a)] += dt(a);
            double v = score(t);
            if (v > best_v) {
              best_v = v;
              best_t = t;
            }
          }
      params = best_t;
    }

    double best = score(params);
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
      double max_delta = 0.0;
      for (int p = 0; p < 12; ++p) {
        if (range[p] <= 0.0) continue;
        double center = param_slot(params, p);
        double lo = center - range[p];
        double hi = center + range[p];
        if (p >= 6 && p < 9) lo = std::max(lo, 0.2);  // keep scales positive

        // Coarse scan to locate the basin, then golden-section inside it.
        const int grid = 13;
        double step = (hi - lo) / (grid - 1);
        double gbest_val = -1e300;
        int gbest = 0;
        std::vector<double> vals(grid);
        for (int g = 0; g < grid; ++g) {
          AffineTransform t = params;
          param_slot(t, p) = lo + g * step;
          vals[static_cast<std::size_t>(g)] = score(t);
          if (vals[static_cast<std::size_t>(g)] > gbest_val) {
            gbest_val = vals[static_cast<std::size_t>(g)];
            gbest = g;
          }
        }
        double a = lo + std::max(0, gbest - 1) * step;
        double b = lo + std::min(grid - 1, gbest + 1) * step;
        double x1 = b - phi * (b - a);
        double x2 = a + phi * (b - a);
        AffineTransform t1 = params, t2 = params;
        param_slot(t1, p) = x1;
        param_slot(t2, p) = x2;
        double f1 = score(t1), f2 = score(t2);
        while (b - a > options.tolerance) {
          if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            param_slot(t2, p) = x2;
            f2 = score(t2);
          } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            param_slot(t1, p) = x1;
            f1 = score(t1);
          }
        }
        double cand = 0.5 * (a + b);
        AffineTransform t = params;
        param_slot(t, p) = cand;
        double fc = std::max(score(t), std::max(gbest_val, std::max(f1, f2)));
        if (fc > best) {
          double chosen = cand;
          if (gbest_val >= std::max(f1, f2) && gbest_val == fc)
            chosen = lo + gbest * step;
          else if (f1 > f2 && f1 == fc)
            chosen = x1;
          else if (f2 >= f1 && f2 == fc)
            chosen = x2;
          param_slot(params, p) = chosen;
          best = fc;
          max_delta = std::max(max_delta, std::abs(chosen - center));
        }
      }
      if (max_delta < options.tolerance) break;
    }
  };

  for (std::size_t lvl = 0; lvl < options.levels.size(); ++lvl) {
    int factor = options.levels[lvl];
    Volume3D mov = downsample(moving, factor);
    Volume3D ref = downsample(reference, factor);

    // Half-ranges per parameter family. The coarsest level only sees gross
    // translation; rotation, scale and shear are invisible at that
    // resolution and searching them there just plants local optima.
    double shrink = 1.0 / static_cast<double>(1u << lvl);
    double range[12];
    for (int i = 0; i < 3; ++i) range[i] = 6.0 * shrink;  // translation
    for (int i = 3; i < 6; ++i) range[i] = lvl == 0 ? 0.0 : 0.5 * shrink;
    for (int i = 6; i < 12; ++i) range[i] = lvl == 0 ? 0.0 : 0.2 * shrink;
    bool finest = lvl + 1 == options.levels.size();
    optimize_stage(mov, ref, factor, range, finest ? 0.25 : 0.0, 5);
  }

  // Rotation and translation couple along a ridge, so one scan followed by
  // coordinate sweeps can stall partway. Re-scan rotation with narrowing
  // windows, letting the sweeps re-fit translation in between.
  {
    double refine[12] = {1.0, 1.0, 1.0, 0.05, 0.05, 0.05,
                         0.02, 0.02, 0.02, 0.02, 0.02, 0.02};
    optimize_stage(moving, reference, 1, refine, 0.10, 5);
  }

  // Final polish at full resolution with tight windows around the estimate.
  {
    double polish[12] = {0.4, 0.4, 0.4, 0.02, 0.02, 0.02,
                         0.01, 0.01, 0.01, 0.01, 0.01, 0.01};
    optimize_stage(moving, reference, 1, polish, 0.03, 3);
  }

  // Small scale/shear drift picked up on the way down can bias the rotation
  // estimate. Try a rigid candidate: drop scale and shear back to identity,
  // re-fit translation and rotation, and keep whichever variant scores best.
  {
    auto full_score = [&](const AffineTransform& t) {
      return similarity(resample(moving, t, reference.dims), reference,
                        options.metric);
    };
    AffineTransform affine = params;
    double affine_score = full_score(affine);
    params.scale = {1.0, 1.0, 1.0};
    params.shear = {0.0, 0.0, 0.0};
    double rigid[12] = {0.5, 0.5, 0.5, 0.05, 0.05, 0.05,
                        0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    optimize_stage(moving, reference, 1, rigid, 0.03, 3);
    if (full_score(params) < affine_score) params = affine;
  }

  RegistrationResult result;
  result.transform = params;
  AffineTransform identity;
  double id_score = similarity(resample(moving, identity, reference.dims),
                               reference, options.metric);
  result.score = similarity(resample(moving, params, reference.dims), reference,
                            options.metric);
  if (result.score <= id_score && !params.is_identity()) {
    result.transform = identity;
    result.score = id_score;
    result.improved = false;
  }
  return result;
}

void save_transform(const AffineTransform& t, const std::string& path) {
  json j = {{"translation", t.translation},
            {"rotation", t.rotation},
            {"scale", t.scale},
            {"shear", t.shear}};
  std::ofstream out(path);
  if (!out) throw Error::io("io.write_failed", "cannot write transform: " + path);
  out << j.dump(2) << "\n";
}

AffineTransform load_transform(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("io.not_found", "cannot open transform: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error::io("io.malformed", "bad JSON in " + path + ": " + e.what());
  }
  AffineTransform t;
  auto get3 = [&](const char* key, std::array<double, 3>& dst) {
    auto v = j.value(key, std::vector<double>{});
    if (v.size() != 3)
      throw Error::validation("register.bad_transform",
                              std::string("field ") + key + " needs 3 entries");
    std::copy(v.begin(), v.end(), dst.begin());
  };
  get3("translation", t.translation);
  get3("rotation", t.rotation);
  get3("scale", t.scale);
  get3("shear", t.shear);
  return t;
}

}  // namespace apa
