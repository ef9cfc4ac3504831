#include "apa/features.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "apa/condition.hpp"
#include "apa/error.hpp"

namespace apa {

void FeatureMatrix::validate() const {
  if (features.cols() == 0 || features.rows() == 0)
    throw Error::validation("features.empty", "feature matrix is empty");
  if (labels.size() != static_cast<std::size_t>(features.cols()) ||
      sessions.size() != static_cast<std::size_t>(features.cols()))
    throw Error::validation("features.size_mismatch",
                            "label/session count must match columns");
  if (!features.allFinite())
    throw Error::validation("features.non_finite",
                            "feature matrix has NaN/Inf entries");
  for (int l : labels)
    if (l < 1)
      throw Error::validation("features.bad_label", "category ids start at 1");
}

namespace {

std::string format17(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min(threads, n); ++t)
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

FeatureMatrix load_features(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw Error::io("io.not_found", "cannot open features: " + csv_path);
  std::string line;
  if (!std::getline(in, line))
    throw Error::validation("features.empty", "empty features file: " + csv_path);
  std::size_t columns = 1 + static_cast<std::size_t>(
                                std::count(line.begin(), line.end(), ','));
  if (columns < 3)
    throw Error::validation("features.malformed",
                            "expected at least one region column plus label,session");
  std::size_t e = columns - 2;

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<std::string> sessions;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> values;
    for (std::size_t c = 0; c < e; ++c) {
      if (!std::getline(row, cell, ','))
        throw Error::validation("features.malformed",
                                csv_path + ":" + std::to_string(lineno) +
                                    ": too few columns");
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error::validation("features.malformed",
                                csv_path + ":" + std::to_string(lineno) +
                                    ": non-numeric feature");
      }
    }
    if (!std::getline(row, cell, ','))
      throw Error::validation("features.malformed",
                              csv_path + ":" + std::to_string(lineno) +
                                  ": missing label");
    int label = 0;
    try {
      label = std::stoi(cell);
    } catch (const std::exception&) {
      throw Error::validation("features.malformed",
                              csv_path + ":" + std::to_string(lineno) +
                                  ": non-numeric label");
    }
    if (!std::getline(row, cell))
      throw Error::validation("features.malformed",
                              csv_path + ":" + std::to_string(lineno) +
                                  ": missing session");
    rows.push_back(std::move(values));
    labels.push_back(label);
    sessions.push_back(cell);
  }
  if (rows.empty())
    throw Error::validation("features.empty", "no data rows in " + csv_path);

  FeatureMatrix m;
  m.features.resize(static_cast<Eigen::Index>(e),
                    static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t r = 0; r < e; ++r)
      m.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
          rows[i][r];
  m.labels = std::move(labels);
  m.sessions = std::move(sessions);
  m.validate();
  return m;
}

void save_features(const FeatureMatrix& m, const std::string& csv_path) {
  m.validate();
  std::ofstream out(csv_path);
  if (!out) throw Error::io("io.write_failed", "cannot write features: " + csv_path);
  for (Eigen::Index r = 0; r < m.features.rows(); ++r)
    out << "region_" << (r + 1) << ",";
  out << "label,session\n";
  for (Eigen::Index c = 0; c < m.features.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.features.rows(); ++r)
      out << format17(m.features(r, c)) << ",";
    out << m.labels[static_cast<std::size_t>(c)] << ","
        << m.sessions[static_cast<std::size_t>(c)] << "\n";
  }
}

Eigen::VectorXd region_means(const Volume3D& image, const AtlasVolume& atlas) {
  if (image.dims != atlas.dims)
    throw Error::validation("features.dims_mismatch",
                            "image and atlas dimensions differ");
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(atlas.region_count);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(atlas.region_count);
  for (std::size_t i = 0; i < image.voxels.size(); ++i) {
    std::int32_t l = atlas.labels[i];
    if (l <= 0) continue;
    sums(l - 1) += image.voxels[i];
    counts(l - 1) += 1.0;
  }
  Eigen::VectorXd means(atlas.region_count);
  for (Eigen::Index r = 0; r < means.size(); ++r) {
    if (counts(r) > 0.0) {
      means(r) = sums(r) / counts(r);
    } else {
      std::cerr << "{\"level\":\"warn\",\"code\":\"features.empty_region\","
                << "\"region\":" << (r + 1) << "}\n";
      means(r) = 0.0;
    }
  }
  return means;
}

PipelineOutput build_dataset(const std::vector<SessionData>& sessions,
                             const AtlasVolume& atlas,
                             const Volume3D& reference,
                             const PipelineOptions& options) {
  if (sessions.empty())
    throw Error::validation("features.no_sessions", "no sessions supplied");
  if (reference.dims != atlas.dims)
    throw Error::validation("features.dims_mismatch",
                            "reference and atlas dimensions differ");
  int p = sessions.front().schedule.category_count;
  for (const auto& s : sessions)
    if (s.schedule.category_count != p)
      throw Error::validation("features.category_mismatch",
                              "sessions disagree on category count");

  // Column layout is fixed up front: ordered by (session, condition).
  struct Task {
    std::size_t session;
    std::size_t condition;  // index into schedule.conditions
    int column;
  };
  std::vector<Task> tasks;
  int n_cols = 0;
  for (std::size_t s = 0; s < sessions.size(); ++s)
    for (std::size_t c = 0; c < sessions[s].schedule.conditions.size(); ++c)
      tasks.push_back({s, c, n_cols++});

  bool shared_grid = true;
  for (const auto& s : sessions)
    if (s.data.dims[0] != sessions.front().data.dims[0] ||
        s.data.dims[1] != sessions.front().data.dims[1] ||
        s.data.dims[2] != sessions.front().data.dims[2])
      shared_grid = false;

  PipelineOutput out;
  out.features.features.resize(atlas.region_count, n_cols);
  out.features.labels.resize(static_cast<std::size_t>(n_cols));
  out.features.sessions.resize(static_cast<std::size_t>(n_cols));
  if (shared_grid)
    out.voxel_conditions.resize(
        static_cast<Eigen::Index>(sessions.front().data.spatial_size()), n_cols);
  out.betamaps.resize(sessions.size());
  out.transforms.resize(sessions.size());

  // Stage 1: per-session GLM and condition images (parallel over sessions).
  struct SessionStage {
    BetaMap betas;
    std::vector<Volume3D> raw;     // condition max, unmasked
    std::vector<Volume3D> masked;  // after beta masking
    AffineTransform shared_tau;
  };
  std::vector<SessionStage> stages(sessions.size());

  parallel_for(static_cast<int>(sessions.size()), options.threads, [&](int si) {
    const auto s = static_cast<std::size_t>(si);
    const auto& session = sessions[s];
    try {
      session.data.validate();
      session.schedule.validate(session.data.time_points());
      HrfKernel hrf = canonical_hrf(session.data.tr_ms);
      DesignMatrix design =
          build_design_matrix(session.schedule, session.data.time_points(), hrf);
      design.session_id = session.schedule.session_id;
      NoiseModel noise = options.noise == NoiseModel::Kind::Ar1
                             ? estimate_ar1(session.data, design)
                             : NoiseModel::identity();
      stages[s].betas = positive_mask(solve_gls(session.data, design, noise));

      std::array<std::size_t, 3> dims{session.data.dims[0], session.data.dims[1],
                                      session.data.dims[2]};
      for (const auto& cond : session.schedule.conditions) {
        Eigen::MatrixXd slab = gather_condition(session.data, session.schedule,
                                                cond.condition_id, options.window);
        Volume3D cmax = condition_max(slab, dims);
        stages[s].masked.push_back(
            mask_condition(cmax, stages[s].betas, cond.category_id));
        stages[s].raw.push_back(std::move(cmax));
      }
      if (options.shared_session_transform) {
        // One registration per session, on the mean masked condition image.
        Volume3D mean = Volume3D::zeros(dims[0], dims[1], dims[2]);
        for (const auto& img : stages[s].masked)
          for (std::size_t v = 0; v < mean.voxels.size(); ++v)
            mean.voxels[v] += img.voxels[v] /
                              static_cast<float>(stages[s].masked.size());
        stages[s].shared_tau =
            register_images(mean, reference, options.registration).transform;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), e.code(),
                  std::string(e.what()) + " [session " +
                      session.schedule.session_id + "]");
    }
  });

  // Stage 2: registration + region means per condition (parallel over tasks).
  parallel_for(static_cast<int>(tasks.size()), options.threads, [&](int ti) {
    const Task& task = tasks[static_cast<std::size_t>(ti)];
    const auto& session = sessions[task.session];
    const auto& cond = session.schedule.conditions[task.condition];
    try {
      const Volume3D& masked = stages[task.session].masked[task.condition];
      AffineTransform tau =
          options.shared_session_transform
              ? stages[task.session].shared_tau
              : register_images(masked, reference, options.registration)
                    .transform;
      Volume3D registered = resample(masked, tau, reference.dims);
      out.features.features.col(task.column) = region_means(registered, atlas);
      out.features.labels[static_cast<std::size_t>(task.column)] = cond.category_id;
      out.features.sessions[static_cast<std::size_t>(task.column)] =
          session.schedule.session_id;
      if (shared_grid) {
        const Volume3D& raw = stages[task.session].raw[task.condition];
        for (std::size_t v = 0; v < raw.voxels.size(); ++v)
          out.voxel_conditions(static_cast<Eigen::Index>(v), task.column) =
              raw.voxels[v];
      }
    } catch (const Error& e) {
      throw Error(e.kind(), e.code(),
                  std::string(e.what()) + " [session " +
                      session.schedule.session_id + ", condition " +
                      std::to_string(cond.condition_id) + "]");
    }
  });

  for (std::size_t s = 0; s < sessions.size(); ++s) {
    out.betamaps[s] = std::move(stages[s].betas);
    if (options.shared_session_transform)
      out.transforms[s] = stages[s].shared_tau;
  }
  out.features.validate();
  return out;
}

ActiveRegionMap active_region_probability(
    const std::vector<BetaMap>& betamaps,
    const std::vector<AffineTransform>& transforms,
    const std::array<std::size_t, 3>& native_dims,
    const std::array<std::size_t, 3>& out_dims, int category_id,
    double threshold, double min_beta) {
  if (betamaps.empty())
    throw Error::validation("features.no_sessions", "need at least one session");
  if (transforms.size() != betamaps.size())
    throw Error::validation("features.size_mismatch",
                            "one transform per session required");

  Volume3D prob = Volume3D::zeros(out_dims[0], out_dims[1], out_dims[2]);
  for (std::size_t s = 0; s < betamaps.size(); ++s) {
    const BetaMap& b = betamaps[s];
    if (category_id < 1 || category_id > b.category_count)
      throw Error::validation("features.bad_category",
                              "category out of range for session betas");
    Volume3D native = Volume3D::zeros(native_dims[0], native_dims[1], native_dims[2]);
    if (native.size() != static_cast<std::size_t>(b.betas.rows()))
      throw Error::validation("features.dims_mismatch",
                              "beta rows do not match native dims");
    for (std::size_t v = 0; v < native.voxels.size(); ++v)
      native.voxels[v] = static_cast<float>(
          std::max(0.0, b.betas(static_cast<Eigen::Index>(v), category_id - 1)));
    Volume3D registered = resample(native, transforms[s], out_dims);
    for (std::size_t v = 0; v < prob.voxels.size(); ++v)
      if (registered.voxels[v] > min_beta)
        prob.voxels[v] += 1.0f / static_cast<float>(betamaps.size());
  }

  ActiveRegionMap out;
  out.mask = Volume3D::zeros(out_dims[0], out_dims[1], out_dims[2]);
  for (std::size_t v = 0; v < prob.voxels.size(); ++v)
    out.mask.voxels[v] = prob.voxels[v] > threshold ? 1.0f : 0.0f;
  out.probability = std::move(prob);
  return out;
}

}  // namespace apa
