// apa: anatomical pattern analysis pipeline driver.
//
// Subcommands cover the full chain: synthetic data generation, design
// matrices, GLM fits, registration, feature extraction, training,
// prediction and evaluation. Every output artifact gets a manifest with
// the tool version, seed, effective config and input content hashes.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "apa/condition.hpp"
#include "apa/config.hpp"
#include "apa/design.hpp"
#include "apa/ecoc.hpp"
#include "apa/error.hpp"
#include "apa/eval.hpp"
#include "apa/features.hpp"
#include "apa/glm.hpp"
#include "apa/hash.hpp"
#include "apa/registration.hpp"
#include "apa/rng.hpp"
#include "apa/schedule.hpp"
#include "apa/synth.hpp"
#include "apa/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kRngId = "pcg32-xsh-rr";

std::string format17(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

int parse_int(const std::map<std::string, std::string>& cfg,
              const std::string& key) {
  const std::string& s = cfg.at(key);
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw apa::Error::validation("config.bad_value",
                                 key + " is not an integer: " + s);
  }
}

double parse_double(const std::map<std::string, std::string>& cfg,
                    const std::string& key) {
  const std::string& s = cfg.at(key);
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw apa::Error::validation("config.bad_value",
                                 key + " is not a number: " + s);
  }
}

bool parse_bool(const std::map<std::string, std::string>& cfg,
                const std::string& key) {
  const std::string& s = cfg.at(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw apa::Error::validation("config.bad_value",
                               key + " is not a boolean: " + s);
}

std::uint64_t parse_seed(const std::map<std::string, std::string>& cfg) {
  const std::string& s = cfg.at("seed");
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw apa::Error::validation("config.bad_value", "seed is not an integer: " + s);
  }
}

/// Declares the tunable keys of one subcommand, binds them to CLI flags and
/// later reports which flags were actually passed.
class Keyed {
public:
  void add(CLI::App* cmd, const std::string& key, const std::string& defval,
           const std::string& desc) {
    defaults_[key] = defval;
    cmd->add_option("--" + key, values_[key], desc + " [" + defval + "]");
  }
  void add_flag(CLI::App* cmd, const std::string& key, const std::string& desc) {
    defaults_[key] = "false";
    flags_.push_back(key);
    cmd->add_flag("--" + key, desc);
  }

  std::map<std::string, std::string> resolve(CLI::App* cmd,
                                             const std::string& config_file) const {
    std::map<std::string, std::string> flags;
    for (const auto& [key, value] : values_)
      if (cmd->count("--" + key) > 0) flags[key] = value;
    for (const auto& key : flags_)
      if (cmd->count("--" + key) > 0) flags[key] = "true";
    apa::ConfigResolver resolver(defaults_);
    std::optional<std::string> file;
    if (!config_file.empty()) file = config_file;
    return resolver.resolve(flags, file);
  }

private:
  std::map<std::string, std::string> defaults_;
  std::map<std::string, std::string> values_;
  std::vector<std::string> flags_;
};

json config_json(const std::map<std::string, std::string>& cfg) {
  json j = json::object();
  for (const auto& [k, v] : cfg) j[k] = v;
  return j;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw apa::Error::io("io.write_failed", "cannot write " + path);
  out << body;
  if (!out) throw apa::Error::io("io.write_failed", "write failed: " + path);
}

/// `<artifact>.manifest.json` with provenance for byte-identical reruns.
void write_manifest(const std::string& artifact, const std::string& subcommand,
                    const std::map<std::string, std::string>& cfg,
                    const std::vector<std::string>& inputs,
                    const json& extra = json::object()) {
  json j;
  j["tool"] = "apa";
  j["version"] = kVersion;
  j["rng"] = kRngId;
  j["subcommand"] = subcommand;
  if (cfg.count("seed")) j["seed"] = cfg.at("seed");
  j["config"] = config_json(cfg);
  json in = json::object();
  for (const auto& path : inputs) in[fs::path(path).filename().string()] = apa::hash_file(path);
  j["inputs"] = in;
  if (!extra.empty()) j["result"] = extra;
  write_text(artifact + ".manifest.json", j.dump(2) + "\n");
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::string& col_prefix) {
  std::ostringstream os;
  for (int c = 0; c < m.cols(); ++c)
    os << (c ? "," : "") << col_prefix << (c + 1);
  os << "\n";
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c)
      os << (c ? "," : "") << format17(m(r, c));
    os << "\n";
  }
  write_text(path, os.str());
}

apa::NoiseModel resolve_noise(const std::string& name, const apa::Volume4D& data,
                              const apa::DesignMatrix& design) {
  if (name == "identity") return apa::NoiseModel::identity();
  if (name == "ar1") return apa::estimate_ar1(data, design);
  throw apa::Error::validation("config.bad_value", "unknown noise model: " + name);
}

struct SessionFiles {
  std::string id;
  std::string data;
  std::string onsets;
};

std::vector<SessionFiles> load_session_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw apa::Error::io("io.not_found", "cannot open manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw apa::Error::io("io.malformed", "bad JSON in " + path + ": " + e.what());
  }
  if (!j.contains("sessions") || !j["sessions"].is_array() || j["sessions"].empty())
    throw apa::Error::validation("manifest.malformed",
                                 "manifest needs a non-empty sessions array");
  fs::path base = fs::path(path).parent_path();
  std::vector<SessionFiles> out;
  for (const auto& s : j["sessions"]) {
    SessionFiles f;
    f.id = s.value("id", "");
    f.data = (base / s.value("data", "")).string();
    f.onsets = (base / s.value("onsets", "")).string();
    if (f.id.empty() || s.value("data", "").empty() || s.value("onsets", "").empty())
      throw apa::Error::validation("manifest.malformed",
                                   "session entries need id, data and onsets");
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<apa::SessionData> load_sessions(const std::vector<SessionFiles>& files,
                                            bool units_seconds) {
  std::vector<apa::SessionData> out;
  for (const auto& f : files) {
    apa::SessionData s;
    s.data = apa::load_volume4d(f.data);
    s.schedule = apa::load_schedule(f.onsets, units_seconds, s.data.tr_ms);
    s.schedule.session_id = f.id;
    out.push_back(std::move(s));
  }
  return out;
}

apa::PipelineOptions pipeline_options(const std::map<std::string, std::string>& cfg,
                                      int threads) {
  apa::PipelineOptions o;
  const std::string noise = cfg.at("noise");
  if (noise == "identity")
    o.noise = apa::NoiseModel::Kind::Identity;
  else if (noise == "ar1")
    o.noise = apa::NoiseModel::Kind::Ar1;
  else
    throw apa::Error::validation("config.bad_value", "unknown noise model: " + noise);
  int window = parse_int(cfg, "window");
  if (window < 0)
    throw apa::Error::validation("config.bad_value", "window must be >= 0");
  o.window = static_cast<std::size_t>(window);
  o.shared_session_transform = parse_bool(cfg, "shared-transform");
  o.registration.metric =
      apa::SimilarityMetric::parse(cfg.at("metric"), parse_int(cfg, "bins"));
  o.registration.max_sweeps = parse_int(cfg, "max-sweeps");
  o.registration.tolerance = parse_double(cfg, "tolerance");
  o.threads = threads;
  return o;
}

void add_pipeline_keys(CLI::App* cmd, Keyed& keys) {
  keys.add(cmd, "noise", "identity", "noise model: identity or ar1");
  keys.add(cmd, "window", "0", "peri-onset scan window for condition images");
  keys.add(cmd, "metric", "nmi", "similarity metric: nmi, mi, je, cr, woods");
  keys.add(cmd, "bins", "64", "histogram bins for similarity metrics");
  keys.add(cmd, "max-sweeps", "20", "coordinate-descent sweeps per level");
  keys.add(cmd, "tolerance", "1e-4", "registration convergence tolerance");
  keys.add_flag(cmd, "units-seconds", "onsets are seconds, not scan indices");
}

std::string voxels_path_for(const std::string& features_path) {
  const std::string suffix = ".features.csv";
  if (features_path.size() > suffix.size() &&
      features_path.substr(features_path.size() - suffix.size()) == suffix)
    return features_path.substr(0, features_path.size() - suffix.size()) +
           ".voxels.csv";
  return features_path + ".voxels.csv";
}

// --------------------------------------------------------------------------
// subcommand bodies

void run_design(const std::string& onsets, const std::string& out,
                const std::map<std::string, std::string>& cfg) {
  double tr_ms = parse_double(cfg, "tr-ms");
  auto t_len = static_cast<std::size_t>(parse_int(cfg, "t"));
  apa::StimulusSchedule schedule =
      apa::load_schedule(onsets, parse_bool(cfg, "units-seconds"), tr_ms);
  apa::HrfKernel hrf = apa::canonical_hrf(tr_ms, parse_double(cfg, "hrf-duration-s"));
  apa::DesignMatrix dm = apa::build_design_matrix(schedule, t_len, hrf);
  write_matrix_csv(out, dm.values, "category_");
  write_manifest(out, "design", cfg, {onsets},
                 {{"rows", dm.values.rows()}, {"categories", dm.values.cols()}});
}

void run_glm(const std::string& data_path, const std::string& onsets,
             const std::string& out, const std::map<std::string, std::string>& cfg) {
  apa::Volume4D data = apa::load_volume4d(data_path);
  apa::StimulusSchedule schedule =
      apa::load_schedule(onsets, parse_bool(cfg, "units-seconds"), data.tr_ms);
  apa::HrfKernel hrf = apa::canonical_hrf(data.tr_ms);
  apa::DesignMatrix dm = apa::build_design_matrix(schedule, data.time_points(), hrf);
  apa::NoiseModel noise = resolve_noise(cfg.at("noise"), data, dm);
  apa::BetaMap beta = apa::solve_gls(data, dm, noise);

  std::array<std::size_t, 3> dims{data.dims[0], data.dims[1], data.dims[2]};
  for (int p = 0; p < beta.category_count; ++p) {
    apa::Volume3D v;
    v.dims = dims;
    v.voxels.resize(beta.betas.rows());
    for (Eigen::Index i = 0; i < beta.betas.rows(); ++i)
      v.voxels[static_cast<std::size_t>(i)] = static_cast<float>(beta.betas(i, p));
    apa::save_volume3d(v, out + "_cat" + std::to_string(p + 1) + ".vol.json");
  }
  write_matrix_csv(out + ".csv", beta.betas, "category_");
  json extra{{"categories", beta.category_count},
             {"noise", cfg.at("noise")},
             {"rho", noise.kind == apa::NoiseModel::Kind::Ar1 ? noise.rho : 0.0}};
  write_manifest(out, "glm", cfg, {data_path, onsets}, extra);
}

void run_register(const std::string& moving_path, const std::string& ref_path,
                  const std::string& out,
                  const std::map<std::string, std::string>& cfg) {
  apa::Volume3D moving = apa::load_volume3d(moving_path);
  apa::Volume3D reference = apa::load_volume3d(ref_path);
  apa::RegistrationOptions options;
  options.metric = apa::SimilarityMetric::parse(cfg.at("metric"), parse_int(cfg, "bins"));
  options.max_sweeps = parse_int(cfg, "max-sweeps");
  options.tolerance = parse_double(cfg, "tolerance");
  apa::RegistrationResult result = apa::register_images(moving, reference, options);
  apa::save_transform(result.transform, out);
  write_manifest(out, "register", cfg, {moving_path, ref_path},
                 {{"score", result.score}, {"improved", result.improved}});
}

void run_register_eval(const std::string& out,
                       const std::map<std::string, std::string>& cfg) {
  int trials = parse_int(cfg, "trials");
  auto size = static_cast<std::size_t>(parse_int(cfg, "size"));
  std::uint64_t seed = parse_seed(cfg);
  std::vector<std::string> metrics;
  if (cfg.at("metric") == "all")
    metrics = {"nmi", "mi", "je", "cr", "woods"};
  else
    metrics = {cfg.at("metric")};

  std::ostringstream os;
  os << "metric,trial,corner_error,translation_ok,rotation_ok\n";
  json summary = json::object();
  for (const auto& name : metrics) {
    apa::SimilarityMetric metric = apa::SimilarityMetric::parse(name);
    auto suite = apa::registration_suite(trials, size, metric, seed);
    double mean_err = 0.0;
    int ok = 0;
    for (std::size_t i = 0; i < suite.size(); ++i) {
      const auto& t = suite[i];
      os << name << "," << i << "," << format17(t.corner_error) << ","
         << (t.translation_ok ? 1 : 0) << "," << (t.rotation_ok ? 1 : 0) << "\n";
      mean_err += t.corner_error;
      if (t.translation_ok && t.rotation_ok) ++ok;
    }
    summary[name] = {{"mean_corner_error", mean_err / suite.size()},
                     {"recovered", ok}};
  }
  write_text(out, os.str());
  write_manifest(out, "register-eval", cfg, {}, summary);
}

void run_features(const std::string& sessions_path, const std::string& atlas_path,
                  const std::string& ref_path, const std::string& out, int threads,
                  const std::map<std::string, std::string>& cfg) {
  auto files = load_session_manifest(sessions_path);
  auto sessions = load_sessions(files, parse_bool(cfg, "units-seconds"));
  apa::AtlasVolume atlas = apa::load_atlas(atlas_path);
  apa::Volume3D reference = apa::load_volume3d(ref_path);
  apa::PipelineOutput result =
      apa::build_dataset(sessions, atlas, reference, pipeline_options(cfg, threads));
  apa::save_features(result.features, out);
  if (result.voxel_conditions.size() > 0) {
    apa::FeatureMatrix vox;
    vox.features = result.voxel_conditions;
    vox.labels = result.features.labels;
    vox.sessions = result.features.sessions;
    apa::save_features(vox, voxels_path_for(out));
  }
  std::vector<std::string> inputs{sessions_path, atlas_path, ref_path};
  for (const auto& f : files) {
    inputs.push_back(f.data);
    inputs.push_back(f.onsets);
  }
  write_manifest(out, "features", cfg, inputs,
                 {{"columns", result.features.column_count()},
                  {"regions", result.features.region_count()}});
}

void run_regions(const std::string& sessions_path, const std::string& atlas_path,
                 const std::string& ref_path, const std::string& out,
                 const std::string& mask_out, int threads,
                 const std::map<std::string, std::string>& cfg) {
  auto files = load_session_manifest(sessions_path);
  auto sessions = load_sessions(files, parse_bool(cfg, "units-seconds"));
  apa::AtlasVolume atlas = apa::load_atlas(atlas_path);
  apa::Volume3D reference = apa::load_volume3d(ref_path);
  apa::PipelineOutput result =
      apa::build_dataset(sessions, atlas, reference, pipeline_options(cfg, threads));
  std::array<std::size_t, 3> native{sessions[0].data.dims[0],
                                    sessions[0].data.dims[1],
                                    sessions[0].data.dims[2]};
  apa::ActiveRegionMap map = apa::active_region_probability(
      result.betamaps, result.transforms, native, reference.dims,
      parse_int(cfg, "category"), parse_double(cfg, "threshold"),
      parse_double(cfg, "min-beta"));
  apa::save_volume3d(map.probability, out);
  apa::save_volume3d(map.mask, mask_out);
  std::vector<std::string> inputs{sessions_path, atlas_path, ref_path};
  for (const auto& f : files) {
    inputs.push_back(f.data);
    inputs.push_back(f.onsets);
  }
  write_manifest(out, "regions", cfg, inputs);
}

void run_train(const std::string& features_path, const std::string& out,
               int category, bool multiclass, int threads,
               const std::map<std::string, std::string>& cfg) {
  if (category > 0 && multiclass)
    throw apa::Error::validation("cli.usage",
                                 "--category and --multiclass are exclusive");
  apa::FeatureMatrix features = apa::load_features(features_path);
  std::uint64_t seed = parse_seed(cfg);
  apa::BoostParams boost;
  boost.tree.max_depth = parse_int(cfg, "max-depth");
  if (category > 0) {
    std::vector<int> y(features.labels.size());
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = features.labels[i] == category ? +1 : -1;
    apa::BinaryEnsemble ens = apa::train_binary(features.features, y, boost, seed);
    apa::save_binary_model(ens, static_cast<int>(features.region_count()), out);
  } else {
    apa::MulticlassParams params;
    params.boost = boost;
    params.threads = threads;
    apa::EnsembleModel model = apa::train_multiclass(features, params, seed);
    apa::save_model(model, out);
  }
  write_manifest(out, "train", cfg, {features_path},
                 {{"mode", category > 0 ? "binary" : "multiclass"},
                  {"category", category}});
}

void run_predict(const std::string& model_path, const std::string& features_path,
                 const std::string& out,
                 const std::map<std::string, std::string>& cfg) {
  apa::EnsembleModel model = apa::load_model(model_path);
  apa::FeatureMatrix features = apa::load_features(features_path);
  std::ostringstream os;
  os << "column,predicted";
  for (int m = 1; m <= model.category_count; ++m) os << ",margin_" << m;
  os << "\n";
  for (Eigen::Index c = 0; c < features.features.cols(); ++c) {
    auto pred = apa::predict_multiclass(model, features.features.col(c));
    os << c << "," << pred.category;
    for (double m : pred.margins) os << "," << format17(m);
    os << "\n";
  }
  write_text(out, os.str());
  write_manifest(out, "predict", cfg, {model_path, features_path});
}

void run_eval(const std::string& features_path, const std::string& out,
              const std::string& csv_out, int threads,
              const std::map<std::string, std::string>& cfg) {
  apa::FeatureMatrix features = apa::load_features(features_path);
  apa::EvalParams params;
  params.model.boost.tree.max_depth = parse_int(cfg, "max-depth");
  params.model.threads = threads;
  params.zscore = parse_bool(cfg, "zscore");
  std::uint64_t seed = parse_seed(cfg);
  apa::EvalReport report = apa::evaluate(features, params, seed);

  json j;
  j["tool"] = "apa";
  j["version"] = kVersion;
  j["rng"] = kRngId;
  j["seed"] = cfg.at("seed");
  j["config"] = config_json(cfg);
  j["inputs"] = {{fs::path(features_path).filename().string(),
                  apa::hash_file(features_path)}};
  j["category_count"] = report.category_count;
  j["mean_accuracy"] = report.mean_accuracy;
  j["std_accuracy"] = report.std_accuracy;
  j["mean_binary_accuracy"] = report.mean_binary_accuracy;
  j["mean_binary_auc"] = report.mean_binary_auc;
  json folds = json::array();
  for (const auto& f : report.folds)
    folds.push_back({{"subject", f.subject},
                     {"accuracy", f.accuracy},
                     {"binary_accuracy", f.binary_accuracy},
                     {"binary_auc", f.binary_auc}});
  j["folds"] = folds;
  json confusion = json::array();
  for (int r = 0; r < report.confusion.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < report.confusion.cols(); ++c)
      row.push_back(report.confusion(r, c));
    confusion.push_back(row);
  }
  j["confusion"] = confusion;
  write_text(out, j.dump(2) + "\n");

  if (!csv_out.empty()) {
    std::ostringstream os;
    os << "fold,subject,accuracy\n";
    for (std::size_t i = 0; i < report.folds.size(); ++i)
      os << i << "," << report.folds[i].subject << ","
         << format17(report.folds[i].accuracy) << "\n";
    os << "mean,," << format17(report.mean_accuracy) << "\n";
    os << "std,," << format17(report.std_accuracy) << "\n";
    write_text(csv_out, os.str());
  }
  write_manifest(out, "eval", cfg, {features_path},
                 {{"mean_accuracy", report.mean_accuracy}});
}

void run_corr(const std::string& features_path, const std::string& out,
              const std::map<std::string, std::string>& cfg) {
  const std::string& space = cfg.at("space");
  std::string source = features_path;
  if (space == "voxel")
    source = voxels_path_for(features_path);
  else if (space != "feature")
    throw apa::Error::validation("config.bad_value",
                                 "space must be feature or voxel: " + space);
  apa::FeatureMatrix m = apa::load_features(source);
  int p = 0;
  for (int label : m.labels) p = std::max(p, label);
  Eigen::MatrixXd corr = apa::correlation_matrix(m.features, m.labels, p);
  write_matrix_csv(out, corr, "category_");
  write_manifest(out, "corr", cfg, {source});
}

// --------------------------------------------------------------------------
// synth presets

void write_session_manifest(const fs::path& dir,
                            const std::vector<SessionFiles>& files) {
  json j;
  json sessions = json::array();
  for (const auto& f : files)
    sessions.push_back({{"id", f.id}, {"data", f.data}, {"onsets", f.onsets}});
  j["sessions"] = sessions;
  write_text((dir / "manifest.json").string(), j.dump(2) + "\n");
}

json truth_header(const std::string& preset,
                  const std::map<std::string, std::string>& cfg) {
  json j;
  j["tool"] = "apa";
  j["version"] = kVersion;
  j["rng"] = kRngId;
  j["preset"] = preset;
  j["seed"] = cfg.at("seed");
  j["config"] = config_json(cfg);
  return j;
}

void synth_glm(const fs::path& dir, std::uint64_t seed,
               const std::map<std::string, std::string>& cfg) {
  apa::Phantom phantom = apa::make_phantom({16, 16, 16}, 8, apa::derive_seed(seed, 1));
  apa::SessionSpec spec;
  spec.category_count = 2;
  spec.condition_count = 4;
  spec.snr = 0.0;  // noiseless
  apa::SyntheticSession session =
      apa::make_session(phantom.atlas, spec, apa::derive_seed(seed, 2));

  apa::save_atlas(phantom.atlas, (dir / "atlas.atlas.json").string());
  apa::save_volume3d(phantom.reference, (dir / "reference.vol.json").string());
  apa::save_volume4d(session.data, (dir / "s1_r1.vol.json").string());
  apa::save_schedule(session.schedule, (dir / "s1_r1.onsets.tsv").string());
  write_matrix_csv((dir / "s1_r1.truth_betas.csv").string(),
                   session.true_betas.betas, "category_");
  write_session_manifest(dir, {{"s1_r1", "s1_r1.vol.json", "s1_r1.onsets.tsv"}});

  json truth = truth_header("glm", cfg);
  truth["sessions"] = {{{"id", "s1_r1"},
                        {"data", "s1_r1.vol.json"},
                        {"onsets", "s1_r1.onsets.tsv"},
                        {"true_betas", "s1_r1.truth_betas.csv"},
                        {"active_regions", session.active_regions}}};
  write_text((dir / "truth.json").string(), truth.dump(2) + "\n");
}

void synth_register(const fs::path& dir, std::uint64_t seed,
                    const std::map<std::string, std::string>& cfg) {
  apa::Phantom phantom = apa::make_phantom({32, 32, 32}, 10, apa::derive_seed(seed, 1));
  apa::AffineTransform planted;
  planted.translation = {3.0, -2.0, 1.0};
  planted.rotation = {0.0, 0.0, 0.1};
  apa::Volume3D moving =
      apa::resample(phantom.reference, planted, phantom.reference.dims);

  apa::save_volume3d(phantom.reference, (dir / "reference.vol.json").string());
  apa::save_volume3d(moving, (dir / "moving.vol.json").string());

  // Exact inverse of T(t) * Rz(theta): rotation -theta, translation Rz(-theta)*(-t).
  double c = std::cos(-planted.rotation[2]), s = std::sin(-planted.rotation[2]);
  std::array<double, 3> t_inv{
      c * -planted.translation[0] - s * -planted.translation[1],
      s * -planted.translation[0] + c * -planted.translation[1],
      -planted.translation[2]};
  json truth = truth_header("register", cfg);
  truth["planted"] = {{"translation", planted.translation},
                      {"rotation", planted.rotation}};
  truth["expected"] = {{"translation", t_inv},
                       {"rotation", {0.0, 0.0, -planted.rotation[2]}}};
  truth["moving"] = "moving.vol.json";
  truth["reference"] = "reference.vol.json";
  write_text((dir / "truth.json").string(), truth.dump(2) + "\n");
}

void synth_classify(const fs::path& dir, std::uint64_t seed,
                    const std::map<std::string, std::string>& cfg) {
  apa::ClassificationSpec spec;
  spec.feature_dim = 10;
  spec.n_per_class = {180, 20};  // 9:1 imbalance
  spec.separation = 3.0;
  apa::FeatureMatrix train = apa::make_classification_set(spec, apa::derive_seed(seed, 1));
  apa::ClassificationSpec test_spec = spec;
  test_spec.n_per_class = {50, 50};
  apa::FeatureMatrix test =
      apa::make_classification_set(test_spec, apa::derive_seed(seed, 2));
  apa::save_features(train, (dir / "train.features.csv").string());
  apa::save_features(test, (dir / "test.features.csv").string());
  json truth = truth_header("classify", cfg);
  truth["train"] = "train.features.csv";
  truth["test"] = "test.features.csv";
  truth["n_per_class"] = spec.n_per_class;
  truth["separation"] = spec.separation;
  write_text((dir / "truth.json").string(), truth.dump(2) + "\n");
}

void synth_full(const fs::path& dir, std::uint64_t seed,
                const std::map<std::string, std::string>& cfg) {
  const int regions = 8, subjects = 4;
  apa::Phantom phantom = apa::make_phantom({16, 16, 16}, regions, apa::derive_seed(seed, 1));

  apa::SessionSpec spec;
  spec.category_count = 3;
  spec.condition_count = 6;
  spec.snr = 5.0;
  spec.baseline = 1.0;

  // All subjects share one ground truth: one active region per category.
  apa::Pcg32 rng(apa::derive_seed(seed, 2));
  std::vector<int> ids(regions);
  for (int i = 0; i < regions; ++i) ids[static_cast<std::size_t>(i)] = i + 1;
  rng.shuffle(ids);
  for (int m = 0; m < spec.category_count; ++m)
    spec.fixed_active_regions.push_back({ids[static_cast<std::size_t>(m)]});

  apa::save_atlas(phantom.atlas, (dir / "atlas.atlas.json").string());
  apa::save_volume3d(phantom.reference, (dir / "reference.vol.json").string());

  std::vector<SessionFiles> files;
  json truth_sessions = json::array();
  for (int s = 1; s <= subjects; ++s) {
    std::string id = "s" + std::to_string(s) + "_r1";
    apa::SyntheticSession session = apa::make_session(
        phantom.atlas, spec, apa::derive_seed(seed, 10 + static_cast<std::uint64_t>(s)));
    session.schedule.session_id = id;
    std::string vol = id + ".vol.json";
    std::string tsv = id + ".onsets.tsv";
    apa::save_volume4d(session.data, (dir / vol).string());
    apa::save_schedule(session.schedule, (dir / tsv).string());
    files.push_back({id, vol, tsv});
    truth_sessions.push_back({{"id", id}, {"data", vol}, {"onsets", tsv}});
  }
  write_session_manifest(dir, files);

  json truth = truth_header("full", cfg);
  truth["category_count"] = spec.category_count;
  truth["condition_count"] = spec.condition_count;
  truth["snr"] = spec.snr;
  truth["baseline"] = spec.baseline;
  truth["active_regions"] = spec.fixed_active_regions;
  truth["atlas"] = "atlas.atlas.json";
  truth["reference"] = "reference.vol.json";
  truth["manifest"] = "manifest.json";
  truth["sessions"] = truth_sessions;
  write_text((dir / "truth.json").string(), truth.dump(2) + "\n");
}

void run_synth(const std::string& out, const std::map<std::string, std::string>& cfg) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw apa::Error::io("io.write_failed", "cannot create " + out);
  std::uint64_t seed = parse_seed(cfg);
  const std::string& preset = cfg.at("preset");
  if (preset == "glm")
    synth_glm(out, seed, cfg);
  else if (preset == "register")
    synth_register(out, seed, cfg);
  else if (preset == "classify")
    synth_classify(out, seed, cfg);
  else if (preset == "full")
    synth_full(out, seed, cfg);
  else
    throw apa::Error::validation("config.bad_value", "unknown preset: " + preset);
}

const char* kind_name(apa::ErrorKind k) {
  switch (k) {
    case apa::ErrorKind::Validation: return "validation";
    case apa::ErrorKind::Numeric: return "numeric";
    case apa::ErrorKind::Io: return "io";
  }
  return "validation";
}

int exit_code(apa::ErrorKind k) {
  switch (k) {
    case apa::ErrorKind::Validation: return 1;
    case apa::ErrorKind::Numeric: return 2;
    case apa::ErrorKind::Io: return 3;
  }
  return 1;
}

void print_error(const std::string& code, const std::string& kind,
                 const std::string& message) {
  json j{{"code", code}, {"kind", kind}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anatomical pattern analysis pipeline"};
  app.require_subcommand(0, 1);
  bool want_version = false, want_json = false;
  app.add_flag("--version", want_version, "print version and exit");
  app.add_flag("--json", want_json, "machine-readable version output");

  // Shared option storage; only the chosen subcommand's values are read.
  std::string onsets, data_path, out, csv_out, moving, reference, atlas,
      sessions, model_path, features_path, mask_out, config_file;
  int threads = 1, category = 0;
  bool multiclass = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_file, "JSON config file");
  };

  Keyed design_keys;
  auto* design = app.add_subcommand("design", "emit the design matrix as CSV");
  design->add_option("--onsets", onsets, "stimulus schedule TSV")->required();
  design->add_option("--out", out, "output CSV path")->required();
  design_keys.add(design, "t", "121", "number of scans");
  design_keys.add(design, "tr-ms", "2500", "repetition time in ms");
  design_keys.add(design, "hrf-duration-s", "32", "HRF kernel duration, seconds");
  design_keys.add_flag(design, "units-seconds", "onsets are seconds");
  add_common(design);
  design->callback([&] {
    run_design(onsets, out, design_keys.resolve(design, config_file));
  });

  Keyed glm_keys;
  auto* glm = app.add_subcommand("glm", "fit session betas by GLS");
  glm->add_option("--data", data_path, "4D session volume")->required();
  glm->add_option("--onsets", onsets, "stimulus schedule TSV")->required();
  glm->add_option("--out", out, "output stem")->required();
  glm_keys.add(glm, "noise", "identity", "noise model: identity or ar1");
  glm_keys.add_flag(glm, "units-seconds", "onsets are seconds");
  add_common(glm);
  glm->callback([&] {
    run_glm(data_path, onsets, out, glm_keys.resolve(glm, config_file));
  });

  Keyed reg_keys;
  auto* reg = app.add_subcommand("register", "estimate the aligning transform");
  reg->add_option("--moving", moving, "moving image")->required();
  reg->add_option("--reference", reference, "reference image")->required();
  reg->add_option("--out", out, "output transform JSON")->required();
  reg_keys.add(reg, "metric", "nmi", "similarity metric");
  reg_keys.add(reg, "bins", "64", "histogram bins");
  reg_keys.add(reg, "max-sweeps", "20", "sweeps per level");
  reg_keys.add(reg, "tolerance", "1e-4", "convergence tolerance");
  add_common(reg);
  reg->callback([&] {
    run_register(moving, reference, out, reg_keys.resolve(reg, config_file));
  });

  Keyed regeval_keys;
  auto* regeval = app.add_subcommand("register-eval",
                                     "phantom registration error table");
  regeval->add_option("--out", out, "output CSV path")->required();
  regeval_keys.add(regeval, "trials", "20", "seeded trials per metric");
  regeval_keys.add(regeval, "size", "32", "phantom edge length");
  regeval_keys.add(regeval, "metric", "nmi", "metric name, or all");
  regeval_keys.add(regeval, "seed", "42", "master seed");
  add_common(regeval);
  regeval->callback([&] {
    run_register_eval(out, regeval_keys.resolve(regeval, config_file));
  });

  Keyed feat_keys;
  auto* feat = app.add_subcommand("features", "extract region features");
  feat->add_option("--sessions", sessions, "session manifest JSON")->required();
  feat->add_option("--atlas", atlas, "atlas volume")->required();
  feat->add_option("--reference", reference, "reference image")->required();
  feat->add_option("--out", out, "output features CSV")->required();
  feat->add_option("--threads", threads, "worker threads");
  add_pipeline_keys(feat, feat_keys);
  feat_keys.add_flag(feat, "shared-transform", "register once per session");
  add_common(feat);
  feat->callback([&] {
    run_features(sessions, atlas, reference, out, threads,
                 feat_keys.resolve(feat, config_file));
  });

  Keyed regions_keys;
  auto* regions = app.add_subcommand("regions", "active-region probability map");
  regions->add_option("--sessions", sessions, "session manifest JSON")->required();
  regions->add_option("--atlas", atlas, "atlas volume")->required();
  regions->add_option("--reference", reference, "reference image")->required();
  regions->add_option("--out", out, "probability volume output")->required();
  regions->add_option("--mask", mask_out, "mask volume output")->required();
  regions->add_option("--threads", threads, "worker threads");
  add_pipeline_keys(regions, regions_keys);
  regions_keys.add_flag(regions, "shared-transform", "register once per session");
  regions_keys.add(regions, "category", "1", "category id to map");
  regions_keys.add(regions, "threshold", "0.5", "probability cut for the mask");
  regions_keys.add(regions, "min-beta", "0", "minimum beta counted as active");
  add_common(regions);
  regions->callback([&] {
    run_regions(sessions, atlas, reference, out, mask_out, threads,
                regions_keys.resolve(regions, config_file));
  });

  Keyed train_keys;
  auto* train = app.add_subcommand("train", "train a decoder");
  train->add_option("--features", features_path, "training features CSV")->required();
  train->add_option("--out", out, "output model JSON")->required();
  train->add_option("--category", category, "train one binary model for this category");
  train->add_flag("--multiclass", multiclass, "train the full multiclass model");
  train->add_option("--threads", threads, "worker threads");
  train_keys.add(train, "seed", "42", "master seed");
  train_keys.add(train, "max-depth", "8", "decision tree depth cap");
  add_common(train);
  train->callback([&] {
    run_train(features_path, out, category, multiclass, threads,
              train_keys.resolve(train, config_file));
  });

  Keyed pred_keys;
  auto* pred = app.add_subcommand("predict", "decode feature columns");
  pred->add_option("--model", model_path, "model JSON")->required();
  pred->add_option("--features", features_path, "features CSV")->required();
  pred->add_option("--out", out, "predictions CSV")->required();
  add_common(pred);
  pred->callback([&] {
    run_predict(model_path, features_path, out, pred_keys.resolve(pred, config_file));
  });

  Keyed eval_keys;
  auto* evalc = app.add_subcommand("eval", "leave-one-subject-out evaluation");
  evalc->add_option("--features", features_path, "features CSV")->required();
  evalc->add_option("--out", out, "report JSON output")->required();
  evalc->add_option("--csv", csv_out, "per-fold CSV output");
  evalc->add_option("--threads", threads, "worker threads");
  eval_keys.add(evalc, "seed", "42", "master seed");
  eval_keys.add(evalc, "max-depth", "8", "decision tree depth cap");
  eval_keys.add_flag(evalc, "zscore", "z-score folds with train-only statistics");
  add_common(evalc);
  evalc->callback([&] {
    run_eval(features_path, out, csv_out, threads,
             eval_keys.resolve(evalc, config_file));
  });

  Keyed corr_keys;
  auto* corr = app.add_subcommand("corr", "between-category correlation matrix");
  corr->add_option("--features", features_path, "features CSV")->required();
  corr->add_option("--out", out, "correlation CSV output")->required();
  corr_keys.add(corr, "space", "feature", "feature or voxel");
  add_common(corr);
  corr->callback([&] {
    run_corr(features_path, out, corr_keys.resolve(corr, config_file));
  });

  Keyed synth_keys;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--out", out, "output directory")->required();
  synth_keys.add(synth, "preset", "full", "glm, register, classify or full");
  synth_keys.add(synth, "seed", "42", "master seed");
  add_common(synth);
  synth->callback([&] { run_synth(out, synth_keys.resolve(synth, config_file)); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("cli.usage", "validation", e.what());
    return 1;
  } catch (const apa::Error& e) {
    print_error(e.code(), kind_name(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    print_error("internal.error", "numeric", e.what());
    return 2;
  }

  if (want_version) {
    if (want_json)
      std::cout << json{{"name", "apa"}, {"version", kVersion}, {"rng", kRngId}}.dump()
                << "\n";
    else
      std::cout << "apa " << kVersion << "\n";
    return 0;
  }
  if (app.get_subcommands().empty()) {
    print_error("cli.usage", "validation", "a subcommand is required; see --help");
    return 1;
  }
  return 0;
}
