#include "apa/ecoc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "apa/error.hpp"
#include "apa/rng.hpp"

using nlohmann::json;

namespace apa {

Eigen::MatrixXi build_coding_matrix(int p) {
  if (p < 2)
    throw Error::validation("ecoc.bad_category_count",
                            "coding matrix needs at least 2 categories");
  Eigen::MatrixXi m = Eigen::MatrixXi::Constant(p, p, -1);
  m.diagonal().setConstant(+1);
  return m;
}

EnsembleModel train_multiclass(const FeatureMatrix& features,
                               const MulticlassParams& params,
                               std::uint64_t seed) {
  features.validate();
  std::set<int> present(features.labels.begin(), features.labels.end());
  if (present.size() < 2)
    throw Error::validation("ecoc.single_class",
                            "multiclass training needs at least 2 categories");
  int p = *present.rbegin();
  for (int m = 1; m <= p; ++m) {
    auto count = std::count(features.labels.begin(), features.labels.end(), m);
    if (count < 2)
      throw Error::validation("ecoc.sparse_category",
                              "category " + std::to_string(m) +
                                  " has fewer than 2 instances");
  }

  EnsembleModel model;
  model.category_count = p;
  model.feature_dim = static_cast<int>(features.region_count());
  model.seed = seed;
  model.coding_matrix = build_coding_matrix(p);
  model.ensembles.resize(static_cast<std::size_t>(p));

  // One-versus-all relabeling; per-category seeds are derived so results do
  // not depend on training order or thread count.
  auto train_one = [&](int m) {
    std::vector<int> y(features.labels.size());
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = features.labels[i] == m ? +1 : -1;
    model.ensembles[static_cast<std::size_t>(m - 1)] = train_binary(
        features.features, y, params.boost,
        derive_seed(seed, static_cast<std::uint64_t>(m)));
  };

  int threads = std::max(1, params.threads);
  if (threads == 1) {
    for (int m = 1; m <= p; ++m) train_one(m);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{1};
    for (int t = 0; t < std::min(threads, p); ++t)
      pool.emplace_back([&] {
        for (;;) {
          int m = next.fetch_add(1);
          if (m > p) return;
          train_one(m);
        }
      });
    for (auto& th : pool) th.join();
  }
  return model;
}

MulticlassPrediction predict_multiclass(const EnsembleModel& model,
                                        const Eigen::VectorXd& x) {
  if (x.size() != model.feature_dim)
    throw Error::validation("ecoc.dims_mismatch",
                            "instance feature count does not match model");
  MulticlassPrediction out;
  const int p = model.category_count;
  out.code.resize(static_cast<std::size_t>(p));
  out.margins.resize(static_cast<std::size_t>(p));
  for (int m = 0; m < p; ++m) {
    auto pred = predict_binary(model.ensembles[static_cast<std::size_t>(m)], x);
    out.code[static_cast<std::size_t>(m)] = pred.label;
    out.margins[static_cast<std::size_t>(m)] = pred.margin;
  }

  int best_cat = 1;
  int best_dist = p + 1;
  double best_score = -1e300;
  for (int row = 0; row < p; ++row) {
    int dist = 0;
    double score = 0.0;
    for (int m = 0; m < p; ++m) {
      if (model.coding_matrix(row, m) != out.code[static_cast<std::size_t>(m)])
        ++dist;
      score += out.margins[static_cast<std::size_t>(m)] *
               model.coding_matrix(row, m);
    }
    if (dist < best_dist ||
        (dist == best_dist && score > best_score)) {
      best_dist = dist;
      best_score = score;
      best_cat = row + 1;
    }
  }
  out.category = best_cat;
  return out;
}

namespace {

std::string format17(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

json tree_to_json(const TreeNode& node) {
  if (node.is_leaf)
    return json{{"leaf", true}, {"label", node.label}, {"purity", node.purity}};
  return json{{"leaf", false},
              {"feature", node.feature},
              {"threshold", node.threshold},
              {"left", tree_to_json(*node.left)},
              {"right", tree_to_json(*node.right)}};
}

std::unique_ptr<TreeNode> tree_from_json(const json& j) {
  auto node = std::make_unique<TreeNode>();
  node->is_leaf = j.value("leaf", true);
  if (node->is_leaf) {
    node->label = j.value("label", +1);
    node->purity = j.value("purity", 0.0);
    return node;
  }
  node->feature = j.value("feature", -1);
  node->threshold = j.value("threshold", 0.0);
  if (!j.contains("left") || !j.contains("right"))
    throw Error::validation("model.malformed", "internal node missing children");
  node->left = tree_from_json(j.at("left"));
  node->right = tree_from_json(j.at("right"));
  return node;
}

}  // namespace

void save_model(const EnsembleModel& model, const std::string& path) {
  json j;
  j["format"] = "apa.model";
  j["version"] = 1;
  j["category_count"] = model.category_count;
  j["feature_dim"] = model.feature_dim;
  j["seed"] = model.seed;
  json coding = json::array();
  for (int r = 0; r < model.category_count; ++r) {
    json row = json::array();
    for (int c = 0; c < model.category_count; ++c)
      row.push_back(model.coding_matrix(r, c));
    coding.push_back(row);
  }
  j["coding_matrix"] = coding;
  json ensembles = json::array();
  for (std::size_t m = 0; m < model.ensembles.size(); ++m) {
    json e;
    e["category"] = m + 1;
    e["iterations"] = model.ensembles[m].iterations;
    e["seed"] = model.ensembles[m].seed;
    json members = json::array();
    for (const auto& member : model.ensembles[m].members)
      members.push_back({{"alpha", format17(member.alpha)},
                         {"tree", tree_to_json(*member.tree)}});
    e["members"] = members;
    ensembles.push_back(e);
  }
  j["ensembles"] = ensembles;

  std::ofstream out(path);
  if (!out) throw Error::io("io.write_failed", "cannot write model: " + path);
  out << j.dump(2) << "\n";
}

EnsembleModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("io.not_found", "cannot open model: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error::io("io.malformed", "bad JSON in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "apa.model")
    throw Error::validation("model.malformed", "not an apa model file: " + path);

  EnsembleModel model;
  model.category_count = j.value("category_count", 0);
  model.feature_dim = j.value("feature_dim", 0);
  model.seed = j.value("seed", std::uint64_t{0});
  if (model.category_count < 2)
    throw Error::validation("model.malformed", "model needs >= 2 categories");

  const auto& coding = j.at("coding_matrix");
  model.coding_matrix.resize(model.category_count, model.category_count);
  for (int r = 0; r < model.category_count; ++r)
    for (int c = 0; c < model.category_count; ++c)
      model.coding_matrix(r, c) = coding.at(static_cast<std::size_t>(r))
                                      .at(static_cast<std::size_t>(c))
                                      .get<int>();

  for (const auto& e : j.at("ensembles")) {
    BinaryEnsemble ens;
    ens.iterations = e.value("iterations", 0);
    ens.seed = e.value("seed", std::uint64_t{0});
    for (const auto& member : e.at("members")) {
      BinaryEnsemble::Member m;
      m.alpha = std::stod(member.at("alpha").get<std::string>());
      m.tree = tree_from_json(member.at("tree"));
      if (!std::isfinite(m.alpha))
        throw Error::validation("model.malformed", "non-finite alpha in model");
      ens.members.push_back(std::move(m));
    }
    if (ens.members.empty())
      throw Error::validation("model.malformed", "empty ensemble in model");
    model.ensembles.push_back(std::move(ens));
  }
  if (static_cast<int>(model.ensembles.size()) != model.category_count)
    throw Error::validation("model.malformed",
                            "ensemble count does not match category count");
  return model;
}

void save_binary_model(const BinaryEnsemble& ensemble, int feature_dim,
                       const std::string& path) {
  json j;
  j["format"] = "apa.binary_model";
  j["version"] = 1;
  j["feature_dim"] = feature_dim;
  j["iterations"] = ensemble.iterations;
  j["seed"] = ensemble.seed;
  json members = json::array();
  for (const auto& member : ensemble.members)
    members.push_back({{"alpha", format17(member.alpha)},
                       {"tree", tree_to_json(*member.tree)}});
  j["members"] = members;
  std::ofstream out(path);
  if (!out) throw Error::io("io.write_failed", "cannot write model: " + path);
  out << j.dump(2) << "\n";
}

BinaryEnsemble load_binary_model(const std::string& path, int* feature_dim) {
  std::ifstream in(path);
  if (!in) throw Error::io("io.not_found", "cannot open model: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error::io("io.malformed", "bad JSON in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "apa.binary_model")
    throw Error::validation("model.malformed", "not a binary model file: " + path);
  BinaryEnsemble ens;
  ens.iterations = j.value("iterations", 0);
  ens.seed = j.value("seed", std::uint64_t{0});
  if (feature_dim) *feature_dim = j.value("feature_dim", 0);
  for (const auto& member : j.at("members")) {
    BinaryEnsemble::Member m;
    m.alpha = std::stod(member.at("alpha").get<std::string>());
    m.tree = tree_from_json(member.at("tree"));
    ens.members.push_back(std::move(m));
  }
  if (ens.members.empty())
    throw Error::validation("model.malformed", "empty ensemble in model");
  return ens;
}

}  // namespace apa
