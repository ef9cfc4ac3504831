#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "apa/eval.hpp"
#include "apa/rng.hpp"
#include "helpers.hpp"

using apa::EvalParams;
using apa::FeatureMatrix;
using apa::Fold;

namespace {

// Four subjects, four columns each (two per category), linearly separable.
FeatureMatrix cohort(std::uint64_t seed, double separation = 3.0) {
  apa::Pcg32 rng(seed);
  FeatureMatrix f;
  f.features.resize(3, 16);
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i < 4; ++i) {
      int c = 4 * s + i;
      int label = (i / 2) + 1;
      for (int r = 0; r < 3; ++r)
        f.features(r, c) =
            (r == label - 1 ? separation : 0.0) + 0.3 * rng.normal();
      f.labels.push_back(label);
      f.sessions.push_back("s" + std::to_string(s + 1) + "_r" +
                           std::to_string(i + 1));
    }
  return f;
}

}  // namespace

TEST_CASE("the subject id is the prefix before the first underscore") {
  CHECK(apa::subject_of("s3_r2") == "s3");
  CHECK(apa::subject_of("sub-07_run_1") == "sub-07");
  CHECK(apa::subject_of("plain") == "plain");
}

TEST_CASE("two subjects produce two complementary folds") {
  FeatureMatrix f;
  f.features.resize(2, 4);
  f.features.setZero();
  f.labels = {1, 2, 1, 2};
  f.sessions = {"a_1", "a_2", "b_1", "b_2"};
  auto folds = apa::loso_split(f);
  REQUIRE(folds.size() == 2);
  CHECK(folds[0].subject == "a");
  CHECK(folds[0].test_columns == std::vector<int>{0, 1});
  CHECK(folds[0].train_columns == std::vector<int>{2, 3});
  CHECK(folds[1].subject == "b");
  CHECK(folds[1].test_columns == std::vector<int>{2, 3});
  CHECK(folds[1].train_columns == std::vector<int>{0, 1});
}

TEST_CASE("folds partition the columns on random manifests") {
  apa::Pcg32 rng(71);
  for (int trial = 0; trial < 25; ++trial) {
    int n_subjects = 2 + static_cast<int>(rng.bounded(5));
    FeatureMatrix f;
    std::vector<int> cols_per_subject;
    int total = 0;
    for (int s = 0; s < n_subjects; ++s) {
      int k = 1 + static_cast<int>(rng.bounded(4));
      cols_per_subject.push_back(k);
      total += k;
    }
    f.features.resize(2, total);
    f.features.setZero();
    for (int s = 0; s < n_subjects; ++s)
      for (int i = 0; i < cols_per_subject[static_cast<std::size_t>(s)]; ++i) {
        f.labels.push_back(1 + static_cast<int>(rng.bounded(2)));
        f.sessions.push_back("sub" + std::to_string(s) + "_r" +
                             std::to_string(i));
      }

    auto folds = apa::loso_split(f);
    CHECK(folds.size() == static_cast<std::size_t>(n_subjects));
    for (const auto& fold : folds) {
      // Test columns belong to the held-out subject, train columns never do.
      for (int c : fold.test_columns)
        CHECK(apa::subject_of(f.sessions[static_cast<std::size_t>(c)]) ==
              fold.subject);
      for (int c : fold.train_columns)
        CHECK(apa::subject_of(f.sessions[static_cast<std::size_t>(c)]) !=
              fold.subject);
      // Train and test together cover every column exactly once.
      std::vector<int> all(fold.train_columns);
      all.insert(all.end(), fold.test_columns.begin(), fold.test_columns.end());
      std::sort(all.begin(), all.end());
      std::vector<int> expected(static_cast<std::size_t>(total));
      std::iota(expected.begin(), expected.end(), 0);
      CHECK(all == expected);
    }
    // Each column appears in exactly one test fold.
    std::vector<int> seen(static_cast<std::size_t>(total), 0);
    for (const auto& fold : folds)
      for (int c : fold.test_columns) seen[static_cast<std::size_t>(c)] += 1;
    CHECK(std::count(seen.begin(), seen.end(), 1) == total);
  }
}

TEST_CASE("a single subject cannot be cross-validated") {
  FeatureMatrix f;
  f.features.resize(2, 2);
  f.features.setZero();
  f.labels = {1, 2};
  f.sessions = {"s1_r1", "s1_r2"};
  test::check_error([&] { apa::loso_split(f); }, "eval.single_subject");
}

TEST_CASE("accuracy is the fraction of exact matches") {
  CHECK(apa::accuracy({1, 2, 2, 1}, {1, 2, 1, 1}) == 0.75);
  CHECK(apa::accuracy({3}, {3}) == 1.0);
  test::check_error([] { apa::accuracy({1}, {1, 2}); }, "eval.size_mismatch");
  test::check_error([] { apa::accuracy({}, {}); }, "eval.size_mismatch");
}

TEST_CASE("AUC matches a pairwise comparison oracle, ties at half credit") {
  apa::Pcg32 rng(72);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> margins;
    std::vector<int> truth;
    int n = 10 + static_cast<int>(rng.bounded(30));
    for (int i = 0; i < n; ++i) {
      // Quantized margins force plenty of exact ties.
      margins.push_back(std::floor(4.0 * rng.normal()) / 4.0);
      truth.push_back(rng.uniform() < 0.4 ? +1 : -1);
    }
    if (std::count(truth.begin(), truth.end(), +1) == 0 ||
        std::count(truth.begin(), truth.end(), -1) == 0)
      continue;

    double wins = 0.0, pairs = 0.0;
    for (std::size_t p = 0; p < truth.size(); ++p)
      for (std::size_t q = 0; q < truth.size(); ++q) {
        if (truth[p] <= 0 || truth[q] > 0) continue;
        pairs += 1.0;
        if (margins[p] > margins[q])
          wins += 1.0;
        else if (margins[p] == margins[q])
          wins += 0.5;
      }
    CHECK(apa::auc(margins, truth) ==
          doctest::Approx(wins / pairs).epsilon(1e-12));
  }
}

TEST_CASE("AUC hits the endpoints and hovers at half for noise") {
  CHECK(apa::auc({0.9, 0.8, 0.1, 0.2}, {1, 1, -1, -1}) == 1.0);
  CHECK(apa::auc({0.1, 0.2, 0.9, 0.8}, {1, 1, -1, -1}) == 0.0);

  apa::Pcg32 rng(73);
  std::vector<double> margins;
  std::vector<int> truth;
  for (int i = 0; i < 10000; ++i) {
    margins.push_back(rng.normal());
    truth.push_back(i % 2 == 0 ? +1 : -1);
  }
  CHECK(apa::auc(margins, truth) == doctest::Approx(0.5).epsilon(0.04));

  test::check_error([] { apa::auc({0.1, 0.2}, {1, 1}); }, "eval.single_class");
  test::check_error([] { apa::auc({0.1}, {1, -1}); }, "eval.size_mismatch");
}

TEST_CASE("correlation matrices are symmetric with unit diagonal") {
  apa::Pcg32 rng(74);
  Eigen::MatrixXd data(6, 12);
  std::vector<int> labels;
  for (int c = 0; c < 12; ++c) {
    for (int r = 0; r < 6; ++r) data(r, c) = rng.normal();
    labels.push_back(c % 3 + 1);
  }
  Eigen::MatrixXd corr = apa::correlation_matrix(data, labels, 3);
  REQUIRE(corr.rows() == 3);
  for (int a = 0; a < 3; ++a) {
    CHECK(corr(a, a) == 1.0);  // exactly one, not approximately
    for (int b = 0; b < 3; ++b) {
      CHECK(corr(a, b) == corr(b, a));
      CHECK(std::abs(corr(a, b)) <= 1.0 + 1e-12);
    }
  }

  // Independent recomputation of one off-diagonal entry.
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(6), m2 = Eigen::VectorXd::Zero(6);
  for (int c = 0; c < 12; ++c) {
    if (labels[static_cast<std::size_t>(c)] == 1) m1 += data.col(c) / 4.0;
    if (labels[static_cast<std::size_t>(c)] == 2) m2 += data.col(c) / 4.0;
  }
  Eigen::VectorXd c1 = m1.array() - m1.mean(), c2 = m2.array() - m2.mean();
  CHECK(corr(0, 1) ==
        doctest::Approx(c1.dot(c2) / (c1.norm() * c2.norm())).epsilon(1e-12));
}

TEST_CASE("correlation matrix inputs are validated") {
  Eigen::MatrixXd data(3, 4);
  data.setRandom();
  test::check_error([&] { apa::correlation_matrix(data, {1, 2}, 2); },
                    "eval.size_mismatch");
  test::check_error([&] { apa::correlation_matrix(data, {1, 1, 1, 1}, 1); },
                    "eval.single_class");
  test::check_error([&] { apa::correlation_matrix(data, {1, 2, 3, 1}, 2); },
                    "eval.bad_label");
  test::check_error([&] { apa::correlation_matrix(data, {1, 1, 1, 1}, 2); },
                    "eval.missing_category");
  Eigen::MatrixXd flat = Eigen::MatrixXd::Ones(3, 4);
  test::check_error([&] { apa::correlation_matrix(flat, {1, 2, 1, 2}, 2); },
                    "eval.zero_variance");
}

TEST_CASE("an easy cohort evaluates to near-perfect accuracy") {
  FeatureMatrix f = cohort(81);
  EvalParams params;
  params.model.boost.tree.max_depth = 2;
  apa::EvalReport report = apa::evaluate(f, params, 42);
  REQUIRE(report.folds.size() == 4);
  CHECK(report.category_count == 2);
  CHECK(report.mean_accuracy >= 0.95);
  CHECK(report.confusion.sum() == 16);
  CHECK(report.confusion(0, 0) + report.confusion(1, 1) >= 15);
  for (double a : report.mean_binary_accuracy) CHECK(a >= 0.9);
  for (double a : report.mean_binary_auc) CHECK(a >= 0.9);
  CHECK(report.std_accuracy >= 0.0);
}

TEST_CASE("test-fold contamination cannot reach the training statistics") {
  FeatureMatrix clean = cohort(82);
  EvalParams params;
  params.model.boost.tree.max_depth = 2;
  params.zscore = true;
  apa::EvalReport base = apa::evaluate(clean, params, 42);

  // A wild outlier in one of subject s1's columns: fold 0 holds that column
  // out, so its train-fold statistics must not move at all.
  FeatureMatrix dirty = cohort(82);
  dirty.features(0, 0) = 1e6;
  apa::EvalReport poked = apa::evaluate(dirty, params, 42);

  REQUIRE(base.folds.size() == poked.folds.size());
  CHECK(base.folds[0].subject == "s1");
  CHECK(base.folds[0].train_mean == poked.folds[0].train_mean);
  CHECK(base.folds[0].train_sd == poked.folds[0].train_sd);

  // Folds that train on s1 do see the outlier, which confirms the statistics
  // are really recomputed per fold.
  CHECK(base.folds[1].train_mean != poked.folds[1].train_mean);
}
