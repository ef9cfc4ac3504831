#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <string>

#include "apa/features.hpp"
#include "apa/rng.hpp"
#include "apa/synth.hpp"
#include "helpers.hpp"

namespace {

int run(const std::string& args, const std::string& capture = "/dev/null") {
  std::string cmd = std::string(APA_CLI_PATH) + " " + args + " >" + capture +
                    " 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int run_env(const std::string& env, const std::string& args,
            const std::string& capture = "/dev/null") {
  std::string cmd = "env " + env + " " + std::string(APA_CLI_PATH) + " " + args +
                    " >" + capture + " 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// A small four-subject set the eval subcommand can cross-validate quickly.
std::string write_cohort(test::TempDir& dir) {
  apa::ClassificationSpec spec;
  spec.feature_dim = 4;
  spec.n_per_class = {8, 8};
  spec.separation = 6.0;
  apa::FeatureMatrix f = apa::make_classification_set(spec, 3);
  std::string path = dir.file("cohort.features.csv");
  apa::save_features(f, path);
  return path;
}

}  // namespace

TEST_CASE("version flags print machine-readable identity") {
  test::TempDir dir;
  std::string out = dir.file("version.txt");
  CHECK(run("--version --json", out) == 0);
  auto j = nlohmann::json::parse(test::read_file(out));
  CHECK(j.at("name") == "apa");
  CHECK(j.at("rng") == "pcg32-xsh-rr");
  CHECK(run("--version") == 0);
}

TEST_CASE("usage problems exit with code one") {
  test::TempDir dir;
  std::string err = dir.file("err.txt");
  CHECK(run("", err) == 1);  // no subcommand
  CHECK(test::read_file(err).find("cli.usage") != std::string::npos);
  CHECK(run("design --out x.csv", err) == 1);       // missing required flag
  CHECK(run("no-such-subcommand", err) == 1);       // unknown subcommand
}

TEST_CASE("missing inputs exit with the io code") {
  test::TempDir dir;
  std::string err = dir.file("err.txt");
  CHECK(run("design --onsets " + dir.file("absent.tsv") + " --out " +
                dir.file("d.csv"),
            err) == 3);
  CHECK(test::read_file(err).find("io.not_found") != std::string::npos);
}

TEST_CASE("the glm preset produces a self-consistent bundle") {
  test::TempDir dir;
  std::string data = dir.file("data");
  REQUIRE(run("synth --out " + data + " --preset glm --seed 7") == 0);
  namespace fs = std::filesystem;
  for (const char* name : {"atlas.atlas.json", "reference.vol.json",
                           "s1_r1.vol.json", "s1_r1.onsets.tsv",
                           "manifest.json", "truth.json"})
    CHECK(fs::exists(fs::path(data) / name));

  // The design subcommand consumes the generated schedule.
  std::string design = dir.file("design.csv");
  CHECK(run("design --onsets " + data + "/s1_r1.onsets.tsv --out " + design) == 0);
  CHECK(fs::exists(design));
  CHECK(fs::exists(design + ".manifest.json"));
  auto manifest =
      nlohmann::json::parse(test::read_file(design + ".manifest.json"));
  CHECK(manifest.at("subcommand") == "design");
  CHECK(manifest.at("config").at("t") == "121");

  // Rerunning the preset with the same seed is byte-identical.
  std::string again = dir.file("again");
  REQUIRE(run("synth --out " + again + " --preset glm --seed 7") == 0);
  CHECK(test::read_file(data + "/s1_r1.vol.json") ==
        test::read_file(again + "/s1_r1.vol.json"));
  CHECK(test::read_file(data + "/truth.json") ==
        test::read_file(again + "/truth.json"));
}

TEST_CASE("evaluation reports echo the layered configuration") {
  test::TempDir dir;
  std::string features = write_cohort(dir);
  std::string config = dir.file("config.json");
  test::write_file(config, "{\"max-depth\": 3}\n");

  // File value wins over the default.
  std::string report = dir.file("report.json");
  REQUIRE(run("eval --features " + features + " --out " + report +
              " --config " + config) == 0);
  auto j = nlohmann::json::parse(test::read_file(report));
  CHECK(j.at("config").at("max-depth") == "3");
  CHECK(j.at("config").at("seed") == "42");
  CHECK(j.at("mean_accuracy").get<double>() >= 0.9);

  // Environment beats the file; the flag beats the environment.
  REQUIRE(run_env("APA_MAX_DEPTH=5", "eval --features " + features + " --out " +
                                         report + " --config " + config) == 0);
  j = nlohmann::json::parse(test::read_file(report));
  CHECK(j.at("config").at("max-depth") == "5");

  REQUIRE(run_env("APA_MAX_DEPTH=5",
                  "eval --features " + features + " --out " + report +
                      " --config " + config + " --max-depth 2") == 0);
  j = nlohmann::json::parse(test::read_file(report));
  CHECK(j.at("config").at("max-depth") == "2");

  // A non-numeric seed is a config error, not a crash.
  std::string err0 = dir.file("err0.txt");
  CHECK(run("eval --features " + features + " --out " + report + " --seed x",
            err0) == 1);
  CHECK(test::read_file(err0).find("config.bad_value") != std::string::npos);

  // Unknown keys in the file are rejected up front.
  std::string bad = dir.file("bad.json");
  test::write_file(bad, "{\"maxdepth\": 3}\n");
  std::string err = dir.file("err.txt");
  CHECK(run("eval --features " + features + " --out " + report + " --config " +
                bad,
            err) == 1);
  CHECK(test::read_file(err).find("config.unknown_key") != std::string::npos);
}

TEST_CASE("thread count never reaches the evaluation artifacts") {
  test::TempDir dir;
  std::string features = write_cohort(dir);
  std::string serial = dir.file("serial.json");
  std::string parallel = dir.file("parallel.json");
  REQUIRE(run("eval --features " + features + " --out " + serial +
              " --csv " + dir.file("serial.csv") + " --threads 1") == 0);
  REQUIRE(run("eval --features " + features + " --out " + parallel +
              " --csv " + dir.file("parallel.csv") + " --threads 4") == 0);
  CHECK(test::read_file(serial) == test::read_file(parallel));
  CHECK(test::read_file(dir.file("serial.csv")) ==
        test::read_file(dir.file("parallel.csv")));
}

TEST_CASE("train and predict round-trip through model files") {
  test::TempDir dir;
  std::string features = write_cohort(dir);
  std::string model = dir.file("model.json");
  REQUIRE(run("train --features " + features + " --out " + model +
              " --multiclass --max-depth 3") == 0);
  std::string pred = dir.file("pred.csv");
  REQUIRE(run("predict --model " + model + " --features " + features +
              " --out " + pred) == 0);
  std::string body = test::read_file(pred);
  CHECK(body.find("column,predicted,margin_1,margin_2") == 0);

  // Binary mode refuses to combine with multiclass.
  std::string err = dir.file("err.txt");
  CHECK(run("train --features " + features + " --out " + model +
                " --category 1 --multiclass",
            err) == 1);
  CHECK(test::read_file(err).find("cli.usage") != std::string::npos);
}

TEST_CASE("the correlation subcommand writes a square category matrix") {
  test::TempDir dir;
  std::string features = write_cohort(dir);
  std::string corr = dir.file("corr.csv");
  REQUIRE(run("corr --features " + features + " --out " + corr) == 0);
  std::string body = test::read_file(corr);
  CHECK(body.find("category_1,category_2") == 0);
  // Header plus one row per category.
  CHECK(std::count(body.begin(), body.end(), '\n') == 3);
}
