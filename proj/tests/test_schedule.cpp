#include <doctest.h>

#include <vector>

#include "apa/schedule.hpp"
#include "helpers.hpp"

using apa::StimulusSchedule;

TEST_CASE("single-condition TSV loads with inferred category count") {
  test::TempDir dir;
  std::string path = dir.file("onsets.tsv");
  test::write_file(path,
                   "condition_id\tcategory_id\tonset\n"
                   "1\t1\t3\n1\t1\t4\n1\t1\t5\n");
  StimulusSchedule s = apa::load_schedule(path);
  CHECK(s.condition_count() == 1);
  CHECK(s.category_count >= 1);
  CHECK(s.condition(1).onset_scans == std::vector<std::size_t>{3, 4, 5});
  s.validate(10);
}

TEST_CASE("seconds units divide by TR and round to the nearest scan") {
  test::TempDir dir;
  std::string path = dir.file("onsets.tsv");
  // TR = 2500 ms: 2.4s -> scan 1, 5.1s -> scan 2, 7.4s -> scan 3.
  test::write_file(path, "1\t1\t2.4\n1\t1\t5.1\n1\t1\t7.4\n");
  StimulusSchedule s = apa::load_schedule(path, true, 2500.0);
  CHECK(s.condition(1).onset_scans == std::vector<std::size_t>{1, 2, 3});
}

TEST_CASE("seconds units without TR are rejected") {
  test::TempDir dir;
  std::string path = dir.file("onsets.tsv");
  test::write_file(path, "1\t1\t2.4\n");
  test::check_error([&] { apa::load_schedule(path, true, 0.0); }, "schedule.bad_tr");
}

TEST_CASE("category_onsets merges and sorts across conditions") {
  StimulusSchedule s;
  s.category_count = 2;
  s.conditions.push_back({1, 1, {9, 12}});
  s.conditions.push_back({2, 2, {4}});
  s.conditions.push_back({3, 1, {2, 10}});
  CHECK(s.category_onsets(1) == std::vector<std::size_t>{2, 9, 10, 12});
  CHECK(s.category_onsets(2) == std::vector<std::size_t>{4});
}

TEST_CASE("validate flags out-of-range and unsorted onsets") {
  StimulusSchedule s;
  s.category_count = 1;
  s.conditions.push_back({1, 1, {3, 20}});
  test::check_error([&] { s.validate(10); }, "schedule.onset_out_of_range");

  s.conditions[0].onset_scans = {5, 5};
  test::check_error([&] { s.validate(10); }, "schedule.onsets_unsorted");

  s.conditions[0].onset_scans = {};
  test::check_error([&] { s.validate(10); }, "schedule.empty_condition");

  s.conditions.clear();
  test::check_error([&] { s.validate(10); }, "schedule.empty");
}

TEST_CASE("every category must own at least one condition") {
  StimulusSchedule s;
  s.category_count = 3;
  s.conditions.push_back({1, 1, {0}});
  s.conditions.push_back({2, 3, {1}});
  test::check_error([&] { s.validate(10); }, "schedule.uncovered_category");
}

TEST_CASE("conflicting category listings for one condition are rejected") {
  test::TempDir dir;
  std::string path = dir.file("onsets.tsv");
  test::write_file(path, "1\t1\t3\n1\t2\t4\n");
  test::check_error([&] { apa::load_schedule(path); }, "schedule.category_conflict");
}

TEST_CASE("malformed rows are rejected with position info") {
  test::TempDir dir;
  std::string path = dir.file("onsets.tsv");
  test::write_file(path, "1\t1\n");
  test::check_error([&] { apa::load_schedule(path); }, "schedule.malformed_row");
  test::write_file(path, "1\tx\t3\n");
  test::check_error([&] { apa::load_schedule(path); }, "schedule.malformed_row");
}

TEST_CASE("schedules round-trip through disk") {
  test::TempDir dir;
  StimulusSchedule s;
  s.session_id = "s2_r1";
  s.category_count = 2;
  s.conditions.push_back({1, 1, {0, 7}});
  s.conditions.push_back({2, 2, {3, 11, 19}});
  std::string path = dir.file("sched.tsv");
  apa::save_schedule(s, path);
  StimulusSchedule r = apa::load_schedule(path);
  REQUIRE(r.condition_count() == 2);
  CHECK(r.category_count == 2);
  CHECK(r.condition(1).onset_scans == s.conditions[0].onset_scans);
  CHECK(r.condition(2).onset_scans == s.conditions[1].onset_scans);
  CHECK(r.condition(2).category_id == 2);
}

TEST_CASE("missing schedule file is io.not_found") {
  test::check_error([] { apa::load_schedule("/nonexistent/sched.tsv"); },
                    "io.not_found");
}
