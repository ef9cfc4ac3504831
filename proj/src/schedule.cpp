#include "apa/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "apa/error.hpp"

namespace apa {

const Condition& StimulusSchedule::condition(int condition_id) const {
  for (const auto& c : conditions)
    if (c.condition_id == condition_id) return c;
  throw Error::validation("schedule.unknown_condition",
                          "no condition with id " + std::to_string(condition_id));
}

std::vector<std::size_t> StimulusSchedule::category_onsets(int category_id) const {
  std::vector<std::size_t> out;
  for (const auto& c : conditions)
    if (c.category_id == category_id)
      out.insert(out.end(), c.onset_scans.begin(), c.onset_scans.end());
  std::sort(out.begin(), out.end());
  return out;
}

void StimulusSchedule::validate(std::size_t t_len) const {
  if (conditions.empty())
    throw Error::validation("schedule.empty", "schedule has no conditions");
  if (category_count < 1)
    throw Error::validation("schedule.bad_category", "category_count must be >= 1");
  std::vector<bool> covered(static_cast<std::size_t>(category_count) + 1, false);
  for (const auto& c : conditions) {
    if (c.category_id < 1 || c.category_id > category_count)
      throw Error::validation("schedule.bad_category",
                              "condition " + std::to_string(c.condition_id) +
                                  " has category " + std::to_string(c.category_id) +
                                  " outside 1.." + std::to_string(category_count));
    covered[static_cast<std::size_t>(c.category_id)] = true;
    if (c.onset_scans.empty())
      throw Error::validation("schedule.empty_condition",
                              "condition " + std::to_string(c.condition_id) +
                                  " has no onsets");
    if (c.onset_scans.size() > t_len)
      throw Error::validation("schedule.too_many_onsets",
                              "condition " + std::to_string(c.condition_id) +
                                  " has more onsets than scans");
    for (std::size_t i = 0; i < c.onset_scans.size(); ++i) {
      if (c.onset_scans[i] >= t_len)
        throw Error::validation("schedule.onset_out_of_range",
                                "onset " + std::to_string(c.onset_scans[i]) +
                                    " >= T=" + std::to_string(t_len));
      if (i > 0 && c.onset_scans[i] <= c.onset_scans[i - 1])
        throw Error::validation("schedule.onsets_unsorted",
                                "onsets must be strictly increasing in condition " +
                                    std::to_string(c.condition_id));
    }
  }
  for (int n = 1; n <= category_count; ++n)
    if (!covered[static_cast<std::size_t>(n)])
      throw Error::validation("schedule.uncovered_category",
                              "category " + std::to_string(n) + " owns no condition");
}

StimulusSchedule load_schedule(const std::string& path, bool units_seconds,
                               double tr_ms) {
  std::ifstream in(path);
  if (!in) throw Error::io("io.not_found", "cannot open schedule: " + path);
  if (units_seconds && tr_ms <= 0)
    throw Error::validation("schedule.bad_tr", "seconds units need a positive TR");

  // condition id -> (category, onsets); insertion order preserved
  std::map<int, std::pair<int, std::vector<std::size_t>>> table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string c1, c2, c3;
    if (!(row >> c1 >> c2 >> c3))
      throw Error::validation("schedule.malformed_row",
                              path + ":" + std::to_string(lineno) + ": expected 3 columns");
    if (lineno == 1 && c1 == "condition_id") continue;  // optional header
    int cond = 0, cat = 0;
    double onset = 0;
    try {
      cond = std::stoi(c1);
      cat = std::stoi(c2);
      onset = std::stod(c3);
    } catch (const std::exception&) {
      throw Error::validation("schedule.malformed_row",
                              path + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    std::size_t scan = units_seconds
                           ? static_cast<std::size_t>(
                                 std::llround(onset * 1000.0 / tr_ms))
                           : static_cast<std::size_t>(onset);
    if (onset < 0)
      throw Error::validation("schedule.onset_out_of_range",
                              path + ":" + std::to_string(lineno) + ": negative onset");
    auto& entry = table[cond];
    if (entry.second.empty())
      entry.first = cat;
    else if (entry.first != cat)
      throw Error::validation("schedule.category_conflict",
                              "condition " + std::to_string(cond) +
                                  " listed under two categories");
    entry.second.push_back(scan);
  }
  if (table.empty())
    throw Error::validation("schedule.empty", "no rows in " + path);

  StimulusSchedule s;
  int max_cat = 0;
  for (auto& [cond, entry] : table) {
    Condition c;
    c.condition_id = cond;
    c.category_id = entry.first;
    c.onset_scans = std::move(entry.second);
    std::sort(c.onset_scans.begin(), c.onset_scans.end());
    max_cat = std::max(max_cat, c.category_id);
    s.conditions.push_back(std::move(c));
  }
  s.category_count = max_cat;
  return s;
}

void save_schedule(const StimulusSchedule& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error::io("io.write_failed", "cannot write schedule: " + path);
  out << "condition_id\tcategory_id\tonset\n";
  for (const auto& c : s.conditions)
    for (std::size_t m : c.onset_scans)
      out << c.condition_id << "\t" << c.category_id << "\t" << m << "\n";
}

}  // namespace apa
