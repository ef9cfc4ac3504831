#ifndef APA_SCHEDULE_HPP
#define APA_SCHEDULE_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace apa {

/// One stimulus condition: its onsets in scan indices, and the category it
/// belongs to.
struct Condition {
  int condition_id = 0;
  int category_id = 0;  // 1..P
  std::vector<std::size_t> onset_scans;  // strictly increasing
};

struct StimulusSchedule {
  std::string session_id;
  int category_count = 0;  // P
  std::vector<Condition> conditions;  // Q entries

  std::size_t condition_count() const { return conditions.size(); }

  const Condition& condition(int condition_id) const;

  /// Union of onsets for all conditions of one category, sorted.
  std::vector<std::size_t> category_onsets(int category_id) const;

  /// Checks category coverage, onset ordering and bounds against T scans.
  void validate(std::size_t t_len) const;
};

/// TSV columns: condition_id, category_id, onset (one row per onset).
/// When units_seconds is set onsets are divided by TR and rounded to the
/// nearest scan.
StimulusSchedule load_schedule(const std::string& path,
                               bool units_seconds = false,
                               double tr_ms = 0.0);

void save_schedule(const StimulusSchedule& s, const std::string& path);

}  // namespace apa

#endif
