#include "abrlab/discriminator.hpp"

#include <cmath>
#include <stdexcept>

namespace abrlab {

GroupId classify(const ClientCondition& condition) {
  return group_of(condition.network_type, condition.transport_mode);
}

std::vector<GroupChange> poll(const std::vector<ScheduledCondition>& schedule, double period,
                              std::optional<double> horizon) {
  if (schedule.empty()) throw std::invalid_argument("poll: empty condition schedule");
  if (!(period > 0.0) || !std::isfinite(period)) throw std::invalid_argument("poll: period must be positive");
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    if (schedule[i].time < schedule[i - 1].time) {
      throw std::invalid_argument("poll: schedule not sorted by time");
    }
  }
  const double end = horizon.value_or(schedule.back().time);

  std::vector<GroupChange> changes;
  std::optional<GroupId> previous;
  std::size_t cursor = 0;  // first entry with time > sample point
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * period;
    if (t > end) break;
    while (cursor < schedule.size() && schedule[cursor].time <= t) ++cursor;
    if (cursor == 0) continue;
    const auto& current = schedule[cursor - 1].condition;
    const auto group = classify(current);
    if (previous && *previous != group) {
      changes.push_back({current.client, *previous, group, t});
    }
    previous = group;
  }
  return changes;
}

}  // namespace abrlab
