#pragma once

#include <optional>
#include <string>
#include <vector>

#include "abrlab/trace.hpp"

namespace abrlab {

using ClientId = std::string;

struct ClientCondition {
  ClientId client;
  NetworkType network_type = NetworkType::FourG;
  TransportMode transport_mode = TransportMode::Car;
  double observed_at = 0.0;  // s
};

struct GroupChange {
  ClientId client;
  GroupId from{1};
  GroupId to{1};
  double at = 0.0;  // s

  bool operator==(const GroupChange&) const = default;
};

struct ScheduledCondition {
  double time = 0.0;  // s
  ClientCondition condition;
};

inline constexpr double kDefaultPollPeriod = 30.0;

GroupId classify(const ClientCondition& condition);

/// Samples the schedule at t = 0, period, 2 period, ... up to `horizon`
/// (default: the last scheduled time) and reports each sampled group change.
/// Sample points before the first scheduled entry see no condition and are
/// skipped.
std::vector<GroupChange> poll(const std::vector<ScheduledCondition>& schedule, double period,
                              std::optional<double> horizon = std::nullopt);

}  // namespace abrlab
