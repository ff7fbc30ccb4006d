#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "abrlab/discriminator.hpp"
#include "abrlab/policy_net.hpp"
#include "abrlab/trace.hpp"

namespace abrlab {

struct GroupModel {
  GroupId group{1};
  ModelParams params;
  std::uint64_t version = 0;
};

enum class AggregationMode {
  GradientMean,   // server steps on the mean client gradient
  ParameterMean,  // server adopts the mean of client parameters
};

/// Gradients in GradientMean mode, locally updated parameters in
/// ParameterMean mode.
using UpdatePayload = std::variant<Gradients, ModelParams>;

struct UpdateMessage {
  ClientId client;
  GroupId group{1};
  std::uint64_t round = 0;
  UpdatePayload payload;
};

enum class RejectReason { NotEnrolled, WrongGroup, StaleRound, FutureRound, Duplicate, ShapeMismatch };
std::string_view to_string(RejectReason r);

struct SubmitResult {
  std::optional<RejectReason> rejected;

  bool accepted() const { return !rejected.has_value(); }
};

class PersonalizationMix {
 public:
  explicit PersonalizationMix(double lambda = 0.5);
  double lambda() const { return lambda_; }

 private:
  double lambda_;
};

/// Elementwise lambda * local_prev + (1 - lambda) * global. Coordinates that
/// already agree are passed through untouched, so layers shared by both
/// models stay bit-identical.
ModelParams personalize(const ModelParams& local_prev, const ModelParams& global,
                        PersonalizationMix mix);

/// Clears the blocks of frozen layers; the coordinator reads an empty block
/// as a zero gradient.
Gradients strip_frozen(Gradients grads, const FreezeMask& mask);

struct CoordinatorConfig {
  double server_lr = 1e-3;
  // Multiply server_lr by the group's member count, so a round steps along
  // the summed rather than the mean gradient. A single member is unaffected.
  bool scale_lr_by_members = false;
  FreezeMask server_mask;
  AggregationMode mode = AggregationMode::GradientMean;
  bool transcript = false;
  bool transcript_payloads = false;  // embed full payloads so a run can be replayed
};

/// Intra-group synchronous coordinator. Each seeded group holds a versioned
/// global model; the version doubles as the round number clients must quote
/// when submitting. A round closes when every enrolled member has submitted.
///
/// Operations on one instance are not synchronized; callers serialize them.
class Coordinator {
 public:
  explicit Coordinator(CoordinatorConfig config);

  const GroupModel& seed_group(GroupId group, const ModelParams& pretrained);
  GroupModel register_client(const ClientId& client, GroupId group);
  SubmitResult submit(UpdateMessage update);
  const GroupModel& aggregate_round(GroupId group);
  GroupModel migrate(const ClientId& client, GroupId from, GroupId to);

  const GroupModel& fetch(GroupId group) const;
  bool is_seeded(GroupId group) const { return groups_.contains(group); }
  bool barrier_ready(GroupId group) const;
  std::vector<ClientId> members(GroupId group) const;
  std::optional<GroupId> group_of_client(const ClientId& client) const;
  std::vector<GroupId> active_groups() const;

  const std::vector<std::string>& transcript() const { return transcript_; }
  const CoordinatorConfig& config() const { return config_; }

 private:
  struct GroupState {
    GroupModel model;
    std::set<ClientId> members;
    std::map<ClientId, UpdatePayload> pending;
  };

  GroupState& state(GroupId group);
  const GroupState& state(GroupId group) const;
  bool payload_fits(const GroupState& g, const UpdatePayload& payload) const;
  void log(std::string line);

  CoordinatorConfig config_;
  std::map<GroupId, GroupState> groups_;
  std::map<ClientId, GroupId> membership_;
  std::vector<std::string> transcript_;
};

/// Rebuilds every group's model from a transcript recorded with payloads and
/// checks each logged aggregate digest along the way. Throws on mismatch.
std::map<GroupId, GroupModel> replay_transcript(const std::vector<std::string>& lines,
                                                const ModelParams& pretrained,
                                                const CoordinatorConfig& config);

}  // namespace abrlab
