#include "abrlab/federation.hpp"

#include <stdexcept>

#include "json.hpp"

namespace abrlab {

using nlohmann::json;

std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::NotEnrolled: return "not-enrolled";
    case RejectReason::WrongGroup: return "wrong-group";
    case RejectReason::StaleRound: return "stale-round";
    case RejectReason::FutureRound: return "future-round";
    case RejectReason::Duplicate: return "duplicate";
    case RejectReason::ShapeMismatch: return "shape-mismatch";
  }
  return "?";
}

PersonalizationMix::PersonalizationMix(double lambda) : lambda_(lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("personalization lambda must be in [0, 1]");
  }
}

namespace {

bool same_shape(const ModelParams& a, const ModelParams& b) {
  if (a.specs != b.specs || a.blocks.size() != b.blocks.size()) return false;
  for (std::size_t l = 0; l < a.blocks.size(); ++l) {
    if (a.blocks[l].weight.size() != b.blocks[l].weight.size() ||
        a.blocks[l].bias.size() != b.blocks[l].bias.size()) {
      return false;
    }
  }
  return true;
}

void mix_into(std::vector<double>& out, const std::vector<double>& local,
              const std::vector<double>& global, double lambda) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = local[i] == global[i] ? local[i] : lambda * local[i] + (1.0 - lambda) * global[i];
  }
}

json blocks_to_json(const std::vector<LayerBlock>& blocks) {
  json arr = json::array();
  for (const auto& b : blocks) arr.push_back({{"w", b.weight}, {"b", b.bias}});
  return arr;
}

std::vector<LayerBlock> blocks_from_json(const json& arr) {
  std::vector<LayerBlock> out;
  for (const auto& j : arr) {
    out.push_back({j.at("w").get<std::vector<double>>(), j.at("b").get<std::vector<double>>()});
  }
  return out;
}

}  // namespace

ModelParams personalize(const ModelParams& local_prev, const ModelParams& global,
                        PersonalizationMix mix) {
  if (!same_shape(local_prev, global)) throw std::invalid_argument("personalize: shape mismatch");
  ModelParams out = local_prev;
  for (std::size_t l = 0; l < out.blocks.size(); ++l) {
    mix_into(out.blocks[l].weight, local_prev.blocks[l].weight, global.blocks[l].weight, mix.lambda());
    mix_into(out.blocks[l].bias, local_prev.blocks[l].bias, global.blocks[l].bias, mix.lambda());
  }
  return out;
}

Gradients strip_frozen(Gradients grads, const FreezeMask& mask) {
  if (mask.trainable.size() != grads.blocks.size()) {
    throw std::invalid_argument("strip_frozen: mask length mismatch");
  }
  for (std::size_t l = 0; l < grads.blocks.size(); ++l) {
    if (!mask.trainable[l]) grads.blocks[l] = {};
  }
  return grads;
}

Coordinator::Coordinator(CoordinatorConfig config) : config_(std::move(config)) {
  if (!(config_.server_lr > 0.0)) throw std::invalid_argument("server learning rate must be positive");
}

Coordinator::GroupState& Coordinator::state(GroupId group) {
  const auto it = groups_.find(group);
  if (it == groups_.end()) throw std::out_of_range("group " + group.label() + " is not seeded");
  return it->second;
}

const Coordinator::GroupState& Coordinator::state(GroupId group) const {
  const auto it = groups_.find(group);
  if (it == groups_.end()) throw std::out_of_range("group " + group.label() + " is not seeded");
  return it->second;
}

void Coordinator::log(std::string line) {
  if (config_.transcript) transcript_.push_back(std::move(line));
}

const GroupModel& Coordinator::seed_group(GroupId group, const ModelParams& pretrained) {
  if (groups_.contains(group)) throw std::logic_error("group " + group.label() + " already seeded");
  if (config_.server_mask.trainable.size() != pretrained.layer_count()) {
    throw std::invalid_argument("server freeze mask does not match model layers");
  }
  check_finite(pretrained);
  auto& g = groups_[group];
  g.model = {group, pretrained, 0};
  log(json{{"op", "seed"}, {"group", group.index()}, {"digest", hex_digest(params_digest(pretrained))}}
          .dump());
  return g.model;
}

GroupModel Coordinator::register_client(const ClientId& client, GroupId group) {
  auto& g = state(group);
  if (membership_.contains(client)) {
    throw std::logic_error("client '" + client + "' is already registered");
  }
  g.members.insert(client);
  membership_.emplace(client, group);
  log(json{{"op", "register"}, {"client", client}, {"group", group.index()}, {"version", g.model.version}}
          .dump());
  return g.model;
}

bool Coordinator::payload_fits(const GroupState& g, const UpdatePayload& payload) const {
  const auto& params = g.model.params;
  if (const auto* grads = std::get_if<Gradients>(&payload)) {
    if (grads->blocks.size() != params.blocks.size()) return false;
    for (std::size_t l = 0; l < params.blocks.size(); ++l) {
      const auto& gb = grads->blocks[l];
      const auto& pb = params.blocks[l];
      const bool empty = gb.weight.empty() && gb.bias.empty();
      if (empty && !config_.server_mask.trainable[l]) continue;
      if (gb.weight.size() != pb.weight.size() || gb.bias.size() != pb.bias.size()) return false;
    }
    return true;
  }
  return same_shape(std::get<ModelParams>(payload), params);
}

SubmitResult Coordinator::submit(UpdateMessage update) {
  SubmitResult result;
  const auto member = membership_.find(update.client);
  if (member == membership_.end()) {
    result.rejected = RejectReason::NotEnrolled;
  } else if (member->second != update.group) {
    result.rejected = RejectReason::WrongGroup;
  } else {
    auto& g = state(update.group);
    const bool gradient_mode = config_.mode == AggregationMode::GradientMean;
    if (update.round < g.model.version) {
      result.rejected = RejectReason::StaleRound;
    } else if (update.round > g.model.version) {
      result.rejected = RejectReason::FutureRound;
    } else if (g.pending.contains(update.client)) {
      result.rejected = RejectReason::Duplicate;
    } else if (std::holds_alternative<Gradients>(update.payload) != gradient_mode ||
               !payload_fits(g, update.payload)) {
      result.rejected = RejectReason::ShapeMismatch;
    }
  }

  if (config_.transcript) {
    json rec{{"op", "submit"},
             {"client", update.client},
             {"group", update.group.index()},
             {"round", update.round},
             {"status", result.accepted() ? "accepted" : std::string(to_string(*result.rejected))}};
    if (config_.transcript_payloads && result.accepted()) {
      if (const auto* grads = std::get_if<Gradients>(&update.payload)) {
        rec["gradients"] = blocks_to_json(grads->blocks);
      } else {
        rec["params"] = blocks_to_json(std::get<ModelParams>(update.payload).blocks);
      }
    }
    log(rec.dump());
  }
  if (result.accepted()) {
    state(update.group).pending.emplace(update.client, std::move(update.payload));
  }
  return result;
}

bool Coordinator::barrier_ready(GroupId group) const {
  const auto& g = state(group);
  if (g.members.empty()) return false;
  for (const auto& c : g.members) {
    if (!g.pending.contains(c)) return false;
  }
  return true;
}

const GroupModel& Coordinator::aggregate_round(GroupId group) {
  auto& g = state(group);
  if (!barrier_ready(group)) {
    throw std::logic_error("aggregate_round: barrier not satisfied for group " + group.label());
  }
  const auto& mask = config_.server_mask;
  const double count = static_cast<double>(g.members.size());
  auto& params = g.model.params;

  if (config_.mode == AggregationMode::GradientMean) {
    Gradients mean = zero_gradients(params);
    for (std::size_t l = 0; l < mean.blocks.size(); ++l) {
      if (!mask.trainable[l]) continue;
      auto& mb = mean.blocks[l];
      for (const auto& c : g.members) {
        const auto& gb = std::get<Gradients>(g.pending.at(c)).blocks[l];
        if (gb.weight.empty() && gb.bias.empty()) continue;
        for (std::size_t i = 0; i < mb.weight.size(); ++i) mb.weight[i] += gb.weight[i];
        for (std::size_t i = 0; i < mb.bias.size(); ++i) mb.bias[i] += gb.bias[i];
      }
      for (auto& v : mb.weight) v /= count;
      for (auto& v : mb.bias) v /= count;
    }
    const double lr = config_.scale_lr_by_members ? config_.server_lr * count : config_.server_lr;
    params = apply_update(params, mean, lr, mask);
  } else {
    for (std::size_t l = 0; l < params.blocks.size(); ++l) {
      if (!mask.trainable[l]) continue;
      auto& pb = params.blocks[l];
      std::fill(pb.weight.begin(), pb.weight.end(), 0.0);
      std::fill(pb.bias.begin(), pb.bias.end(), 0.0);
      for (const auto& c : g.members) {
        const auto& cb = std::get<ModelParams>(g.pending.at(c)).blocks[l];
        for (std::size_t i = 0; i < pb.weight.size(); ++i) pb.weight[i] += cb.weight[i];
        for (std::size_t i = 0; i < pb.bias.size(); ++i) pb.bias[i] += cb.bias[i];
      }
      for (auto& v : pb.weight) v /= count;
      for (auto& v : pb.bias) v /= count;
    }
  }
  check_finite(params);
  g.pending.clear();
  ++g.model.version;
  log(json{{"op", "aggregate"},
           {"group", group.index()},
           {"version", g.model.version},
           {"members", g.members.size()},
           {"digest", hex_digest(params_digest(params))}}
          .dump());
  return g.model;
}

GroupModel Coordinator::migrate(const ClientId& client, GroupId from, GroupId to) {
  const auto member = membership_.find(client);
  if (member == membership_.end() || member->second != from) {
    throw std::logic_error("client '" + client + "' is not a member of " + from.label());
  }
  auto& target = state(to);
  if (from == to) return target.model;
  auto& source = state(from);
  if (source.pending.contains(client)) {
    throw std::logic_error("migrate: client '" + client + "' is mid-round");
  }
  source.members.erase(client);
  target.members.insert(client);
  member->second = to;
  log(json{{"op", "migrate"},
           {"client", client},
           {"from", from.index()},
           {"to", to.index()},
           {"version", target.model.version}}
          .dump());
  return target.model;
}

const GroupModel& Coordinator::fetch(GroupId group) const { return state(group).model; }

std::vector<ClientId> Coordinator::members(GroupId group) const {
  const auto& m = state(group).members;
  return {m.begin(), m.end()};
}

std::optional<GroupId> Coordinator::group_of_client(const ClientId& client) const {
  const auto it = membership_.find(client);
  if (it == membership_.end()) return std::nullopt;
  return it->second;
}

std::vector<GroupId> Coordinator::active_groups() const {
  std::vector<GroupId> out;
  for (const auto& [id, g] : groups_) {
    if (!g.members.empty()) out.push_back(id);
  }
  return out;
}

std::map<GroupId, GroupModel> replay_transcript(const std::vector<std::string>& lines,
                                                const ModelParams& pretrained,
                                                const CoordinatorConfig& config) {
  CoordinatorConfig quiet = config;
  quiet.transcript = false;
  Coordinator coord(quiet);
  std::map<GroupId, GroupModel> out;

  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto rec = json::parse(lines[n]);
    const auto op = rec.at("op").get<std::string>();
    const auto where = "transcript line " + std::to_string(n + 1);
    if (op == "seed") {
      if (rec.at("digest").get<std::string>() != hex_digest(params_digest(pretrained))) {
        throw std::runtime_error(where + ": seed digest does not match pretrained model");
      }
      coord.seed_group(GroupId(rec.at("group").get<int>()), pretrained);
    } else if (op == "register") {
      coord.register_client(rec.at("client").get<std::string>(), GroupId(rec.at("group").get<int>()));
    } else if (op == "submit") {
      if (rec.at("status").get<std::string>() != "accepted") continue;
      UpdateMessage msg;
      msg.client = rec.at("client").get<std::string>();
      msg.group = GroupId(rec.at("group").get<int>());
      msg.round = rec.at("round").get<std::uint64_t>();
      if (rec.contains("gradients")) {
        msg.payload = Gradients{blocks_from_json(rec.at("gradients"))};
      } else if (rec.contains("params")) {
        ModelParams p;
        p.specs = pretrained.specs;
        p.blocks = blocks_from_json(rec.at("params"));
        msg.payload = std::move(p);
      } else {
        throw std::runtime_error(where + ": transcript was recorded without payloads");
      }
      if (!coord.submit(std::move(msg)).accepted()) {
        throw std::runtime_error(where + ": replayed submission rejected");
      }
    } else if (op == "aggregate") {
      const auto& model = coord.aggregate_round(GroupId(rec.at("group").get<int>()));
      if (model.version != rec.at("version").get<std::uint64_t>() ||
          hex_digest(params_digest(model.params)) != rec.at("digest").get<std::string>()) {
        throw std::runtime_error(where + ": replayed aggregate diverges from transcript");
      }
    } else if (op == "migrate") {
      coord.migrate(rec.at("client").get<std::string>(), GroupId(rec.at("from").get<int>()),
                    GroupId(rec.at("to").get<int>()));
    } else {
      throw std::runtime_error(where + ": unknown op '" + op + "'");
    }
  }
  for (int i = 1; i <= 12; ++i) {
    const GroupId g(i);
    if (coord.is_seeded(g)) out.emplace(g, coord.fetch(g));
  }
  return out;
}

}  // namespace abrlab
