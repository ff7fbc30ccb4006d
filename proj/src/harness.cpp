#include "abrlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "abrlab/text.hpp"

namespace abrlab {

std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::OfflineOnly: return "offline-only";
    case Scheme::OnlineScratch: return "online-scratch";
    case Scheme::TransferOnly: return "transfer-only";
    case Scheme::FullBamboo: return "full-bamboo";
  }
  return "?";
}

Scheme parse_scheme(std::string_view s) {
  for (auto scheme : kAllSchemes) {
    if (to_string(scheme) == s) return scheme;
  }
  throw std::invalid_argument("unknown scheme '" + std::string(s) +
                              "' (offline-only, online-scratch, transfer-only, full-bamboo)");
}

void ConvergenceRule::validate() const {
  if (window == 0 || sustain == 0) throw std::invalid_argument("convergence window and sustain must be >= 1");
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("convergence fraction must be in (0, 1)");
}

std::vector<double> smooth_rewards(std::span<const double> rewards, std::size_t window) {
  if (window == 0) throw std::invalid_argument("smoothing window must be >= 1");
  std::vector<double> out;
  if (rewards.size() < window) return out;
  out.reserve(rewards.size() - window + 1);
  for (std::size_t end = window; end <= rewards.size(); ++end) {
    double sum = 0.0;
    for (std::size_t i = end - window; i < end; ++i) sum += rewards[i];
    out.push_back(sum / static_cast<double>(window));
  }
  return out;
}

std::optional<std::size_t> convergence_epoch(std::span<const double> rewards,
                                             const ConvergenceRule& rule) {
  rule.validate();
  if (rewards.size() < rule.window + rule.sustain) {
    throw std::invalid_argument("reward series shorter than window + sustain");
  }
  const auto smoothed = smooth_rewards(rewards, rule.window);
  const auto m = smoothed.size();
  const auto tail = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(m))));
  double plateau = 0.0;
  for (std::size_t i = m - tail; i < m; ++i) plateau += smoothed[i];
  plateau /= static_cast<double>(tail);
  const double floor = *std::min_element(smoothed.begin(), smoothed.end());
  const double threshold = floor + (1.0 - rule.fraction) * std::max(0.0, plateau - floor);
  // absorbs rounding in the plateau mean of a flat series
  const double cutoff = threshold - 1e-12 * (1.0 + std::abs(threshold));

  std::size_t run = 0;
  for (std::size_t i = 0; i < m; ++i) {
    run = smoothed[i] >= cutoff ? run + 1 : 0;
    if (run == rule.sustain) return rule.window + (i + 1 - rule.sustain);
  }
  return std::nullopt;
}

double efficiency_gain(double t_base, double t_new) {
  if (!(t_base > 0.0) || !(t_new > 0.0)) throw std::invalid_argument("convergence times must be positive");
  return (t_base - t_new) / t_base;
}

double speedup_percent(double t_base, double t_new) {
  if (!(t_base > 0.0) || !(t_new > 0.0)) throw std::invalid_argument("convergence times must be positive");
  return 100.0 * (t_base - t_new) / t_new;
}

std::optional<double> RunMetrics::convergence_sim_hours() const {
  if (!convergence_epoch) return std::nullopt;
  return static_cast<double>(*convergence_epoch) * seconds_per_epoch / 3600.0;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const Trace& lookup(const TraceLibrary& traces, const std::string& id) {
  const auto it = traces.find(id);
  if (it == traces.end()) throw std::invalid_argument("unknown trace '" + id + "'");
  return it->second;
}

struct OnlineClient {
  ClientId id;
  const Trace* trace = nullptr;
  std::mt19937_64 rng;
  ModelParams params;
  ModelParams local;
  GroupId group{1};
  std::vector<ScheduleEntry> schedule;
  std::vector<GroupChange> changes;
  std::size_t next_change = 0;
  StreamEnv env;
  std::vector<double> state;
  double reward_sum = 0.0;
  std::size_t steps = 0;
  double session_seconds = 0.0;
};

RoundView make_view(std::size_t epoch, std::size_t round, const Coordinator* coord,
                    const std::vector<OnlineClient>& clients) {
  RoundView v{epoch, round, coord, {}};
  for (const auto& c : clients) v.clients.push_back({c.id, c.group, c.params});
  return v;
}

void evaluate_tests(RunMetrics& m, const ModelParams& params, std::span<const Trace> tests,
                    const EnvConfig& env) {
  for (const auto& t : tests) {
    const auto outcomes = evaluate_episode(params, t, env, t.samples.front().t);
    m.test_qoe.push_back({t.id, episode_qoe(outcomes, env.step)});
  }
  if (!m.test_qoe.empty()) m.mean_test_qoe = mean_qoe(m.test_qoe);
}

}  // namespace

QoeSummary mean_qoe(std::span<const TraceQoe> per_trace) {
  if (per_trace.empty()) throw std::invalid_argument("mean_qoe: no traces");
  QoeSummary q;
  for (const auto& t : per_trace) {
    q.mean_bitrate += t.qoe.mean_bitrate;
    q.stall_rate += t.qoe.stall_rate;
    q.mean_delay += t.qoe.mean_delay;
    q.mean_reward += t.qoe.mean_reward;
  }
  const auto n = static_cast<double>(per_trace.size());
  q.mean_bitrate /= n;
  q.stall_rate /= n;
  q.mean_delay /= n;
  q.mean_reward /= n;
  return q;
}

RunMetrics run_scheme(const SchemeConfig& config, const TraceLibrary& traces,
                      std::span<const Trace> test_traces, const ModelParams* pretrained,
                      const RoundObserver& observer) {
  const auto wall_start = std::chrono::steady_clock::now();
  config.env.validate();
  config.transfer.hyper.validate();
  config.convergence.validate();
  if (config.clients.empty()) throw std::invalid_argument("run_scheme: no clients configured");
  if (config.federation.local_rollouts == 0) throw std::invalid_argument("local_rollouts must be >= 1");

  RunMetrics m;
  m.scheme = config.scheme;
  m.seconds_per_epoch = static_cast<double>(config.env.episode_len) * config.env.step;
  if (m.scheme == Scheme::FullBamboo && config.clients.size() == 1) {
    m.warnings.push_back("full-bamboo with a single client runs as transfer-only");
    m.scheme = Scheme::TransferOnly;
  }
  if (m.scheme != Scheme::OnlineScratch && pretrained == nullptr) {
    throw std::invalid_argument(std::string(to_string(m.scheme)) + " needs a pretrained checkpoint");
  }
  const auto arch = config.arch.empty() ? default_arch(config.env.state_dim()) : config.arch;
  const auto& hyper = config.transfer.hyper;

  ModelParams initial = m.scheme == Scheme::OnlineScratch
                            ? init_params(arch, config.env.ladder.size(), splitmix64(config.seed))
                            : *pretrained;
  if (initial.input_dim() != config.env.state_dim() ||
      initial.action_count() != config.env.ladder.size()) {
    throw std::invalid_argument("model shape does not match the environment");
  }
  const auto mask = m.scheme == Scheme::OnlineScratch
                        ? FreezeMask::all_trainable(initial.layer_count())
                        : make_freeze_mask(initial.hidden_count(), config.transfer.frozen_layers);

  const std::size_t client_count = m.scheme == Scheme::FullBamboo ? config.clients.size() : 1;
  std::vector<OnlineClient> clients;
  clients.reserve(client_count);
  for (std::size_t i = 0; i < client_count; ++i) {
    const auto& spec = config.clients[i];
    OnlineClient c{.id = spec.id,
                   .trace = &lookup(traces, spec.trace),
                   .rng = std::mt19937_64(spec.seed.value_or(splitmix64(config.seed * 1000003ULL + i + 1))),
                   .params = initial,
                   .local = initial,
                   .group = group_of(lookup(traces, spec.trace).labels.network_type,
                                     lookup(traces, spec.trace).labels.transport_mode),
                   .schedule = {},
                   .changes = {},
                   .next_change = 0,
                   .env = StreamEnv(config.env),
                   .state = {}};
    if (m.scheme == Scheme::FullBamboo && !spec.schedule.empty()) {
      c.schedule = spec.schedule;
      std::vector<ScheduledCondition> conditions;
      for (const auto& e : spec.schedule) {
        conditions.push_back({e.time, {spec.id, e.labels.network_type, e.labels.transport_mode, e.time}});
        lookup(traces, e.trace);
      }
      const double horizon = static_cast<double>(config.epochs) * m.seconds_per_epoch;
      c.changes = poll(conditions, config.federation.poll_period, horizon);
      c.group = group_of(spec.schedule.front().labels.network_type,
                         spec.schedule.front().labels.transport_mode);
      c.trace = &lookup(traces, spec.schedule.front().trace);
    }
    clients.push_back(std::move(c));
  }
  if (config.federation.assignment == GroupAssignment::Pooled) {
    for (auto& c : clients) c.group = clients.front().group;
  }

  if (m.scheme == Scheme::OfflineOnly) {
    auto& c = clients.front();
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      c.state = c.env.reset(*c.trace, random_episode_start(*c.trace, config.env, c.rng));
      c.reward_sum = 0.0;
      c.steps = 0;
      while (!c.env.done()) {
        const auto r = collect_rollout(c.params, c.env, c.state, hyper.rollout_len, c.rng);
        for (const auto& st : r.trajectory.steps) c.reward_sum += st.reward;
        c.steps += r.trajectory.steps.size();
      }
      m.rewards.push_back(c.reward_sum / static_cast<double>(c.steps));
      m.epoch_digests.push_back(params_digest(c.params));
      if (observer) observer(make_view(epoch, epoch, nullptr, clients));
    }
  } else {
    CoordinatorConfig cc;
    cc.server_lr = config.federation.server_lr.value_or(hyper.learning_rate);
    cc.scale_lr_by_members = config.federation.server_lr_per_member;
    cc.server_mask = mask;
    cc.mode = config.federation.mode;
    cc.transcript = config.federation.transcript;
    cc.transcript_payloads = config.federation.transcript_payloads;
    Coordinator coord(cc);
    if (m.scheme == Scheme::FullBamboo) {
      for (int g = 1; g <= 12; ++g) coord.seed_group(GroupId(g), initial);
    } else {
      coord.seed_group(clients.front().group, initial);
    }
    for (auto& c : clients) c.params = coord.register_client(c.id, c.group).params;

    const PersonalizationMix mix(config.federation.mix_lambda);
    const bool gradient_mode = cc.mode == AggregationMode::GradientMean;
    std::size_t round = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      for (auto& c : clients) {
        c.state = c.env.reset(*c.trace, random_episode_start(*c.trace, config.env, c.rng));
        c.reward_sum = 0.0;
        c.steps = 0;
      }
      while (!clients.front().env.done()) {
        ++round;
        for (auto& c : clients) {
          ModelParams theta = c.params;
          Gradients sum;
          std::size_t count = 0;
          const auto steps_before = c.steps;
          for (std::size_t e = 0; e < config.federation.local_rollouts && !c.env.done(); ++e) {
            const auto r = collect_rollout(theta, c.env, c.state, hyper.rollout_len, c.rng);
            for (const auto& st : r.trajectory.steps) c.reward_sum += st.reward;
            c.steps += r.trajectory.steps.size();
            auto g = clip_by_global_norm(a3c_gradients(theta, r.trajectory, hyper).grads, hyper.clip_norm);
            theta = apply_update(theta, g, hyper.learning_rate, mask);
            check_finite(theta);
            if (count++ == 0) {
              sum = std::move(g);
            } else {
              for (std::size_t l = 0; l < sum.blocks.size(); ++l) {
                for (std::size_t i = 0; i < sum.blocks[l].weight.size(); ++i) sum.blocks[l].weight[i] += g.blocks[l].weight[i];
                for (std::size_t i = 0; i < sum.blocks[l].bias.size(); ++i) sum.blocks[l].bias[i] += g.blocks[l].bias[i];
              }
            }
          }
          if (count > 1) {
            const double inv = 1.0 / static_cast<double>(count);
            for (auto& b : sum.blocks) {
              for (auto& v : b.weight) v *= inv;
              for (auto& v : b.bias) v *= inv;
            }
          }
          c.session_seconds += static_cast<double>(c.steps - steps_before) * config.env.step;
          c.local = std::move(theta);
          UpdatePayload payload = gradient_mode ? UpdatePayload(strip_frozen(std::move(sum), mask))
                                                : UpdatePayload(c.local);
          const auto res = coord.submit({c.id, c.group, coord.fetch(c.group).version, std::move(payload)});
          if (!res.accepted()) {
            throw std::logic_error("client '" + c.id + "' update rejected: " +
                                   std::string(to_string(*res.rejected)));
          }
        }
        for (const auto g : coord.active_groups()) coord.aggregate_round(g);
        for (auto& c : clients) {
          c.params = personalize(c.local, coord.fetch(c.group).params, mix);
          // group changes take effect at this round boundary; the new trace at the next episode
          while (c.next_change < c.changes.size() && c.changes[c.next_change].at <= c.session_seconds) {
            const auto& change = c.changes[c.next_change++];
            if (change.to == c.group) continue;
            const auto target = coord.migrate(c.id, c.group, change.to);
            c.params = personalize(c.params, target.params, mix);
            c.group = change.to;
            const ScheduleEntry* active = &c.schedule.front();
            for (const auto& e : c.schedule) {
              if (e.time <= change.at) active = &e;
            }
            c.trace = &lookup(traces, active->trace);
          }
        }
        if (observer) observer(make_view(epoch, round, &coord, clients));
      }
      double epoch_reward = 0.0;
      for (const auto& c : clients) epoch_reward += c.reward_sum / static_cast<double>(c.steps);
      m.rewards.push_back(epoch_reward / static_cast<double>(clients.size()));
      m.epoch_digests.push_back(params_digest(clients.front().params));
    }
    m.transcript = coord.transcript();
  }

  m.final_params = clients.front().params;
  m.smoothed = smooth_rewards(m.rewards, config.convergence.window);
  if (m.rewards.size() >= config.convergence.window + config.convergence.sustain) {
    m.convergence_epoch = convergence_epoch(m.rewards, config.convergence);
  } else {
    m.warnings.push_back("too few epochs to evaluate convergence");
  }
  evaluate_tests(m, m.final_params, test_traces, config.env);
  m.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return m;
}

std::vector<QoeReportRow> qoe_report(const std::map<Scheme, QoeSummary>& runs, Scheme anchor) {
  const auto it = runs.find(anchor);
  if (it == runs.end()) throw std::invalid_argument("anchor scheme missing from report");
  const auto& a = it->second;
  std::vector<QoeReportRow> rows;
  for (const auto& [scheme, q] : runs) {
    const std::pair<const char*, std::pair<double, double>> metrics[] = {
        {"mean_bitrate_kbps", {q.mean_bitrate, a.mean_bitrate}},
        {"stall_rate", {q.stall_rate, a.stall_rate}},
        {"mean_delay_ms", {q.mean_delay, a.mean_delay}},
    };
    for (const auto& [name, values] : metrics) {
      QoeReportRow row{scheme, name, values.first, values.second, 0.0, false};
      if (values.second == 0.0) {
        row.difference = true;
        row.normalized = values.first - values.second;
      } else {
        row.normalized = values.first / values.second;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string qoe_report_csv(std::span<const QoeReportRow> rows) {
  std::string out = "scheme,metric,value,anchor_value,normalized,mode\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.scheme)) + ',' + r.metric + ',' + format_double(r.value) + ',' +
           format_double(r.anchor_value) + ',' + format_double(r.normalized) + ',' +
           (r.difference ? "difference" : "ratio") + '\n';
  }
  return out;
}

std::string rewards_csv(const RunMetrics& m, std::size_t window) {
  std::string out = "epoch,mean_reward,smoothed_reward\n";
  for (std::size_t e = 1; e <= m.rewards.size(); ++e) {
    out += std::to_string(e) + ',' + format_double(m.rewards[e - 1]) + ',';
    if (e >= window && e - window < m.smoothed.size()) out += format_double(m.smoothed[e - window]);
    out += '\n';
  }
  return out;
}

std::string test_qoe_csv(const RunMetrics& m) {
  std::string out = "trace,mean_bitrate_kbps,stall_rate,mean_delay_ms,mean_reward\n";
  auto row = [&](const std::string& name, const QoeSummary& q) {
    out += name + ',' + format_double(q.mean_bitrate) + ',' + format_double(q.stall_rate) + ',' +
           format_double(q.mean_delay) + ',' + format_double(q.mean_reward) + '\n';
  };
  for (const auto& t : m.test_qoe) row(t.trace, t.qoe);
  if (!m.test_qoe.empty()) row("mean", m.mean_test_qoe);
  return out;
}

std::string convergence_row_header() {
  return "label,scheme,epochs_run,convergence_epoch,convergence_sim_hours\n";
}

std::string convergence_row(const RunMetrics& m, std::string_view label) {
  std::string out = std::string(label) + ',' + std::string(to_string(m.scheme)) + ',' +
                    std::to_string(m.rewards.size()) + ',';
  if (m.convergence_epoch) {
    out += std::to_string(*m.convergence_epoch) + ',' + format_double(*m.convergence_sim_hours());
  } else {
    out += ',';
  }
  return out + '\n';
}

std::vector<EfficiencyRow> efficiency_rows(const std::map<Scheme, double>& times) {
  std::vector<EfficiencyRow> rows;
  auto add = [&](Scheme base, Scheme next) {
    const auto b = times.find(base);
    const auto n = times.find(next);
    if (b == times.end() || n == times.end()) return;
    rows.push_back({std::string(to_string(next)) + " vs " + std::string(to_string(base)), b->second,
                    n->second, efficiency_gain(b->second, n->second),
                    speedup_percent(b->second, n->second)});
  };
  add(Scheme::OnlineScratch, Scheme::TransferOnly);
  add(Scheme::TransferOnly, Scheme::FullBamboo);
  add(Scheme::OnlineScratch, Scheme::FullBamboo);
  return rows;
}

std::string efficiency_csv(std::span<const EfficiencyRow> rows) {
  std::string out = "comparison,t_base,t_new,efficiency_gain,speedup_percent\n";
  for (const auto& r : rows) {
    out += r.comparison + ',' + format_double(r.t_base) + ',' + format_double(r.t_new) + ',' +
           format_double(r.gain) + ',' + format_double(r.speedup_percent) + '\n';
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace abrlab
