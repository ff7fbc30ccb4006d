#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "abrlab/trace.hpp"

namespace abrlab {

class BitrateLadder {
 public:
  BitrateLadder();  // {300, 750, 1200, 1850, 2850, 4300} kbps
  explicit BitrateLadder(std::vector<double> rates_kbps);

  std::size_t size() const { return rates_.size(); }
  double operator[](std::size_t i) const { return rates_.at(i); }
  double min_rate() const { return rates_.front(); }
  double max_rate() const { return rates_.back(); }
  std::span<const double> rates() const { return rates_; }

  /// Highest index whose rate is <= capacity (0 when none fits).
  std::size_t highest_fitting(double capacity_kbps) const;

 private:
  std::vector<double> rates_;
};

struct QoeWeights {
  double bitrate = 1.0;
  double stall = 1.5;
  double delay = 0.5;
  double smoothness = 0.5;
};

struct EnvConfig {
  double step = 1.0;          // s
  double base_rtt = 50.0;     // ms
  double deadline = 400.0;    // ms
  std::size_t history_len = 8;
  QoeWeights weights;
  std::size_t episode_len = 300;  // steps
  BitrateLadder ladder;
  // Drop-tail buffer measured in ms of current capacity; 0 leaves the queue
  // unbounded. Dropped traffic is reported through the loss feature.
  double max_queue_ms = 0.0;

  void validate() const;
  std::size_t state_dim() const { return 2 * history_len + 3; }
};

struct StepOutcome {
  double t = 0.0;               // s, trace time at the start of the step
  double bitrate = 0.0;         // kbps, chosen send rate
  double capacity = 0.0;        // kbps
  double achieved_throughput = 0.0;
  double delay = 0.0;           // ms
  double stall_time = 0.0;      // s
  double reward = 0.0;

  bool operator==(const StepOutcome&) const = default;
};

struct StepResult {
  std::vector<double> state;
  double reward = 0.0;
  StepOutcome outcome;
};

struct QoeSummary {
  double mean_bitrate = 0.0;  // kbps
  double stall_rate = 0.0;    // fraction of session time
  double mean_delay = 0.0;    // ms
  double mean_reward = 0.0;
};

/// Fluid-queue simulator of one real-time session over a bandwidth trace.
///
/// Each step the sender commits to one ladder bitrate for `step` seconds. The
/// excess over link capacity accumulates as backlog, which is the only source
/// of queueing delay. A step is stalled when end-to-end delay misses the
/// interactive deadline.
///
/// State layout (length 2k + 3, every entry in [0, 1]):
///   [0, k)      link capacity history, / max ladder rate
///   [k, 2k)     end-to-end delay history, / (4 * deadline)
///   2k          last chosen bitrate, / max ladder rate
///   2k + 1      current queueing delay, / (4 * deadline)
///   2k + 2      loss rate (trace loss, or the drop fraction when larger)
class StreamEnv {
 public:
  static constexpr double kMinCapacity = 1.0;  // kbps

  explicit StreamEnv(EnvConfig config);

  std::vector<double> reset(const Trace& trace, double start);
  StepResult step(std::size_t action);

  bool done() const { return steps_taken_ >= config_.episode_len; }
  std::size_t steps_taken() const { return steps_taken_; }
  double backlog() const { return backlog_; }  // kbit
  const EnvConfig& config() const { return config_; }
  std::vector<double> observe() const;

 private:
  double norm_rate(double kbps) const;
  double norm_delay(double ms) const;

  EnvConfig config_;
  const Trace* trace_ = nullptr;
  double start_ = 0.0;
  std::size_t steps_taken_ = 0;
  double backlog_ = 0.0;
  double queue_delay_ = 0.0;  // ms
  double loss_ = 0.0;
  double last_bitrate_ = 0.0;
  std::vector<double> capacity_hist_;  // normalized, oldest first
  std::vector<double> delay_hist_;
};

QoeSummary episode_qoe(std::span<const StepOutcome> outcomes, double step);

/// CSV `t,action_kbps,capacity_kbps,achieved_kbps,delay_ms,stall_s,reward`.
std::string outcomes_csv(std::span<const StepOutcome> outcomes);

}  // namespace abrlab
