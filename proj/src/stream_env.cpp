#include "abrlab/stream_env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "abrlab/text.hpp"

namespace abrlab {

BitrateLadder::BitrateLadder() : BitrateLadder({300, 750, 1200, 1850, 2850, 4300}) {}

BitrateLadder::BitrateLadder(std::vector<double> rates_kbps) : rates_(std::move(rates_kbps)) {
  if (rates_.size() < 2) throw std::invalid_argument("bitrate ladder needs at least 2 rates");
  for (std::size_t i = 0; i < rates_.size(); ++i) {
    if (!(rates_[i] > 0.0) || !std::isfinite(rates_[i])) {
      throw std::invalid_argument("bitrate ladder rates must be positive");
    }
    if (i > 0 && !(rates_[i] > rates_[i - 1])) {
      throw std::invalid_argument("bitrate ladder must be strictly ascending");
    }
  }
}

std::size_t BitrateLadder::highest_fitting(double capacity_kbps) const {
  std::size_t best = 0;
  for (std::size_t i = 0; i < rates_.size(); ++i) {
    if (rates_[i] <= capacity_kbps) best = i;
  }
  return best;
}

void EnvConfig::validate() const {
  if (!(step > 0.0) || !(base_rtt > 0.0) || !(deadline > 0.0) || history_len == 0 ||
      episode_len == 0) {
    throw std::invalid_argument("environment config values must be positive");
  }
  if (!(deadline > base_rtt)) throw std::invalid_argument("deadline must exceed base rtt");
  if (!(max_queue_ms >= 0.0)) throw std::invalid_argument("max_queue_ms must be non-negative");
  if (weights.bitrate < 0.0 || weights.stall < 0.0 || weights.delay < 0.0 ||
      weights.smoothness < 0.0) {
    throw std::invalid_argument("qoe weights must be non-negative");
  }
}

StreamEnv::StreamEnv(EnvConfig config) : config_(std::move(config)) { config_.validate(); }

double StreamEnv::norm_rate(double kbps) const {
  return std::clamp(kbps / config_.ladder.max_rate(), 0.0, 1.0);
}

double StreamEnv::norm_delay(double ms) const {
  return std::clamp(ms / (4.0 * config_.deadline), 0.0, 1.0);
}

std::vector<double> StreamEnv::reset(const Trace& trace, double start) {
  if (trace.samples.size() < 2) throw std::invalid_argument("trace has fewer than 2 samples");
  const double needed = start + static_cast<double>(config_.episode_len) * config_.step;
  if (!(start >= trace.samples.front().t) || trace.duration() + trace.samples.front().t < needed) {
    throw std::out_of_range("trace '" + trace.id + "' too short for an episode starting at " +
                            format_double(start));
  }
  trace_ = &trace;
  start_ = start;
  steps_taken_ = 0;
  backlog_ = 0.0;
  queue_delay_ = 0.0;
  loss_ = loss_at(trace, start);
  last_bitrate_ = config_.ladder.min_rate();
  capacity_hist_.assign(config_.history_len, norm_rate(bandwidth_at(trace, start)));
  delay_hist_.assign(config_.history_len, norm_delay(config_.base_rtt));
  return observe();
}

std::vector<double> StreamEnv::observe() const {
  std::vector<double> s;
  s.reserve(config_.state_dim());
  s.insert(s.end(), capacity_hist_.begin(), capacity_hist_.end());
  s.insert(s.end(), delay_hist_.begin(), delay_hist_.end());
  s.push_back(norm_rate(last_bitrate_));
  s.push_back(norm_delay(queue_delay_));
  s.push_back(std::clamp(loss_, 0.0, 1.0));
  return s;
}

StepResult StreamEnv::step(std::size_t action) {
  if (trace_ == nullptr) throw std::logic_error("step before reset");
  if (done()) throw std::logic_error("episode exhausted");
  if (action >= config_.ladder.size()) throw std::out_of_range("action outside bitrate ladder");

  const double dt = config_.step;
  const double t = start_ + static_cast<double>(steps_taken_) * dt;
  const double bitrate = config_.ladder[action];
  const double capacity = bandwidth_at(*trace_, t);

  const double prev_backlog = backlog_;
  backlog_ = std::max(0.0, prev_backlog + (bitrate - capacity) * dt);
  double dropped = 0.0;
  if (config_.max_queue_ms > 0.0) {
    const double limit = capacity * config_.max_queue_ms / 1000.0;
    dropped = std::max(0.0, backlog_ - limit);
    backlog_ -= dropped;
  }
  const double drained = std::max(0.0, prev_backlog - backlog_);
  const double achieved = std::min(bitrate, capacity + drained / dt);

  queue_delay_ = 1000.0 * backlog_ / std::max(capacity, kMinCapacity);
  const double delay = config_.base_rtt + queue_delay_;
  const double stall = delay > config_.deadline ? dt : 0.0;

  const auto& w = config_.weights;
  const double max_rate = config_.ladder.max_rate();
  const double reward = w.bitrate * (bitrate / max_rate) - w.stall * (stall / dt) -
                        w.delay * (delay / config_.deadline) -
                        w.smoothness * std::abs(bitrate - last_bitrate_) / max_rate;

  last_bitrate_ = bitrate;
  loss_ = std::max(loss_at(*trace_, t), dropped / (bitrate * dt));
  std::rotate(capacity_hist_.begin(), capacity_hist_.begin() + 1, capacity_hist_.end());
  capacity_hist_.back() = norm_rate(capacity);
  std::rotate(delay_hist_.begin(), delay_hist_.begin() + 1, delay_hist_.end());
  delay_hist_.back() = norm_delay(delay);
  ++steps_taken_;

  StepResult r;
  r.state = observe();
  r.reward = reward;
  r.outcome = {t, bitrate, capacity, achieved, delay, stall, reward};
  return r;
}

QoeSummary episode_qoe(std::span<const StepOutcome> outcomes, double step) {
  if (outcomes.empty()) throw std::invalid_argument("episode_qoe: no outcomes");
  if (!(step > 0.0)) throw std::invalid_argument("episode_qoe: step must be positive");
  QoeSummary q;
  double stall = 0.0;
  for (const auto& o : outcomes) {
    q.mean_bitrate += o.bitrate;
    q.mean_delay += o.delay;
    q.mean_reward += o.reward;
    stall += o.stall_time;
  }
  const auto n = static_cast<double>(outcomes.size());
  q.mean_bitrate /= n;
  q.mean_delay /= n;
  q.mean_reward /= n;
  q.stall_rate = stall / (n * step);
  return q;
}

std::string outcomes_csv(std::span<const StepOutcome> outcomes) {
  std::string out = "t,action_kbps,capacity_kbps,achieved_kbps,delay_ms,stall_s,reward\n";
  for (const auto& o : outcomes) {
    out += format_double(o.t) + ',' + format_double(o.bitrate) + ',' + format_double(o.capacity) +
           ',' + format_double(o.achieved_throughput) + ',' + format_double(o.delay) + ',' +
           format_double(o.stall_time) + ',' + format_double(o.reward) + '\n';
  }
  return out;
}

}  // namespace abrlab
