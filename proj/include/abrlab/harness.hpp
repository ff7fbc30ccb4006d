#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abrlab/discriminator.hpp"
#include "abrlab/federation.hpp"
#include "abrlab/policy_net.hpp"
#include "abrlab/stream_env.hpp"
#include "abrlab/trace.hpp"
#include "abrlab/transfer.hpp"

namespace abrlab {

enum class Scheme { OfflineOnly, OnlineScratch, TransferOnly, FullBamboo };

inline constexpr Scheme kAllSchemes[] = {Scheme::OfflineOnly, Scheme::OnlineScratch,
                                         Scheme::TransferOnly, Scheme::FullBamboo};

std::string_view to_string(Scheme s);
Scheme parse_scheme(std::string_view s);

// ---------------------------------------------------------------------------
// Convergence and efficiency metrics

struct ConvergenceRule {
  std::size_t window = 20;
  double fraction = 0.05;
  std::size_t sustain = 10;

  void validate() const;
};

/// Trailing mean over `window` epochs. Element i is the smoothed value of
/// epoch window + i (epochs count from 1).
std::vector<double> smooth_rewards(std::span<const double> rewards, std::size_t window);

/// First epoch whose smoothed reward stays at or above
///   floor + (1 - fraction) * (plateau - floor)
/// for `sustain` consecutive epochs, where plateau is the mean of the last 20%
/// of the smoothed series and floor its minimum.
std::optional<std::size_t> convergence_epoch(std::span<const double> rewards,
                                             const ConvergenceRule& rule);

/// (t_base - t_new) / t_base.
double efficiency_gain(double t_base, double t_new);
/// 100 (t_base - t_new) / t_new.
double speedup_percent(double t_base, double t_new);

// ---------------------------------------------------------------------------
// Scheme runs

struct ScheduleEntry {
  double time = 0.0;  // client session seconds
  TraceLabels labels;
  std::string trace;  // trace the client streams over from this point on
};

struct ClientSpec {
  ClientId id;
  std::string trace;
  std::optional<std::uint64_t> seed;  // default: derived from the run seed
  std::vector<ScheduleEntry> schedule;
};

enum class GroupAssignment {
  ByLabel,  // each client joins the group of its trace labels
  Pooled,   // every client joins the first client's group
};

struct FederationSettings {
  AggregationMode mode = AggregationMode::GradientMean;
  std::optional<double> server_lr;  // default: the client learning rate
  bool server_lr_per_member = false;
  double mix_lambda = 0.5;
  std::size_t local_rollouts = 1;   // rollouts per client per round
  GroupAssignment assignment = GroupAssignment::ByLabel;
  double poll_period = kDefaultPollPeriod;
  bool transcript = true;
  bool transcript_payloads = false;
};

struct SchemeConfig {
  Scheme scheme = Scheme::FullBamboo;
  EnvConfig env;
  std::vector<LayerSpec> arch;  // hidden layers; empty selects default_arch
  TransferConfig transfer;      // freeze depth and online hyperparameters
  FederationSettings federation;
  ConvergenceRule convergence;
  std::vector<ClientSpec> clients;
  std::size_t epochs = 200;
  std::uint64_t seed = 1;
};

struct ClientView {
  const ClientId& id;
  GroupId group;
  const ModelParams& params;
};

struct RoundView {
  std::size_t epoch = 0;  // 1-based
  std::size_t round = 0;  // 1-based, counted across the whole run
  const Coordinator* coordinator = nullptr;  // null for OfflineOnly
  std::vector<ClientView> clients;
};

using RoundObserver = std::function<void(const RoundView&)>;

struct TraceQoe {
  std::string trace;
  QoeSummary qoe;
};

struct RunMetrics {
  Scheme scheme = Scheme::FullBamboo;  // after any demotion
  std::vector<double> rewards;         // one per epoch
  std::vector<double> smoothed;        // see smooth_rewards
  std::optional<std::size_t> convergence_epoch;
  double seconds_per_epoch = 0.0;      // simulated session time per client epoch
  double wall_seconds = 0.0;
  std::vector<TraceQoe> test_qoe;
  QoeSummary mean_test_qoe;
  std::vector<std::uint64_t> epoch_digests;  // first client's model after each epoch
  ModelParams final_params;                  // first client's model
  std::vector<std::string> transcript;
  std::vector<std::string> warnings;

  std::optional<double> convergence_sim_hours() const;
};

using TraceLibrary = std::map<std::string, Trace>;

/// Runs one scheme end to end. Online schemes share one code path: every
/// client is a member of a coordinator group, so TransferOnly is FullBamboo
/// restricted to its first client and OnlineScratch additionally starts from
/// random weights with nothing frozen.
///
/// `pretrained` is required by every scheme except OnlineScratch.
RunMetrics run_scheme(const SchemeConfig& config, const TraceLibrary& traces,
                      std::span<const Trace> test_traces, const ModelParams* pretrained,
                      const RoundObserver& observer = {});

/// Mean of per-trace summaries.
QoeSummary mean_qoe(std::span<const TraceQoe> per_trace);

// ---------------------------------------------------------------------------
// Reports

struct QoeReportRow {
  Scheme scheme;
  std::string metric;  // mean_bitrate_kbps | stall_rate | mean_delay_ms
  double value = 0.0;
  double anchor_value = 0.0;
  double normalized = 0.0;
  bool difference = false;  // anchor was zero: normalized holds value - anchor
};

std::vector<QoeReportRow> qoe_report(const std::map<Scheme, QoeSummary>& runs, Scheme anchor);
std::string qoe_report_csv(std::span<const QoeReportRow> rows);

std::string rewards_csv(const RunMetrics& m, std::size_t window);
std::string test_qoe_csv(const RunMetrics& m);
std::string convergence_row_header();
std::string convergence_row(const RunMetrics& m, std::string_view label);

struct EfficiencyRow {
  std::string comparison;  // e.g. "transfer-only vs online-scratch"
  double t_base = 0.0;
  double t_new = 0.0;
  double gain = 0.0;
  double speedup_percent = 0.0;
};

/// Pairwise efficiency of the three online schemes from their convergence
/// times (any consistent unit). Missing schemes are skipped.
std::vector<EfficiencyRow> efficiency_rows(const std::map<Scheme, double>& convergence_times);
std::string efficiency_csv(std::span<const EfficiencyRow> rows);

double median(std::vector<double> values);

}  // namespace abrlab
