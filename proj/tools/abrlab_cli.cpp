// abrlab command line: corpus preparation, pretraining, scheme runs and reports.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "abrlab/config.hpp"
#include "abrlab/harness.hpp"
#include "abrlab/text.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace abrlab;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig load(const Common& c) {
  auto cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void write_lines(const fs::path& file, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + '\n';
  write_file(file.string(), text);
}

void write_traces(const fs::path& dir, const std::vector<Trace>& traces) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (const auto& t : traces) {
    const auto name = t.id + ".csv";
    write_file((dir / name).string(), serialize_trace(t));
    entries.push_back({t.id, name, t.labels});
  }
  write_manifest(dir / "manifest.json", entries);
}

int cmd_synth(const Common& c) {
  const auto cfg = load(c);
  const auto corpus = build_corpus(cfg.corpus);
  write_traces(c.out, corpus);
  std::size_t sim = 0;
  if (cfg.pretrain_corpus) {
    const auto traces = build_corpus(*cfg.pretrain_corpus);
    write_traces(fs::path(c.out) / "pretrain", traces);
    sim = traces.size();
  }
  std::printf("wrote %zu traces (%zu pretraining) to %s\n", corpus.size(), sim, c.out.c_str());
  return 0;
}

int cmd_split(const Common& c) {
  const auto cfg = load(c);
  const auto pc = prepare_corpus(cfg);
  if (const auto parent = fs::path(c.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_file(c.out, split_to_json(pc.split).dump(1) + '\n');
  std::printf("pretrain %zu, finetune %zu, test %zu\n", pc.split.pretrain.size(),
              pc.split.finetune.size(), pc.split.test.size());
  return 0;
}

std::string pretrain_csv(const PretrainResult& r) {
  std::string out = "epoch,mean_reward\n";
  for (std::size_t e = 0; e < r.epoch_rewards.size(); ++e) {
    out += std::to_string(e + 1) + ',' + format_double(r.epoch_rewards[e]) + '\n';
  }
  return out;
}

PretrainResult pretrain_into(const ExperimentConfig& cfg, const PreparedCorpus& pc, const fs::path& dir) {
  fs::create_directories(dir);
  auto r = offline_train(pc.pretrain, cfg.env, pretrain_config(cfg));
  save_checkpoint((dir / "pretrained.ckpt").string(), r.params);
  write_file((dir / "pretrain_rewards.csv").string(), pretrain_csv(r));
  return r;
}

int cmd_pretrain(const Common& c) {
  const auto cfg = load(c);
  const auto pc = prepare_corpus(cfg);
  const auto r = pretrain_into(cfg, pc, c.out);
  std::printf("pretrained on %zu traces: first epoch %s, last epoch %s\n", pc.pretrain.size(),
              format_double(r.epoch_rewards.empty() ? 0.0 : r.epoch_rewards.front()).c_str(),
              format_double(r.epoch_rewards.empty() ? 0.0 : r.epoch_rewards.back()).c_str());
  return 0;
}

RunMetrics run_into(const ExperimentConfig& cfg, const PreparedCorpus& pc, Scheme scheme,
                    const ModelParams* pretrained, const fs::path& dir) {
  fs::create_directories(dir);
  const auto sc = scheme_config(cfg, pc, scheme);
  auto m = run_scheme(sc, pc.library, pc.test, pretrained);
  for (const auto& w : m.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const auto label = std::string(to_string(scheme)) + "/seed-" + std::to_string(cfg.seed);
  write_file((dir / "rewards.csv").string(), rewards_csv(m, sc.convergence.window));
  write_file((dir / "qoe.csv").string(), test_qoe_csv(m));
  write_file((dir / "convergence.csv").string(), convergence_row_header() + convergence_row(m, label));
  if (!m.transcript.empty()) write_lines(dir / "transcript.jsonl", m.transcript);
  save_checkpoint((dir / "final.ckpt").string(), m.final_params);
  // Wall-clock figures vary between executions, so they stay out of the CSVs.
  const json timing{{"wall_seconds", m.wall_seconds},
                    {"seconds_per_epoch", m.seconds_per_epoch},
                    {"epochs", m.rewards.size()}};
  write_file((dir / "timing.json").string(), timing.dump(1) + '\n');
  return m;
}

int cmd_run(const Common& c, const std::string& scheme_name, const std::string& checkpoint) {
  const auto cfg = load(c);
  const auto scheme = parse_scheme(scheme_name);
  const auto pc = prepare_corpus(cfg);
  std::optional<ModelParams> pretrained;
  if (!checkpoint.empty()) {
    pretrained = load_checkpoint(checkpoint);
  } else if (scheme != Scheme::OnlineScratch) {
    throw std::invalid_argument("scheme '" + scheme_name + "' needs --checkpoint");
  }
  const auto m = run_into(cfg, pc, scheme, pretrained ? &*pretrained : nullptr, c.out);
  std::printf("%s: %zu epochs, convergence epoch %s, test reward %s\n", std::string(to_string(m.scheme)).c_str(),
              m.rewards.size(), m.convergence_epoch ? std::to_string(*m.convergence_epoch).c_str() : "none",
              format_double(m.mean_test_qoe.mean_reward).c_str());
  return 0;
}

// --- report ---------------------------------------------------------------

struct RunRecord {
  std::string row;  // convergence.csv data row
  Scheme scheme;
  double epochs = 0;  // convergence epoch, or epochs run when never converged
  bool converged = false;
  std::optional<double> sim_hours;
  QoeSummary qoe;
};

std::vector<std::string> data_lines(const fs::path& file) {
  std::vector<std::string> out;
  const auto text = read_file(file.string());
  bool header = true;
  for (auto line : split(text, '\n')) {
    line = trim(line);
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    out.emplace_back(line);
  }
  return out;
}

double field(std::string_view s, const fs::path& file) {
  const auto v = parse_double(s);
  if (!v) throw std::runtime_error(file.string() + ": bad number '" + std::string(s) + "'");
  return *v;
}

RunRecord read_run(const fs::path& dir) {
  RunRecord r;
  const auto conv_file = dir / "convergence.csv";
  const auto rows = data_lines(conv_file);
  if (rows.size() != 1) throw std::runtime_error(conv_file.string() + ": expected one data row");
  r.row = rows.front();
  const auto f = split(r.row, ',');
  if (f.size() != 5) throw std::runtime_error(conv_file.string() + ": expected 5 columns");
  r.scheme = parse_scheme(f[1]);
  r.converged = !f[3].empty();
  r.epochs = field(r.converged ? f[3] : f[2], conv_file);
  if (!f[4].empty()) r.sim_hours = field(f[4], conv_file);

  const auto qoe_file = dir / "qoe.csv";
  bool found = false;
  for (const auto& line : data_lines(qoe_file)) {
    const auto q = split(line, ',');
    if (q.size() != 5 || q[0] != "mean") continue;
    r.qoe = {field(q[1], qoe_file), field(q[2], qoe_file), field(q[3], qoe_file), field(q[4], qoe_file)};
    found = true;
  }
  if (!found) throw std::runtime_error(qoe_file.string() + ": no mean row");
  return r;
}

void write_report(const std::vector<RunRecord>& runs, Scheme anchor, const fs::path& out) {
  fs::create_directories(out);
  std::map<Scheme, std::vector<const RunRecord*>> by_scheme;
  for (const auto& r : runs) by_scheme[r.scheme].push_back(&r);

  std::string conv = convergence_row_header();
  for (const auto& r : runs) conv += r.row + '\n';
  write_file((out / "convergence.csv").string(), conv);

  std::string summary = "scheme,runs,converged,median_convergence_epoch\n";
  std::map<Scheme, double> medians;
  std::map<Scheme, QoeSummary> qoe;
  for (const auto& [scheme, rs] : by_scheme) {
    std::vector<double> epochs;
    std::size_t converged = 0;
    QoeSummary mean;
    for (const auto* r : rs) {
      epochs.push_back(r->epochs);
      converged += r->converged ? 1 : 0;
      mean.mean_bitrate += r->qoe.mean_bitrate / static_cast<double>(rs.size());
      mean.stall_rate += r->qoe.stall_rate / static_cast<double>(rs.size());
      mean.mean_delay += r->qoe.mean_delay / static_cast<double>(rs.size());
      mean.mean_reward += r->qoe.mean_reward / static_cast<double>(rs.size());
    }
    medians[scheme] = median(epochs);
    qoe[scheme] = mean;
    summary += std::string(to_string(scheme)) + ',' + std::to_string(rs.size()) + ',' +
               std::to_string(converged) + ',' + format_double(medians[scheme]) + '\n';
  }
  write_file((out / "convergence_summary.csv").string(), summary);
  write_file((out / "efficiency.csv").string(), efficiency_csv(efficiency_rows(medians)));
  if (qoe.contains(anchor)) {
    write_file((out / "qoe.csv").string(), qoe_report_csv(qoe_report(qoe, anchor)));
  } else {
    std::fprintf(stderr, "warning: anchor scheme %s has no runs; qoe.csv not written\n",
                 std::string(to_string(anchor)).c_str());
  }
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& anchor, const std::string& out) {
  std::vector<RunRecord> runs;
  for (const auto& d : run_dirs) runs.push_back(read_run(d));
  write_report(runs, parse_scheme(anchor), out);
  std::printf("report over %zu runs written to %s\n", runs.size(), out.c_str());
  return 0;
}

int cmd_experiment(const Common& c, std::size_t seeds, const std::string& anchor) {
  auto cfg = load(c);
  const auto pc = prepare_corpus(cfg);
  const fs::path root = c.out;
  const auto pre = pretrain_into(cfg, pc, root / "pretrain");
  const auto base_seed = cfg.seed;
  std::vector<RunRecord> runs;
  for (std::size_t s = 0; s < seeds; ++s) {
    cfg.seed = base_seed + s;
    for (auto scheme : kAllSchemes) {
      const auto dir = root / std::string(to_string(scheme)) / ("seed-" + std::to_string(cfg.seed));
      run_into(cfg, pc, scheme, &pre.params, dir);
      runs.push_back(read_run(dir));
      std::printf("seed %llu %-15s convergence %s\n", static_cast<unsigned long long>(cfg.seed),
                  std::string(to_string(scheme)).c_str(),
                  runs.back().converged ? format_double(runs.back().epochs).c_str() : "none");
    }
  }
  write_report(runs, parse_scheme(anchor), root / "report");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"abrlab: federated transfer learning for real-time bitrate adaptation"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, const char* out_help) {
    sub->add_option("-c,--config", common.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "override the run seed");
    sub->add_option("-o,--out", common.out, out_help)->required();
  };

  auto* synth = app.add_subcommand("synth", "write the configured synthetic corpus as trace files");
  add_common(synth, "output directory");
  auto* split_cmd = app.add_subcommand("split", "split the corpus into pretrain/finetune/test");
  add_common(split_cmd, "split manifest (JSON)");
  auto* pretrain = app.add_subcommand("pretrain", "offline pretraining");
  add_common(pretrain, "output directory");

  auto* run = app.add_subcommand("run", "run one training scheme");
  add_common(run, "output directory");
  std::string scheme, checkpoint;
  run->add_option("-s,--scheme", scheme, "offline-only | online-scratch | transfer-only | full-bamboo")->required();
  run->add_option("--checkpoint", checkpoint, "pretrained checkpoint")->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "aggregate run directories into report tables");
  std::vector<std::string> run_dirs;
  std::string anchor = "offline-only", report_out;
  report->add_option("runs", run_dirs, "run output directories")->required()->check(CLI::ExistingDirectory);
  report->add_option("--anchor", anchor, "scheme the QoE table is normalized to");
  report->add_option("-o,--out", report_out, "output directory")->required();

  auto* experiment = app.add_subcommand("experiment", "pretrain once, run every scheme over several seeds, report");
  add_common(experiment, "output directory");
  std::size_t seeds = 10;
  experiment->add_option("--seeds", seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);
  experiment->add_option("--anchor", anchor, "scheme the QoE table is normalized to");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(common);
    if (*split_cmd) return cmd_split(common);
    if (*pretrain) return cmd_pretrain(common);
    if (*run) return cmd_run(common, scheme, checkpoint);
    if (*report) return cmd_report(run_dirs, anchor, report_out);
    if (*experiment) return cmd_experiment(common, seeds, anchor);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
