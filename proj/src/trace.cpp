#include "abrlab/trace.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <random>

#include "abrlab/text.hpp"
#include "json.hpp"

namespace abrlab {

std::string_view to_string(NetworkType nt) {
  switch (nt) {
    case NetworkType::ThreeG: return "3g";
    case NetworkType::FourG: return "4g";
    case NetworkType::WiFi: return "wifi";
  }
  return "?";
}

std::string_view to_string(TransportMode tm) {
  switch (tm) {
    case TransportMode::Foot: return "foot";
    case TransportMode::Car: return "car";
    case TransportMode::Ferry: return "ferry";
    case TransportMode::Train: return "train";
  }
  return "?";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(trim(s));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

NetworkType parse_network_type(std::string_view s) {
  const auto v = lower(s);
  if (v == "3g") return NetworkType::ThreeG;
  if (v == "4g") return NetworkType::FourG;
  if (v == "wifi") return NetworkType::WiFi;
  throw std::invalid_argument("unknown network type '" + std::string(s) + "'");
}

TransportMode parse_transport_mode(std::string_view s) {
  const auto v = lower(s);
  if (v == "foot") return TransportMode::Foot;
  if (v == "car") return TransportMode::Car;
  if (v == "ferry") return TransportMode::Ferry;
  if (v == "train") return TransportMode::Train;
  if (v == "bus") {
    std::cerr << "warning: transport mode 'bus' mapped to 'car'\n";
    return TransportMode::Car;
  }
  throw std::invalid_argument("unknown transport mode '" + std::string(s) + "'");
}

GroupId::GroupId(int index) : index_(index) {
  if (index < 1 || index > 12) {
    throw std::out_of_range("group index must be in [1, 12], got " + std::to_string(index));
  }
}

GroupId group_of(NetworkType nt, TransportMode tm) {
  return GroupId(static_cast<int>(nt) * 4 + static_cast<int>(tm) + 1);
}

NetworkType network_type_of(GroupId g) { return static_cast<NetworkType>((g.index() - 1) / 4); }
TransportMode transport_mode_of(GroupId g) {
  return static_cast<TransportMode>((g.index() - 1) % 4);
}

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

double Trace::duration() const {
  if (samples.size() < 2) return 0.0;
  const auto n = samples.size();
  return samples[n - 1].t - samples[0].t + (samples[n - 1].t - samples[n - 2].t);
}

void validate_trace(const Trace& trace) {
  if (trace.samples.size() < 2) {
    throw std::invalid_argument("trace '" + trace.id + "' needs at least 2 samples");
  }
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    const auto& s = trace.samples[i];
    if (!std::isfinite(s.t) || s.t < 0.0) throw std::invalid_argument("negative or non-finite time");
    if (!std::isfinite(s.bandwidth) || s.bandwidth < 0.0) {
      throw std::invalid_argument("negative or non-finite bandwidth");
    }
    if (s.rtt && (!std::isfinite(*s.rtt) || *s.rtt < 0.0)) throw std::invalid_argument("negative rtt");
    if (s.loss && !(*s.loss >= 0.0 && *s.loss <= 1.0)) {
      throw std::invalid_argument("loss rate outside [0, 1]");
    }
    if (i > 0 && !(s.t > trace.samples[i - 1].t)) {
      throw std::invalid_argument("timestamps not strictly increasing");
    }
  }
}

Trace parse_trace(std::string_view text, TraceLabels labels, std::string id) {
  Trace trace;
  trace.id = std::move(id);
  trace.labels = labels;

  std::size_t line_no = 0;
  bool seen_data = false;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;

    const auto fields = split(line, ',');
    if (fields.size() < 2 || fields.size() > 4) {
      throw ParseError(line_no, "expected 2 to 4 fields, got " + std::to_string(fields.size()));
    }
    const auto t = parse_double(fields[0]);
    if (!t && !seen_data && trace.samples.empty()) {
      // header row
      seen_data = true;
      continue;
    }
    seen_data = true;
    TraceSample s;
    const auto bw = parse_double(fields[1]);
    if (!t || !bw) throw ParseError(line_no, "malformed number");
    s.t = *t;
    s.bandwidth = *bw;
    if (fields.size() >= 3 && !trim(fields[2]).empty()) {
      const auto rtt = parse_double(fields[2]);
      if (!rtt) throw ParseError(line_no, "malformed rtt");
      s.rtt = *rtt;
    }
    if (fields.size() == 4 && !trim(fields[3]).empty()) {
      const auto loss = parse_double(fields[3]);
      if (!loss) throw ParseError(line_no, "malformed loss rate");
      s.loss = *loss;
    }
    if (!std::isfinite(s.t) || s.t < 0.0) throw ParseError(line_no, "negative timestamp");
    if (!std::isfinite(s.bandwidth) || s.bandwidth < 0.0) {
      throw ParseError(line_no, "negative bandwidth");
    }
    if (!trace.samples.empty() && !(s.t > trace.samples.back().t)) {
      throw ParseError(line_no, "timestamps not strictly increasing");
    }
    trace.samples.push_back(s);
  }
  if (trace.samples.empty()) throw ParseError(line_no, "empty trace");
  validate_trace(trace);
  return trace;
}

std::string serialize_trace(const Trace& trace) {
  std::string out = "# t_seconds,bandwidth_kbps,rtt_ms,loss_rate\n";
  for (const auto& s : trace.samples) {
    out += format_double(s.t);
    out += ',';
    out += format_double(s.bandwidth);
    if (s.rtt || s.loss) {
      out += ',';
      if (s.rtt) out += format_double(*s.rtt);
    }
    if (s.loss) {
      out += ',';
      out += format_double(*s.loss);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::size_t sample_index_at(const Trace& trace, double t) {
  if (trace.samples.empty() || !(t >= trace.samples.front().t) || t > trace.samples.back().t) {
    throw std::out_of_range("time " + format_double(t) + " outside trace '" + trace.id + "'");
  }
  const auto it = std::upper_bound(trace.samples.begin(), trace.samples.end(), t,
                                   [](double v, const TraceSample& s) { return v < s.t; });
  return static_cast<std::size_t>(it - trace.samples.begin()) - 1;
}

}  // namespace

double bandwidth_at(const Trace& trace, double t) {
  return trace.samples[sample_index_at(trace, t)].bandwidth;
}

double loss_at(const Trace& trace, double t) {
  return trace.samples[sample_index_at(trace, t)].loss.value_or(0.0);
}

SplitCounts split_counts(std::size_t n) {
  if (n < 5) throw std::invalid_argument("corpus needs at least 5 traces");
  SplitCounts c;
  c.test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(n))));
  const auto remaining = n - c.test;
  c.pretrain = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(0.8 * static_cast<double>(remaining))));
  c.finetune = remaining - c.pretrain;
  return c;
}

CorpusSplit split_corpus(const std::vector<Trace>& corpus, std::uint64_t seed) {
  const auto counts = split_counts(corpus.size());
  std::vector<std::string> ids;
  ids.reserve(corpus.size());
  for (const auto& t : corpus) ids.push_back(t.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw std::invalid_argument("corpus contains duplicate trace ids");
  }

  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(ids[i], ids[j]);
  }

  CorpusSplit split;
  std::size_t i = 0;
  for (; i < counts.test; ++i) split.test.insert(ids[i]);
  for (; i < counts.test + counts.pretrain; ++i) split.pretrain.insert(ids[i]);
  for (; i < ids.size(); ++i) split.finetune.insert(ids[i]);
  return split;
}

Trace synthesize_trace(const SynthParams& p, TraceLabels labels, std::uint64_t seed, std::string id) {
  if (!(p.mean > 0.0) || !(p.duration > 0.0) || !(p.period > 0.0) || p.amplitude < 0.0 ||
      p.noise_std < 0.0) {
    throw std::invalid_argument("invalid synthetic trace parameters");
  }
  const auto n = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(p.duration)));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Trace trace;
  trace.id = std::move(id);
  trace.labels = labels;
  trace.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    const double s = std::sin(2.0 * std::numbers::pi * (t + p.phase) / p.period);
    const double wave = p.shape == WaveShape::Sine ? s : (s >= 0.0 ? 1.0 : -1.0);
    double bw = p.mean + p.amplitude * wave;
    if (p.noise_std > 0.0) bw += p.noise_std * noise(rng);
    trace.samples.push_back({t, std::max(0.0, bw), std::nullopt, std::nullopt});
  }
  return trace;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file) {
  const auto doc = nlohmann::json::parse(read_file(file.string()));
  const auto base = file.parent_path();
  std::vector<ManifestEntry> out;
  for (const auto& rec : doc.at("traces")) {
    ManifestEntry e;
    e.id = rec.at("id").get<std::string>();
    e.path = rec.at("path").get<std::string>();
    if (e.path.is_relative()) e.path = base / e.path;
    e.labels.network_type = parse_network_type(rec.at("network_type").get<std::string>());
    e.labels.transport_mode = parse_transport_mode(rec.at("transport_mode").get<std::string>());
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::filesystem::path& file, const std::vector<ManifestEntry>& entries) {
  nlohmann::json traces = nlohmann::json::array();
  for (const auto& e : entries) {
    traces.push_back({{"id", e.id},
                      {"path", e.path.generic_string()},
                      {"network_type", to_string(e.labels.network_type)},
                      {"transport_mode", to_string(e.labels.transport_mode)}});
  }
  write_file(file.string(), nlohmann::json{{"traces", traces}}.dump(2) + "\n");
}

std::vector<Trace> load_corpus(const std::filesystem::path& manifest) {
  std::vector<Trace> corpus;
  for (const auto& e : read_manifest(manifest)) {
    try {
      corpus.push_back(parse_trace(read_file(e.path.string()), e.labels, e.id));
    } catch (const ParseError& err) {
      throw std::runtime_error(e.path.string() + ": " + err.what());
    }
  }
  return corpus;
}

}  // namespace abrlab
