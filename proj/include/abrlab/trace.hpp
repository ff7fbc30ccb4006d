#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace abrlab {

enum class NetworkType { ThreeG, FourG, WiFi };
enum class TransportMode { Foot, Car, Ferry, Train };

inline constexpr NetworkType kAllNetworkTypes[] = {NetworkType::ThreeG, NetworkType::FourG,
                                                   NetworkType::WiFi};
inline constexpr TransportMode kAllTransportModes[] = {TransportMode::Foot, TransportMode::Car,
                                                       TransportMode::Ferry, TransportMode::Train};

std::string_view to_string(NetworkType nt);
std::string_view to_string(TransportMode tm);
NetworkType parse_network_type(std::string_view s);
// Accepts "bus" as an alias of Car (with a warning on stderr).
TransportMode parse_transport_mode(std::string_view s);

/// One of the twelve (network type, transport mode) cells, numbered 1..12.
class GroupId {
 public:
  explicit GroupId(int index);
  int index() const { return index_; }
  std::string label() const { return "G-" + std::to_string(index_); }
  auto operator<=>(const GroupId&) const = default;

 private:
  int index_;
};

/// Column-major position in the 3x4 condition table: network type selects the
/// column, transport mode the row.
GroupId group_of(NetworkType nt, TransportMode tm);
NetworkType network_type_of(GroupId g);
TransportMode transport_mode_of(GroupId g);

struct TraceSample {
  double t = 0.0;          // seconds
  double bandwidth = 0.0;  // kbps
  std::optional<double> rtt;
  std::optional<double> loss;

  bool operator==(const TraceSample&) const = default;
};

struct TraceLabels {
  NetworkType network_type = NetworkType::FourG;
  TransportMode transport_mode = TransportMode::Car;

  bool operator==(const TraceLabels&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Trace {
  std::string id;
  std::vector<TraceSample> samples;
  TraceLabels labels;

  /// Last sample time plus the final sampling interval: a 300-row 1 Hz trace
  /// lasts 300 s.
  double duration() const;
  double last_time() const { return samples.back().t; }
  GroupId group() const { return group_of(labels.network_type, labels.transport_mode); }

  bool operator==(const Trace&) const = default;
};

/// Checks ordering and value ranges; throws std::invalid_argument.
void validate_trace(const Trace& trace);

Trace parse_trace(std::string_view text, TraceLabels labels, std::string id = {});
std::string serialize_trace(const Trace& trace);

/// Piecewise-constant replay: the last sample with timestamp <= t.
double bandwidth_at(const Trace& trace, double t);
/// Loss fraction in effect at t (0 when the trace carries none).
double loss_at(const Trace& trace, double t);

struct CorpusSplit {
  std::set<std::string> pretrain;
  std::set<std::string> finetune;
  std::set<std::string> test;

  bool operator==(const CorpusSplit&) const = default;
};

struct SplitCounts {
  std::size_t test = 0;
  std::size_t pretrain = 0;
  std::size_t finetune = 0;
};

/// test = round(0.2 N) (min 1), pretrain = round(0.8 * remaining) (min 1).
SplitCounts split_counts(std::size_t corpus_size);
CorpusSplit split_corpus(const std::vector<Trace>& corpus, std::uint64_t seed);

enum class WaveShape { Sine, Square };

struct SynthParams {
  double mean = 1000.0;      // kbps
  double amplitude = 0.0;    // kbps
  double period = 60.0;      // s
  double noise_std = 0.0;    // kbps
  double duration = 300.0;   // s
  WaveShape shape = WaveShape::Sine;
  double phase = 0.0;        // s
};

/// 1 Hz samples of max(0, mean + amplitude * wave(t) + N(0, noise_std)).
Trace synthesize_trace(const SynthParams& params, TraceLabels labels, std::uint64_t seed,
                       std::string id = {});

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;
  TraceLabels labels;
};

/// JSON manifest: {"traces": [{"id", "path", "network_type", "transport_mode"}]}.
/// Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file);
void write_manifest(const std::filesystem::path& file, const std::vector<ManifestEntry>& entries);
std::vector<Trace> load_corpus(const std::filesystem::path& manifest);

}  // namespace abrlab
