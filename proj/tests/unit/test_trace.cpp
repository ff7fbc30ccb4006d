#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "abrlab/text.hpp"
#include "abrlab/trace.hpp"
#include "doctest.h"

using namespace abrlab;

namespace {

Trace random_trace(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> gap(0.05, 3.0), bw(0.0, 20000.0), rtt(0.0, 300.0),
      loss(0.0, 1.0);
  Trace t;
  t.id = "rand";
  double time = std::uniform_real_distribution<double>(0.0, 5.0)(rng);
  for (std::size_t i = 0; i < n; ++i) {
    TraceSample s{time, bw(rng), std::nullopt, std::nullopt};
    if (rng() % 2) s.rtt = rtt(rng);
    if (rng() % 3 == 0) s.loss = loss(rng);
    t.samples.push_back(s);
    time += gap(rng);
  }
  return t;
}

// Linear scan: the last sample whose timestamp does not exceed t.
double scan_bandwidth(const Trace& trace, double t) {
  double v = -1.0;
  for (const auto& s : trace.samples) {
    if (s.t <= t) v = s.bandwidth;
  }
  return v;
}

std::vector<Trace> named_corpus(std::size_t n) {
  std::vector<Trace> c;
  for (std::size_t i = 0; i < n; ++i) {
    c.push_back({"tr-" + std::to_string(i), {{0, 1000, {}, {}}, {1, 1000, {}, {}}}, {}});
  }
  return c;
}

}  // namespace

TEST_SUITE("trace") {
  TEST_CASE("group table") {
    CHECK(group_of(NetworkType::ThreeG, TransportMode::Foot).index() == 1);
    CHECK(group_of(NetworkType::ThreeG, TransportMode::Car).index() == 2);
    CHECK(group_of(NetworkType::ThreeG, TransportMode::Ferry).index() == 3);
    CHECK(group_of(NetworkType::ThreeG, TransportMode::Train).index() == 4);
    CHECK(group_of(NetworkType::FourG, TransportMode::Foot).index() == 5);
    CHECK(group_of(NetworkType::FourG, TransportMode::Ferry).index() == 7);
    CHECK(group_of(NetworkType::WiFi, TransportMode::Foot).index() == 9);
    CHECK(group_of(NetworkType::WiFi, TransportMode::Train).index() == 12);
    CHECK(group_of(NetworkType::FourG, TransportMode::Ferry).label() == "G-7");
  }

  TEST_CASE("group_of is a bijection onto 1..12 with working inverses") {
    std::set<int> seen;
    for (auto nt : kAllNetworkTypes) {
      for (auto tm : kAllTransportModes) {
        const auto g = group_of(nt, tm);
        CHECK(g.index() >= 1);
        CHECK(g.index() <= 12);
        seen.insert(g.index());
        CHECK(network_type_of(g) == nt);
        CHECK(transport_mode_of(g) == tm);
      }
    }
    CHECK(seen.size() == 12);
    CHECK_THROWS_AS(GroupId(0), std::out_of_range);
    CHECK_THROWS_AS(GroupId(13), std::out_of_range);
  }

  TEST_CASE("label parsing") {
    CHECK(parse_network_type("3g") == NetworkType::ThreeG);
    CHECK(parse_network_type("WiFi") == NetworkType::WiFi);
    CHECK(parse_transport_mode("ferry") == TransportMode::Ferry);
    CHECK(parse_transport_mode("bus") == TransportMode::Car);
    CHECK_THROWS_AS(parse_network_type("5g"), std::invalid_argument);
    CHECK_THROWS_AS(parse_transport_mode("bicycle"), std::invalid_argument);
    for (auto nt : kAllNetworkTypes) CHECK(parse_network_type(to_string(nt)) == nt);
    for (auto tm : kAllTransportModes) CHECK(parse_transport_mode(to_string(tm)) == tm);
  }

  TEST_CASE("parse_trace basic rows") {
    const auto t = parse_trace("0.0,1500\n1.0,800\n", {NetworkType::FourG, TransportMode::Car}, "x");
    REQUIRE(t.samples.size() == 2);
    CHECK(t.samples[0].bandwidth == 1500.0);
    CHECK(t.samples[1].bandwidth == 800.0);
    CHECK(t.group().index() == 6);
    CHECK(t.duration() == 2.0);
  }

  TEST_CASE("parse_trace header, comments and optional columns") {
    const auto t = parse_trace(
        "t_seconds,bandwidth_kbps,rtt_ms,loss_rate\n# comment\n\n0,100,40,0.01\n1,200,,0.5\n2.5,300,20\n",
        {});
    REQUIRE(t.samples.size() == 3);
    CHECK(*t.samples[0].rtt == 40.0);
    CHECK(*t.samples[0].loss == 0.01);
    CHECK_FALSE(t.samples[1].rtt.has_value());
    CHECK(*t.samples[1].loss == 0.5);
    CHECK(*t.samples[2].rtt == 20.0);
    CHECK_FALSE(t.samples[2].loss.has_value());
  }

  TEST_CASE("parse_trace rejects bad input") {
    CHECK_THROWS_AS(parse_trace("0.0,1500\n0.5,-3\n", {}), ParseError);
    CHECK_THROWS_AS(parse_trace("", {}), ParseError);
    CHECK_THROWS_AS(parse_trace("# nothing\n", {}), ParseError);
    CHECK_THROWS_AS(parse_trace("0,100\n0,200\n", {}), ParseError);
    CHECK_THROWS_AS(parse_trace("1,100\n0.5,200\n", {}), ParseError);
    CHECK_THROWS_AS(parse_trace("0,100\n1,abc\n", {}), ParseError);
    CHECK_THROWS_AS(parse_trace("0,100,1,0.1,9\n1,100\n", {}), ParseError);
    CHECK_THROWS_AS(parse_trace("0,100\n", {}), std::invalid_argument);  // one sample
    CHECK_THROWS_AS(parse_trace("0,100,,1.5\n1,100\n", {}), std::invalid_argument);
    try {
      parse_trace("0,100\n1,200\nbad\n", {});
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }

  TEST_CASE("serialize/parse round trip") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
      auto t = random_trace(rng, 2 + rng() % 40);
      t.labels = {NetworkType::WiFi, TransportMode::Ferry};
      const auto back = parse_trace(serialize_trace(t), t.labels, t.id);
      CHECK(back == t);
    }
  }

  TEST_CASE("300-row synthetic trace lasts 300 s and survives a file round trip") {
    SynthParams p;
    p.mean = 2000;
    p.amplitude = 700;
    p.noise_std = 150;
    p.duration = 300;
    const auto t = synthesize_trace(p, {}, 42, "syn");
    CHECK(t.samples.size() == 300);
    CHECK(t.duration() == 300.0);
    CHECK(parse_trace(serialize_trace(t), t.labels, t.id) == t);
  }

  TEST_CASE("bandwidth_at piecewise constant") {
    const Trace t{"a", {{0, 1500, {}, {}}, {1, 800, {}, {}}}, {}};
    CHECK(bandwidth_at(t, 0.0) == 1500.0);
    CHECK(bandwidth_at(t, 0.5) == 1500.0);
    CHECK(bandwidth_at(t, 1.0) == 800.0);
    CHECK_THROWS_AS(bandwidth_at(t, -0.1), std::out_of_range);
    CHECK_THROWS_AS(bandwidth_at(t, 1.5), std::out_of_range);
    CHECK(loss_at(t, 0.5) == 0.0);
  }

  TEST_CASE("bandwidth_at matches a linear scan") {
    std::mt19937_64 rng(11);
    for (int k = 0; k < 20; ++k) {
      const auto t = random_trace(rng, 2 + rng() % 200);
      std::uniform_real_distribution<double> q(t.samples.front().t, t.last_time());
      for (int i = 0; i < 1000; ++i) {
        const double x = q(rng);
        CHECK(bandwidth_at(t, x) == scan_bandwidth(t, x));
      }
      for (const auto& s : t.samples) CHECK(bandwidth_at(t, s.t) == s.bandwidth);
    }
  }

  TEST_CASE("split counts") {
    auto c = split_counts(100);
    CHECK(c.test == 20);
    CHECK(c.pretrain == 64);
    CHECK(c.finetune == 16);
    c = split_counts(5);
    CHECK(c.test == 1);
    CHECK(c.pretrain == 3);
    CHECK(c.finetune == 1);
    CHECK_THROWS_AS(split_counts(4), std::invalid_argument);
  }

  TEST_CASE("split partitions every corpus size") {
    for (std::size_t n = 5; n <= 120; ++n) {
      const auto corpus = named_corpus(n);
      const auto s = split_corpus(corpus, n * 31);
      const auto counts = split_counts(n);
      CHECK(s.test.size() == counts.test);
      CHECK(s.pretrain.size() == counts.pretrain);
      CHECK(s.finetune.size() == counts.finetune);
      std::set<std::string> all;
      for (const auto* part : {&s.pretrain, &s.finetune, &s.test}) all.insert(part->begin(), part->end());
      CHECK(all.size() == n);  // union covers the corpus and the parts are disjoint
      CHECK(s.pretrain.size() + s.finetune.size() + s.test.size() == n);
    }
  }

  TEST_CASE("split is deterministic and ignores corpus order") {
    auto corpus = named_corpus(37);
    const auto a = split_corpus(corpus, 9);
    std::reverse(corpus.begin(), corpus.end());
    CHECK(split_corpus(corpus, 9) == a);
    CHECK_FALSE(split_corpus(corpus, 10) == a);
    CHECK_THROWS_AS(split_corpus(named_corpus(4), 1), std::invalid_argument);
    corpus.push_back(corpus.front());
    CHECK_THROWS_AS(split_corpus(corpus, 1), std::invalid_argument);
  }

  TEST_CASE("synthesize_trace shapes") {
    SynthParams p;
    p.mean = 1000;
    p.duration = 10;
    auto t = synthesize_trace(p, {}, 1);
    REQUIRE(t.samples.size() == 10);
    for (const auto& s : t.samples) CHECK(s.bandwidth == 1000.0);

    p.amplitude = 500;
    p.duration = 200;
    p.period = 17;
    t = synthesize_trace(p, {}, 1);
    for (const auto& s : t.samples) {
      CHECK(s.bandwidth >= 500.0);
      CHECK(s.bandwidth <= 1500.0);
    }
    p.shape = WaveShape::Square;
    t = synthesize_trace(p, {}, 1);
    for (const auto& s : t.samples) CHECK((s.bandwidth == 500.0 || s.bandwidth == 1500.0));

    p.amplitude = 2000;  // clipped at zero
    t = synthesize_trace(p, {}, 1);
    CHECK(std::any_of(t.samples.begin(), t.samples.end(), [](auto& s) { return s.bandwidth == 0.0; }));

    p.mean = 0;
    CHECK_THROWS_AS(synthesize_trace(p, {}, 1), std::invalid_argument);
  }

  TEST_CASE("noisy synthetic family averages to its mean") {
    SynthParams p;
    p.mean = 3000;
    p.noise_std = 600;
    p.duration = 1000;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto t = synthesize_trace(p, {}, seed);
      double sum = 0.0;
      for (const auto& s : t.samples) sum += s.bandwidth;
      CHECK(std::abs(sum / 1000.0 - 3000.0) < 0.05 * 3000.0);
      CHECK(synthesize_trace(p, {}, seed) == t);
    }
  }

  TEST_CASE("manifest round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "abrlab_manifest_test";
    std::filesystem::create_directories(dir);
    SynthParams p;
    p.duration = 20;
    p.noise_std = 50;
    const auto a = synthesize_trace(p, {NetworkType::ThreeG, TransportMode::Train}, 1, "a");
    const auto b = synthesize_trace(p, {NetworkType::WiFi, TransportMode::Foot}, 2, "b");
    write_file((dir / "a.csv").string(), serialize_trace(a));
    write_file((dir / "b.csv").string(), serialize_trace(b));
    write_manifest(dir / "manifest.json", {{"a", "a.csv", a.labels}, {"b", "b.csv", b.labels}});
    const auto corpus = load_corpus(dir / "manifest.json");
    REQUIRE(corpus.size() == 2);
    CHECK(corpus[0] == a);
    CHECK(corpus[1] == b);
    std::filesystem::remove_all(dir);
  }
}
