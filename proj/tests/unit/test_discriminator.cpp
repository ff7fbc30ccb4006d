#include <cmath>
#include <random>

#include "abrlab/discriminator.hpp"
#include "doctest.h"

using namespace abrlab;

namespace {

ScheduledCondition at(double t, NetworkType nt, TransportMode tm) {
  return {t, {"c0", nt, tm, t}};
}

}  // namespace

TEST_SUITE("discriminator") {
  TEST_CASE("classify") {
    CHECK(classify({"a", NetworkType::ThreeG, TransportMode::Train, 0}).index() == 4);
    CHECK(classify({"a", NetworkType::WiFi, TransportMode::Foot, 0}).index() == 9);
  }

  TEST_CASE("constant condition raises nothing") {
    const std::vector<ScheduledCondition> s{at(0, NetworkType::FourG, TransportMode::Car),
                                            at(100, NetworkType::FourG, TransportMode::Car)};
    CHECK(poll(s, 5.0).empty());
    CHECK(poll(s, 5.0, 1000.0).empty());
  }

  TEST_CASE("single switch is seen at the first poll after it") {
    const std::vector<ScheduledCondition> s{at(0, NetworkType::FourG, TransportMode::Car),
                                            at(10, NetworkType::WiFi, TransportMode::Car)};
    const auto c = poll(s, 5.0, 30.0);
    REQUIRE(c.size() == 1);
    CHECK(c[0] == GroupChange{"c0", GroupId(6), GroupId(10), 10.0});

    const auto late = poll({at(0, NetworkType::FourG, TransportMode::Car), at(11, NetworkType::WiFi, TransportMode::Car)},
                           5.0, 30.0);
    REQUIRE(late.size() == 1);
    CHECK(late[0].at == 15.0);
  }

  TEST_CASE("switches between polls collapse") {
    // Out and back inside one period: invisible. Two moves inside one period:
    // a single change to the final group.
    const std::vector<ScheduledCondition> s{at(0, NetworkType::ThreeG, TransportMode::Foot),
                                            at(1, NetworkType::FourG, TransportMode::Foot),
                                            at(2, NetworkType::ThreeG, TransportMode::Foot),
                                            at(31, NetworkType::FourG, TransportMode::Foot),
                                            at(32, NetworkType::WiFi, TransportMode::Foot)};
    const auto c = poll(s, 30.0, 60.0);
    REQUIRE(c.size() == 1);
    CHECK(c[0].from == GroupId(1));
    CHECK(c[0].to == GroupId(9));
    CHECK(c[0].at == 60.0);
  }

  TEST_CASE("samples before the first entry are skipped") {
    const std::vector<ScheduledCondition> s{at(7, NetworkType::FourG, TransportMode::Car),
                                            at(20, NetworkType::FourG, TransportMode::Train)};
    const auto c = poll(s, 5.0);
    REQUIRE(c.size() == 1);
    CHECK(c[0].from == GroupId(6));
    CHECK(c[0].to == GroupId(8));
    CHECK(c[0].at == 20.0);
  }

  TEST_CASE("random schedules: at most one event per sample, each a real move") {
    std::mt19937_64 rng(4);
    for (int k = 0; k < 200; ++k) {
      std::vector<ScheduledCondition> s;
      double t = 0.0;
      const int n = 1 + int(rng() % 30);
      for (int i = 0; i < n; ++i) {
        s.push_back(at(t, kAllNetworkTypes[rng() % 3], kAllTransportModes[rng() % 4]));
        t += double(rng() % 20);
      }
      const double period = 1.0 + double(rng() % 15);
      const auto changes = poll(s, period);
      const auto samples = std::size_t(s.back().time / period) + 1;
      CHECK(changes.size() <= samples);
      double last = -1.0;
      for (std::size_t i = 0; i < changes.size(); ++i) {
        CHECK(changes[i].from != changes[i].to);
        CHECK(changes[i].at > last);
        last = changes[i].at;
        if (i > 0) CHECK(changes[i].from == changes[i - 1].to);
        CHECK(std::fmod(changes[i].at, period) == 0.0);
      }
    }
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(poll({}, 5.0), std::invalid_argument);
    const std::vector<ScheduledCondition> s{at(0, NetworkType::FourG, TransportMode::Car)};
    CHECK_THROWS_AS(poll(s, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(poll(s, -1.0), std::invalid_argument);
    const std::vector<ScheduledCondition> unsorted{at(5, NetworkType::FourG, TransportMode::Car),
                                                   at(1, NetworkType::FourG, TransportMode::Car)};
    CHECK_THROWS_AS(poll(unsorted, 1.0), std::invalid_argument);
  }
}
