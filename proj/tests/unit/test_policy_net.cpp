#include <cmath>
#include <random>

#include "abrlab/policy_net.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace abrlab;

namespace {

double entropy_of(const std::vector<double>& p) {
  double h = 0.0;
  for (double q : p) h -= q * std::log(q);
  return h;
}

ModelParams tiny_net(std::uint64_t seed) {
  return init_params({{3, 5, Activation::ReLU}}, 4, seed);
}

}  // namespace

TEST_SUITE("policy_net") {
  TEST_CASE("init layout and determinism") {
    const auto p = init_params(default_arch(19), 6, 7);
    REQUIRE(p.layer_count() == 4);
    CHECK(p.specs[0] == LayerSpec{19, 64, Activation::ReLU});
    CHECK(p.specs[1] == LayerSpec{64, 32, Activation::ReLU});
    CHECK(p.specs[2] == LayerSpec{32, 6, Activation::Identity});
    CHECK(p.specs[3] == LayerSpec{32, 1, Activation::Identity});
    CHECK(p.parameter_count() == 19 * 64 + 64 + 64 * 32 + 32 + 32 * 6 + 6 + 32 + 1);
    CHECK(p.input_dim() == 19);
    CHECK(p.action_count() == 6);
    CHECK(init_params(default_arch(19), 6, 7) == p);
    CHECK_FALSE(init_params(default_arch(19), 6, 8) == p);

    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
      const double limit = std::sqrt(6.0 / double(p.specs[l].in_dim + p.specs[l].out_dim));
      for (double w : p.blocks[l].weight) {
        CHECK(std::abs(w) <= limit);
        sum += w;
        ++n;
      }
      for (double b : p.blocks[l].bias) CHECK(b == 0.0);
    }
    CHECK(std::abs(sum / double(n)) < 0.01);
  }

  TEST_CASE("init rejects bad architectures") {
    CHECK_THROWS_AS(init_params({}, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(init_params({{3, 4, Activation::ReLU}}, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(init_params({{3, 4, Activation::ReLU}, {5, 2, Activation::ReLU}}, 3, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(init_params({{3, 0, Activation::ReLU}}, 3, 1), std::invalid_argument);
  }

  TEST_CASE("forward") {
    const auto p = tiny_net(3);
    const std::vector<double> s{0.2, 0.9, 0.4};
    const auto out = forward(p, s);
    double total = 0.0;
    for (double q : out.probs) {
      CHECK(q > 0.0);
      total += q;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    const auto ref = oracle::evaluate(p, s);
    const auto probs = oracle::softmax(ref.logits);
    for (std::size_t i = 0; i < probs.size(); ++i) CHECK(out.probs[i] == doctest::Approx(probs[i]).epsilon(1e-12));
    CHECK(out.value == doctest::Approx(ref.value).epsilon(1e-12));

    const auto z = forward(zero_like(p), s);
    for (double q : z.probs) CHECK(q == doctest::Approx(0.25));
    CHECK(z.value == 0.0);

    CHECK_THROWS_AS(forward(p, std::vector<double>{1.0}), std::invalid_argument);
    CHECK_THROWS_AS(forward(p, std::vector<double>{1.0, NAN, 0.0}), std::invalid_argument);
  }

  TEST_CASE("forward matches the reference on random nets") {
    std::mt19937_64 rng(44);
    for (int k = 0; k < 50; ++k) {
      const auto c = oracle::random_case(rng, 0.0);
      for (const auto& st : c.traj.steps) {
        const auto out = forward(c.params, st.state);
        const auto ref = oracle::softmax(oracle::evaluate(c.params, st.state).logits);
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out.probs[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("sample_action") {
    std::mt19937_64 rng(1);
    const std::vector<double> onehot{0, 0, 1, 0};
    for (int i = 0; i < 1000; ++i) CHECK(sample_action(onehot, rng) == 2);

    const std::vector<double> uniform(4, 0.25);
    std::vector<int> counts(4, 0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[sample_action(uniform, rng)];
    for (int c : counts) CHECK(double(c) / draws == doctest::Approx(0.25).epsilon(0.04));  // +-0.01

    CHECK(greedy_action(std::vector<double>{0.1, 0.5, 0.4}) == 1);
    CHECK(greedy_action(std::vector<double>{0.5, 0.5}) == 0);

    std::mt19937_64 a(9), b(9);
    for (int i = 0; i < 100; ++i) CHECK(unit_uniform(a) == unit_uniform(b));
    for (int i = 0; i < 10000; ++i) {
      const double u = unit_uniform(a);
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
    }
  }

  TEST_CASE("discounted returns") {
    Trajectory one;
    one.steps.push_back({{}, 0, 2.0});
    one.bootstrap_value = 3.0;
    CHECK(discounted_returns(one, 1.0) == std::vector<double>{5.0});

    Trajectory t;
    t.steps = {{{}, 0, 1.0}, {{}, 0, 0.0}, {{}, 0, 4.0}};
    t.bootstrap_value = 8.0;
    const auto r = discounted_returns(t, 0.5);
    CHECK(r[2] == 8.0);
    CHECK(r[1] == 4.0);
    CHECK(r[0] == 3.0);
  }

  TEST_CASE("analytic gradients agree with central differences") {
    std::mt19937_64 rng(2024);
    TrainHyper hyper;
    hyper.discount = 0.9;
    hyper.entropy_coef = 0.05;
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const auto c = oracle::random_case(rng);
      const auto an = a3c_gradients(c.params, c.traj, hyper);
      const auto fd = oracle::central_difference(c.params, c.traj, hyper.discount, hyper.value_coef,
                                                 hyper.entropy_coef, 1e-5);
      worst = std::max(worst, oracle::relative_error(an.grads.blocks, fd));
      const auto adv = oracle::advantages(c.params, c.traj, hyper.discount);
      CHECK(an.loss == doctest::Approx(oracle::surrogate_loss(c.params, c.traj, hyper.discount,
                                                              hyper.value_coef, hyper.entropy_coef, adv))
                           .epsilon(1e-10));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("zero advantage and zero entropy give zero gradients") {
    auto p = tiny_net(5);
    auto& vh = p.blocks[p.value_head()];
    std::fill(vh.weight.begin(), vh.weight.end(), 0.0);
    Trajectory t;
    t.steps.push_back({{0.3, 0.1, 0.7}, 1, 0.0});
    TrainHyper h;
    h.entropy_coef = 0.0;
    const auto g = a3c_gradients(p, t, h);
    CHECK(global_norm(g.grads) == 0.0);
    CHECK(g.loss == 0.0);
  }

  TEST_CASE("entropy bonus alone raises policy entropy") {
    auto p = tiny_net(6);
    auto& vh = p.blocks[p.value_head()];
    std::fill(vh.weight.begin(), vh.weight.end(), 0.0);
    auto& ph = p.blocks[p.policy_head()];
    for (auto& w : ph.weight) w *= 4.0;  // start well away from uniform
    const std::vector<double> s{0.3, 0.8, 0.5};
    Trajectory t;
    t.steps.push_back({s, 2, 0.0});
    const auto mask = FreezeMask::all_trainable(p.layer_count());
    double prev_gain = 0.0;
    for (double beta : {0.01, 0.1, 1.0}) {
      TrainHyper h;
      h.entropy_coef = beta;
      const auto next = apply_update(p, a3c_gradients(p, t, h).grads, 1e-3, mask);
      const double gain = entropy_of(forward(next, s).probs) - entropy_of(forward(p, s).probs);
      CHECK(gain > 0.0);
      CHECK(gain > prev_gain);
      prev_gain = gain;
    }
  }

  TEST_CASE("gradient input validation") {
    const auto p = tiny_net(1);
    TrainHyper h;
    CHECK_THROWS_AS(a3c_gradients(p, {}, h), std::invalid_argument);
    Trajectory t;
    t.steps.push_back({{0, 0, 0}, 9, 0.0});
    CHECK_THROWS_AS(a3c_gradients(p, t, h), std::out_of_range);
    t.steps[0].action = 0;
    t.steps[0].reward = INFINITY;
    CHECK_THROWS_AS(a3c_gradients(p, t, h), std::invalid_argument);
    t.steps[0].reward = 1e300;
    CHECK_THROWS_AS(a3c_gradients(p, t, h), DivergenceError);
  }

  TEST_CASE("clip_by_global_norm") {
    Gradients g{{{{3.0}, {4.0}}}};
    CHECK(global_norm(g) == 5.0);
    const auto c = clip_by_global_norm(g, 1.0);
    CHECK(c.blocks[0].weight[0] == doctest::Approx(0.6));
    CHECK(c.blocks[0].bias[0] == doctest::Approx(0.8));
    CHECK(clip_by_global_norm(g, 10.0) == g);
    CHECK(clip_by_global_norm(g, 0.0) == g);
  }

  TEST_CASE("apply_update") {
    ModelParams p;
    p.specs = {{1, 1, Activation::ReLU}, {1, 2, Activation::Identity}, {1, 1, Activation::Identity}};
    p.blocks = {{{1.0}, {0.0}}, {{1.0, 1.0}, {0.0, 0.0}}, {{1.0}, {0.0}}};
    Gradients g{{{{0.25}, {0.0}}, {{0.25, 0.0}, {0.0, 0.0}}, {{}, {}}}};
    auto mask = FreezeMask::all_trainable(3);
    auto next = apply_update(p, g, 0.8, mask);
    CHECK(next.blocks[0].weight[0] == doctest::Approx(0.8));
    CHECK(next.blocks[1].weight[0] == doctest::Approx(0.8));
    CHECK(next.blocks[2] == p.blocks[2]);  // empty block counts as zero
    mask.trainable[0] = false;
    next = apply_update(p, g, 0.8, mask);
    CHECK(next.blocks[0] == p.blocks[0]);
    CHECK_THROWS_AS(apply_update(p, g, 0.8, FreezeMask::all_trainable(2)), std::invalid_argument);
    g.blocks[1].weight.pop_back();
    CHECK_THROWS_AS(apply_update(p, g, 0.8, FreezeMask::all_trainable(3)), std::invalid_argument);
  }

  TEST_CASE("frozen layers stay bit-identical over many updates") {
    std::mt19937_64 rng(17);
    auto c = oracle::random_case(rng, 0.0);
    FreezeMask mask = FreezeMask::all_trainable(c.params.layer_count());
    mask.trainable[0] = false;
    const auto before = layer_digest(c.params.blocks[0]);
    TrainHyper h;
    for (int i = 0; i < 100; ++i) {
      c.params = apply_update(c.params, a3c_gradients(c.params, c.traj, h).grads, 0.01, mask);
    }
    CHECK(layer_digest(c.params.blocks[0]) == before);
  }

  TEST_CASE("update determinism") {
    std::mt19937_64 r1(3), r2(3);
    const auto a = oracle::random_case(r1);
    const auto b = oracle::random_case(r2);
    TrainHyper h;
    const auto ga = a3c_gradients(a.params, a.traj, h);
    const auto gb = a3c_gradients(b.params, b.traj, h);
    CHECK(ga.grads == gb.grads);
    CHECK(ga.loss == gb.loss);
  }

  TEST_CASE("checkpoint round trip") {
    auto p = init_params(default_arch(19), 6, 99);
    p.blocks[1].bias[3] = 1.0 / 3.0;
    p.blocks[2].weight[0] = -0.0;
    p.blocks[0].weight[5] = 5e-324;
    const auto text = serialize_checkpoint(p);
    CHECK(text.rfind("abrlab-checkpoint 1\nlayers 4\nlayer 19 64 relu\n", 0) == 0);
    const auto back = parse_checkpoint(text);
    CHECK(params_digest(back) == params_digest(p));
    CHECK(back.specs == p.specs);
    CHECK(hex_digest(0xabcULL) == "0000000000000abc");

    CHECK_THROWS(parse_checkpoint("nope 1\n"));
    CHECK_THROWS(parse_checkpoint("abrlab-checkpoint 2\nlayers 3\n"));
    CHECK_THROWS(parse_checkpoint(text.substr(0, text.size() / 2)));
  }

  TEST_CASE("check_finite") {
    auto p = tiny_net(2);
    CHECK_NOTHROW(check_finite(p));
    p.blocks[1].weight[0] = NAN;
    CHECK_THROWS_AS(check_finite(p), DivergenceError);
  }
}
