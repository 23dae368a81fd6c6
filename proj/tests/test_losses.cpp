#include <doctest.h>

#include <cmath>
#include <limits>

#include "mdpo/losses.hpp"
#include "mdpo/verify.hpp"
#include "oracles.hpp"

using namespace mdpo;

namespace {

struct Case {
  PolicyParams theta;
  PolicyParams ref;
  Prompt x;
  std::vector<Response> ys;
  double beta;
};

Case random_case(oracle::Gen& gen, std::size_t n) {
  const std::size_t v = gen.index(3, 6);
  auto theta = gen.policy(v);
  auto ref = gen.policy(v);
  Prompt x("x", gen.tokens(v, 1, 4));
  auto ys = gen.responses(v, n);
  return {std::move(theta), std::move(ref), std::move(x), std::move(ys), gen.uniform(0.05, 2.0)};
}

}  // namespace

TEST_CASE("beta must be positive and finite") {
  CHECK(Beta().value() == 0.1);
  CHECK_THROWS_AS(Beta(0.0), std::invalid_argument);
  CHECK_THROWS_AS(Beta(-1.0), std::invalid_argument);
  CHECK_THROWS_AS(Beta{std::numeric_limits<double>::infinity()}, std::invalid_argument);
}

TEST_CASE("dpo loss matches the closed form") {
  oracle::Gen gen(20);
  for (int t = 0; t < 100; ++t) {
    const auto c = random_case(gen, 2);
    const auto lv = dpo_loss(c.theta, c.ref, Beta(c.beta), PreferencePair(c.x, c.ys[0], c.ys[1]));
    CHECK(lv.loss == doctest::Approx(oracle::dpo_loss(c.theta, c.ref, c.beta, c.x, c.ys[0], c.ys[1])).epsilon(1e-10));
    CHECK(lv.loss == doctest::Approx(oracle::neg_log_sigmoid(lv.inner_margin)).epsilon(1e-12));
    CHECK(lv.loss > 0.0);
  }
}

TEST_CASE("mdpo loss matches the all-pairs definition") {
  oracle::Gen gen(21);
  for (std::size_t n = 2; n <= 8; ++n) {
    for (int t = 0; t < 30; ++t) {
      const auto c = random_case(gen, n);
      const auto lv = mdpo_loss(c.theta, c.ref, Beta(c.beta), oracle::ranked(c.x, c.ys));
      CHECK(lv.loss == doctest::Approx(oracle::mdpo_loss(c.theta, c.ref, c.beta, c.x, c.ys)).epsilon(1e-10));
      CHECK(std::abs(lv.loss - oracle::neg_log_sigmoid(lv.inner_margin)) <= 1e-12);
    }
  }
}

TEST_CASE("theta equal to reference gives ln 2") {
  oracle::Gen gen(22);
  for (std::size_t n = 2; n <= 6; ++n) {
    const auto c = random_case(gen, n);
    const auto lv = mdpo_loss(c.theta, c.theta, Beta(c.beta), oracle::ranked(c.x, c.ys));
    CHECK(lv.inner_margin == 0.0);
    CHECK(lv.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
}

TEST_CASE("mdpo with two responses is dpo") {
  oracle::Gen gen(23);
  for (int t = 0; t < 100; ++t) {
    const auto c = random_case(gen, 2);
    const auto d = dpo_loss(c.theta, c.ref, Beta(c.beta), PreferencePair(c.x, c.ys[0], c.ys[1]));
    const auto m = mdpo_loss(c.theta, c.ref, Beta(c.beta), oracle::ranked(c.x, c.ys));
    CHECK(std::abs(d.loss - m.loss) <= 1e-12);
    CHECK(std::abs(d.inner_margin - m.inner_margin) <= 1e-12);
    for (std::size_t k = 0; k < c.theta.table().size(); ++k) {
      CHECK(std::abs(d.grad.at(k) - m.grad.at(k)) <= 1e-12);
    }
  }
}

TEST_CASE("loss gradients match central differences") {
  oracle::Gen gen(24);
  for (std::size_t n = 2; n <= 5; ++n) {
    for (int t = 0; t < 25; ++t) {
      CAPTURE(n);
      CAPTURE(t);
      const auto c = random_case(gen, n);
      const auto m = mdpo_loss(c.theta, c.ref, Beta(c.beta), oracle::ranked(c.x, c.ys));
      const auto fd = oracle::fd_gradient(
          c.theta, [&](const PolicyParams& p) { return oracle::mdpo_loss(p, c.ref, c.beta, c.x, c.ys); });
      double worst = 0.0;
      for (std::size_t k = 0; k < fd.size(); ++k) {
        worst = std::max(worst, oracle::rel_err(m.grad.at(k), fd[k]));
      }
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("saturated margins stay finite") {
  const auto big = negative_log_sigmoid(1000.0);
  CHECK(big.loss == 0.0);
  CHECK(big.dloss_dmargin == doctest::Approx(0.0));
  const auto small = negative_log_sigmoid(-1000.0);
  CHECK(small.loss == doctest::Approx(1000.0));
  CHECK(small.dloss_dmargin == doctest::Approx(-1.0));
}

TEST_CASE("common shift of log-ratios leaves the loss unchanged") {
  oracle::Gen gen(25);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = gen.index(2, 10);
    const auto w = coefficients(n);
    std::vector<double> r(n);
    for (auto& x : r) {
      x = gen.uniform(-5, 5);
    }
    auto s = r;
    const double c = gen.uniform(-20, 20);
    for (auto& x : s) {
      x += c;
    }
    const Beta beta(gen.uniform(0.05, 2.0));
    CHECK(std::abs(negative_log_sigmoid(weighted_margin(beta, w.weights(), r)).loss -
                   negative_log_sigmoid(weighted_margin(beta, w.weights(), s)).loss) < 1e-10);
  }
}

TEST_CASE("weighted margin checks lengths") {
  const std::vector<double> w{1.0, -1.0};
  const std::vector<double> r{1.0};
  CHECK_THROWS_AS(weighted_margin(Beta(), w, r), std::invalid_argument);
}

TEST_CASE("all-pairs oracle enumerates C(n,2) comparisons") {
  oracle::Gen gen(26);
  for (std::size_t n = 2; n <= 12; ++n) {
    std::vector<double> r(n);
    for (auto& x : r) {
      x = gen.normal();
    }
    const auto res = allpairs_margin_oracle(r);
    CHECK(res.comparisons == n * (n - 1) / 2);
    CHECK(res.aggregated == oracle::net_appearances(n));
    CHECK(res.margin / static_cast<double>(n - 1) == doctest::Approx(oracle::allpairs_margin(r)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(allpairs_margin_oracle(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("adjacent expansion produces n-1 ordered pairs per example") {
  oracle::Gen gen(27);
  for (std::size_t n = 2; n <= 7; ++n) {
    const auto ex = oracle::ranked(Prompt("x", {0}), gen.responses(5, n));
    const auto pairs = expand_adjacent_pairs(ex);
    REQUIRE(pairs.size() == n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      CHECK(pairs[i].chosen == ex.responses()[i]);
      CHECK(pairs[i].rejected == ex.responses()[i + 1]);
      CHECK(pairs[i].prompt == ex.prompt());
    }
    const std::vector<RankedExample> many(13, ex);
    CHECK(expand_adjacent_pairs(many).size() == 13 * (n - 1));
  }
}

TEST_CASE("extreme pair is best against worst") {
  oracle::Gen gen(28);
  const auto ex = oracle::ranked(Prompt("x", {0}), gen.responses(5, 4));
  const auto p = extreme_pair(ex);
  CHECK(p.chosen == ex.responses().front());
  CHECK(p.rejected == ex.responses().back());
}

TEST_CASE("implicit reward is beta times the log-ratio") {
  oracle::Gen gen(29);
  const auto c = random_case(gen, 1);
  const double r = implicit_reward(c.theta, c.ref, Beta(0.5), c.x, c.ys[0]);
  CHECK(r == doctest::Approx(0.5 * (oracle::seq_log_prob(c.theta, c.x, c.ys[0]) -
                                    oracle::seq_log_prob(c.ref, c.x, c.ys[0])))
                 .epsilon(1e-10));
}

TEST_CASE("built-in property suites pass") {
  for (const auto& r : run_verify_suites(verify_suite_names())) {
    CAPTURE(r.name);
    CHECK(r.passed());
    CHECK(r.checks > 0);
  }
}

TEST_CASE("coefficient suite catches an un-normalized schedule") {
  VerifyOptions opt;
  opt.coefficient_fn = [](std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = static_cast<double>(n) - 2.0 * static_cast<double>(i) - 1.0;  // missing the 1/(n-1)
    }
    return w;
  };
  const auto r = run_verify_suite("coefficients", opt);
  CHECK_FALSE(r.passed());
  CHECK_THROWS_AS(run_verify_suite("nope"), std::invalid_argument);
}
