#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "mdpo/core.hpp"
#include "mdpo/rng.hpp"
#include "oracles.hpp"

using namespace mdpo;

TEST_CASE("vocabulary appends the end token and round-trips text") {
  const Vocabulary v({"the", "cat", "sat"});
  CHECK(v.size() == 4);
  CHECK(v.word(v.eos()) == "</s>");
  CHECK(v.decode(v.encode("the cat sat")) == "the cat sat");
  CHECK_THROWS_AS(v.encode("the dog"), std::invalid_argument);
  CHECK_THROWS_AS(v.encode("the dog", true), std::invalid_argument);
  CHECK(v.user_words() == std::vector<std::string>{"the", "cat", "sat"});
}

TEST_CASE("lenient encoding maps unknown words to <unk>") {
  const Vocabulary v({"<unk>", "a", "b"});
  const auto ids = v.encode("a zebra b", true);
  REQUIRE(ids.size() == 3);
  CHECK(ids[1] == *v.unk());
}

TEST_CASE("vocabulary rejects duplicates and multi-token words") {
  CHECK_THROWS_AS(Vocabulary({"a", "a"}), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary({"a b"}), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary({"</s>"}), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary({""}), std::invalid_argument);
}

TEST_CASE("prompts and responses must be non-empty") {
  CHECK_THROWS_AS(Prompt("p", {}), std::invalid_argument);
  CHECK_THROWS_AS(Response({}), std::invalid_argument);
  CHECK_NOTHROW(Prompt("p", {0}));
}

TEST_CASE("a pair cannot prefer a response over itself") {
  const Prompt x("p", {0});
  const Response a({1, 2}, ResponseSource::kGenBackend, 0);
  CHECK_THROWS_AS(PreferencePair(x, a, a), std::invalid_argument);
  // Same text from a different generation slot is a distinct response.
  CHECK_NOTHROW(PreferencePair(x, a, Response({1, 2}, ResponseSource::kGenBackend, 1)));
}

TEST_CASE("ranked examples check their shape") {
  const Prompt x("p", {0});
  const std::vector<Response> two{Response({1}), Response({2}, ResponseSource::kPolicy, 1)};
  CHECK_NOTHROW(RankedExample(x, two, {1.0, 0.5}));
  CHECK_NOTHROW(RankedExample(x, two, {1.0, 1.0}));
  CHECK_THROWS_AS(RankedExample(x, two, {0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(RankedExample(x, two, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(RankedExample(x, {Response({1})}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(RankedExample(x, two, {std::nan(""), 0.0}), std::invalid_argument);
}

TEST_CASE("response source names round-trip") {
  for (auto s : {ResponseSource::kSeedChosen, ResponseSource::kSeedRejected, ResponseSource::kGenBackend,
                 ResponseSource::kPolicy}) {
    CHECK(parse_response_source(to_string(s)) == s);
  }
  CHECK(to_string(ResponseSource::kGenBackend) == "gen-backend");
  CHECK_THROWS_AS(parse_response_source("human"), std::invalid_argument);
}

TEST_CASE("coefficient schedule small cases") {
  const auto w2 = coefficients(2);
  CHECK(w2[0] == 1.0);
  CHECK(w2[1] == -1.0);
  const auto w4 = coefficients(4);
  CHECK(w4[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w4[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(w4[2] == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
  CHECK(w4[3] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(coefficients(1), std::invalid_argument);
  CHECK_THROWS_AS(coefficients(0), std::invalid_argument);
}

TEST_CASE("coefficient schedule properties for n = 2..64") {
  for (std::size_t n = 2; n <= 64; ++n) {
    CAPTURE(n);
    const auto w = coefficients(n);
    REQUIRE(w.n() == n);
    double sum = 0.0;
    const auto net = oracle::net_appearances(n);
    for (std::size_t i = 0; i < n; ++i) {
      sum += w[i];
      CHECK(w[i] == -w[n - 1 - i]);
      CHECK(std::abs(static_cast<double>(n - 1) * w[i] - net[i]) <= 1e-12);
      if (i + 1 < n) {
        CHECK(w[i] > w[i + 1]);
      }
    }
    CHECK(std::abs(sum) <= 1e-12);
    CHECK(w[0] == 1.0);
    CHECK(w[n - 1] == -1.0);
  }
}

TEST_CASE("sigmoid helpers are stable at the extremes") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(std::isfinite(log_sigmoid(-800.0)));
  CHECK(log_sigmoid(-800.0) == doctest::Approx(-800.0));
  CHECK(log_sigmoid(800.0) == 0.0);
  oracle::Gen gen(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = gen.uniform(-30, 30);
    CHECK(log_sigmoid(x) == doctest::Approx(std::log(1.0 / (1.0 + std::exp(-x)))).epsilon(1e-12));
    CHECK(sigmoid(x) + sigmoid(-x) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("Bradley-Terry probability") {
  CHECK(bt_probability(1.0, 1.0) == 0.5);
  oracle::Gen gen(2);
  for (int i = 0; i < 1000; ++i) {
    const double a = gen.uniform(-10, 10);
    const double b = gen.uniform(-10, 10);
    CHECK(bt_probability(a, b) + bt_probability(b, a) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(bt_probability(a, b) == doctest::Approx(std::exp(a) / (std::exp(a) + std::exp(b))).epsilon(1e-12));
    const double c = gen.uniform(-50, 50);
    CHECK(bt_probability(a + c, b + c) == doctest::Approx(bt_probability(a, b)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(bt_probability(std::numeric_limits<double>::infinity(), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(bt_probability(0.0, std::nan("")), std::invalid_argument);
}

TEST_CASE("ranked chain probability is the product of adjacent terms") {
  const std::vector<double> r{2.0, 1.0, -0.5};
  CHECK(ranked_chain_probability(r) ==
        doctest::Approx(bt_probability(2.0, 1.0) * bt_probability(1.0, -0.5)).epsilon(1e-14));
}

TEST_CASE("seed derivation is deterministic and separates streams") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  std::set<std::uint64_t> seen;
  for (std::uint64_t root = 0; root < 10; ++root) {
    for (const char* tag : {"a", "b", "train", "eval"}) {
      for (std::uint64_t i = 0; i < 10; ++i) {
        seen.insert(derive_seed(root, tag, i));
      }
    }
  }
  CHECK(seen.size() == 400);
}

TEST_CASE("rng distributions") {
  Rng a(5);
  Rng b(5);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next() == b.next());
  }
  Rng r(9);
  std::vector<int> counts(7, 0);
  double sum = 0.0;
  double sq = 0.0;
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) {
    const auto k = r.index(7);
    REQUIRE(k < 7);
    ++counts[k];
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  for (int c : counts) {
    CHECK(std::abs(c - draws / 7) < 500);
  }
  CHECK(std::abs(sum / draws) < 0.02);
  CHECK(std::abs(sq / draws - 1.0) < 0.03);
}
