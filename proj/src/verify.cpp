#include "mdpo/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "mdpo/core.hpp"
#include "mdpo/losses.hpp"
#include "mdpo/policy.hpp"
#include "mdpo/rng.hpp"

namespace mdpo {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kFdRelTol = 1e-4;

struct Instance {
  PolicyParams theta;
  PolicyParams ref;
  Prompt prompt;
  std::vector<Response> responses;
  Beta beta;
};

TokenSeq random_seq(Rng& rng, std::size_t vocab, std::size_t min_len, std::size_t max_len) {
  TokenSeq s(min_len + rng.index(max_len - min_len + 1));
  for (auto& t : s) {
    t = static_cast<TokenId>(rng.index(vocab));
  }
  return s;
}

Instance random_instance(Rng& rng, std::size_t n) {
  const std::size_t v = 3 + rng.index(4);
  auto theta = PolicyParams::random(v, 1.0, rng.next());
  auto ref = PolicyParams::random(v, 1.0, rng.next());
  Prompt prompt("x", random_seq(rng, v, 1, 4));
  std::vector<Response> responses;
  for (std::size_t i = 0; i < n; ++i) {
    responses.emplace_back(random_seq(rng, v, 1, 5), ResponseSource::kPolicy, static_cast<std::uint32_t>(i));
  }
  return {std::move(theta), std::move(ref), std::move(prompt), std::move(responses), Beta(rng.uniform(0.05, 2.0))};
}

RankedExample as_ranked(const Instance& inst) {
  std::vector<double> rewards(inst.responses.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    rewards[i] = -static_cast<double>(i);
  }
  return RankedExample(inst.prompt, inst.responses, rewards);
}

// Coordinates smaller than the floor are compared absolutely; below it the
// finite difference is dominated by rounding in the loss itself.
constexpr double kFdFloor = 1e-4;

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kFdFloor}); }

/// Compares `analytic` to central differences of `f` over every table
/// coordinate of `theta`. Returns the worst relative error.
template <typename F>
double fd_worst(PolicyParams theta, const SparseGrad& analytic, F f) {
  double worst = 0.0;
  auto table = theta.mutable_table();
  for (std::size_t c = 0; c < table.size(); ++c) {
    const double saved = table[c];
    table[c] = saved + kFdStep;
    const double up = f(theta);
    table[c] = saved - kFdStep;
    const double down = f(theta);
    table[c] = saved;
    worst = std::max(worst, rel_err(analytic.at(c), (up - down) / (2.0 * kFdStep)));
  }
  return worst;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

void suite_coefficients(SuiteResult& r, const VerifyOptions& opt, Rng& rng) {
  for (std::size_t n = 2; n <= 16; ++n) {
    const auto w = opt.coefficient_fn(n);
    const auto oracle = allpairs_margin_oracle(std::vector<double>(n, 0.0));
    ++r.checks;
    if (w.size() != n) {
      r.failures.push_back("n=" + std::to_string(n) + ": schedule has wrong length");
      continue;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += w[i];
      if (std::abs(static_cast<double>(n - 1) * w[i] - oracle.aggregated[i]) > 1e-12) {
        r.failures.push_back("n=" + std::to_string(n) + ": (n-1)*w[" + std::to_string(i) + "]=" +
                             fmt(static_cast<double>(n - 1) * w[i]) + " but all-pairs aggregate is " +
                             fmt(oracle.aggregated[i]));
        break;
      }
      if (w[i] != -w[n - 1 - i]) {
        r.failures.push_back("n=" + std::to_string(n) + ": schedule not antisymmetric");
        break;
      }
    }
    if (std::abs(sum) > 1e-12) {
      r.failures.push_back("n=" + std::to_string(n) + ": weights sum to " + fmt(sum));
    }
    if (oracle.comparisons != n * (n - 1) / 2) {
      r.failures.push_back("n=" + std::to_string(n) + ": oracle enumerated " + std::to_string(oracle.comparisons) +
                           " comparisons");
    }
    std::vector<double> ratios(n);
    for (auto& x : ratios) {
      x = rng.uniform(-3.0, 3.0);
    }
    double weighted = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      weighted += w[i] * ratios[i];
    }
    const double brute = allpairs_margin_oracle(ratios).margin;
    if (std::abs(static_cast<double>(n - 1) * weighted - brute) > 1e-10 * std::max(1.0, std::abs(brute))) {
      r.failures.push_back("n=" + std::to_string(n) + ": weighted margin disagrees with all-pairs enumeration");
    }
  }
  const auto w4 = opt.coefficient_fn(4);
  const std::vector<double> expected{1.0, 1.0 / 3.0, -1.0 / 3.0, -1.0};
  ++r.checks;
  for (std::size_t i = 0; i < 4 && w4.size() == 4; ++i) {
    if (std::abs(w4[i] - expected[i]) > 1e-12) {
      r.failures.push_back("n=4: expected weights [1, 1/3, -1/3, -1]");
      break;
    }
  }
}

void suite_reduction(SuiteResult& r, Rng& rng) {
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(rng, 2);
    const auto dpo = dpo_loss(inst.theta, inst.ref, inst.beta, PreferencePair(inst.prompt, inst.responses[0], inst.responses[1]));
    const auto mdpo = mdpo_loss(inst.theta, inst.ref, inst.beta, as_ranked(inst));
    ++r.checks;
    double worst = std::abs(dpo.loss - mdpo.loss);
    dpo.grad.for_each([&](std::size_t c, double g) { worst = std::max(worst, std::abs(g - mdpo.grad.at(c))); });
    mdpo.grad.for_each([&](std::size_t c, double g) { worst = std::max(worst, std::abs(g - dpo.grad.at(c))); });
    if (worst > 1e-12) {
      r.failures.push_back("trial " + std::to_string(trial) + ": mdpo(n=2) differs from dpo by " + fmt(worst));
    }
  }
}

void suite_gradients(SuiteResult& r, Rng& rng) {
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = random_instance(rng, 1);
    const auto lp = log_prob(inst.theta, inst.prompt, inst.responses[0]);
    const double worst = fd_worst(inst.theta, lp.grad, [&](const PolicyParams& p) {
      return log_prob_value(p, inst.prompt, inst.responses[0]);
    });
    ++r.checks;
    if (worst >= kFdRelTol) {
      r.failures.push_back("log_prob trial " + std::to_string(trial) + ": rel err " + fmt(worst));
    }
  }
  for (std::size_t n = 2; n <= 5; ++n) {
    for (int trial = 0; trial < 50; ++trial) {
      const auto inst = random_instance(rng, n);
      const auto ranked = as_ranked(inst);
      const auto lv = mdpo_loss(inst.theta, inst.ref, inst.beta, ranked);
      const double worst = fd_worst(inst.theta, lv.grad, [&](const PolicyParams& p) {
        return mdpo_loss(p, inst.ref, inst.beta, ranked).loss;
      });
      ++r.checks;
      if (worst >= kFdRelTol) {
        r.failures.push_back("mdpo n=" + std::to_string(n) + " trial " + std::to_string(trial) + ": rel err " + fmt(worst));
      }
      if (n == 2) {
        const PreferencePair pair(inst.prompt, inst.responses[0], inst.responses[1]);
        const auto dv = dpo_loss(inst.theta, inst.ref, inst.beta, pair);
        const double dworst = fd_worst(inst.theta, dv.grad, [&](const PolicyParams& p) {
          return dpo_loss(p, inst.ref, inst.beta, pair).loss;
        });
        ++r.checks;
        if (dworst >= kFdRelTol) {
          r.failures.push_back("dpo trial " + std::to_string(trial) + ": rel err " + fmt(dworst));
        }
      }
    }
  }
}

void suite_shift(SuiteResult& r, Rng& rng) {
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.index(7);
    const auto w = coefficients(n);
    const Beta beta(rng.uniform(0.05, 2.0));
    std::vector<double> ratios(n);
    for (auto& x : ratios) {
      x = rng.uniform(-5.0, 5.0);
    }
    const double c = rng.uniform(-5.0, 5.0);
    auto shifted = ratios;
    for (auto& x : shifted) {
      x += c;
    }
    const double base = negative_log_sigmoid(weighted_margin(beta, w.weights(), ratios)).loss;
    const double moved = negative_log_sigmoid(weighted_margin(beta, w.weights(), shifted)).loss;
    ++r.checks;
    if (std::abs(base - moved) >= 1e-10) {
      r.failures.push_back("trial " + std::to_string(trial) + ": loss moved by " + fmt(std::abs(base - moved)));
    }
  }
}

void suite_lemma(SuiteResult& r, Rng& rng) {
  std::size_t lower_fail = 0;
  std::size_t upper_fail = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    double rs[3] = {3.0 * rng.normal(), 3.0 * rng.normal(), 3.0 * rng.normal()};
    std::sort(rs, rs + 3, std::greater<>());
    const double b_over_a = std::exp(rs[1] - rs[0]);
    const double c_over_b = std::exp(rs[2] - rs[1]);
    const double c_over_a = std::exp(rs[2] - rs[0]);
    const double middle = b_over_a + c_over_b;
    ++r.checks;
    lower_fail += 2.0 * std::sqrt(c_over_a) > middle ? 1 : 0;
    upper_fail += middle > 1.0 + c_over_a ? 1 : 0;
  }
  if (lower_fail + upper_fail > 0) {
    r.failures.push_back("bounds violated: " + std::to_string(lower_fail) + " lower, " + std::to_string(upper_fail) +
                         " upper");
  }
  // With B fixed, pushing A up and C down shrinks C/A; the exact chain
  // objective must shrink with it.
  for (int trial = 0; trial < 1000; ++trial) {
    const double rb = rng.normal();
    double ra = rb + rng.uniform(0.0, 1.0);
    double rc = rb - rng.uniform(0.0, 1.0);
    double prev_chain = (1.0 + std::exp(rb - ra)) * (1.0 + std::exp(rc - rb));
    double prev_surrogate = std::exp(rc - ra);
    for (int k = 0; k < 10; ++k) {
      ra += rng.uniform(0.01, 0.5);
      rc -= rng.uniform(0.0, 0.5);
      const double chain = (1.0 + std::exp(rb - ra)) * (1.0 + std::exp(rc - rb));
      const double surrogate = std::exp(rc - ra);
      ++r.checks;
      if (!(chain < prev_chain && surrogate < prev_surrogate)) {
        r.failures.push_back("co-monotonicity broken at trial " + std::to_string(trial));
        return;
      }
      prev_chain = chain;
      prev_surrogate = surrogate;
    }
  }
}

void suite_expansion(SuiteResult& r, Rng& rng) {
  for (std::size_t p : {1UL, 10UL, 1000UL}) {
    for (std::size_t n = 2; n <= 6; ++n) {
      std::vector<RankedExample> data;
      for (std::size_t i = 0; i < p; ++i) {
        std::vector<Response> responses;
        std::vector<double> rewards;
        for (std::size_t j = 0; j < n; ++j) {
          responses.emplace_back(random_seq(rng, 5, 1, 3), ResponseSource::kPolicy, static_cast<std::uint32_t>(j));
          rewards.push_back(-static_cast<double>(j));
        }
        data.emplace_back(Prompt("x" + std::to_string(i), {0}), std::move(responses), std::move(rewards));
      }
      const auto pairs = expand_adjacent_pairs(data);
      ++r.checks;
      if (pairs.size() != p * (n - 1)) {
        r.failures.push_back("P=" + std::to_string(p) + " n=" + std::to_string(n) + ": got " +
                             std::to_string(pairs.size()) + " pairs");
        continue;
      }
      for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!(pairs[i].chosen == data[0].responses()[i]) || !(pairs[i].rejected == data[0].responses()[i + 1])) {
          r.failures.push_back("P=" + std::to_string(p) + " n=" + std::to_string(n) + ": pair order wrong");
          break;
        }
      }
    }
  }
}

void suite_softmax(SuiteResult& r, Rng& rng) {
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = random_instance(rng, 1);
    for (std::size_t row = 0; row < inst.theta.rows(); ++row) {
      const auto p = softmax(inst.theta.row(row));
      double s = 0.0;
      for (double x : p) {
        s += x;
      }
      ++r.checks;
      if (std::abs(s - 1.0) > 1e-12) {
        r.failures.push_back("softmax row sums to " + fmt(s));
      }
    }
    const double before = log_prob_value(inst.theta, inst.prompt, inst.responses[0]);
    auto shifted = inst.theta;
    auto table = shifted.mutable_table();
    for (std::size_t row = 0; row < shifted.rows(); ++row) {
      const double c = rng.uniform(-10.0, 10.0);
      for (std::size_t col = 0; col < shifted.vocab_size(); ++col) {
        table[shifted.coord(row, col)] += c;
      }
    }
    ++r.checks;
    const double after = log_prob_value(shifted, inst.prompt, inst.responses[0]);
    if (std::abs(before - after) > 1e-10) {
      r.failures.push_back("log_prob changed by " + fmt(std::abs(before - after)) + " under a row shift");
    }
  }
}

}  // namespace

std::vector<std::string> verify_suite_names() {
  return {"coefficients", "reduction", "gradients", "shift", "lemma", "expansion", "softmax"};
}

SuiteResult run_verify_suite(const std::string& name, const VerifyOptions& options) {
  VerifyOptions opt = options;
  if (!opt.coefficient_fn) {
    opt.coefficient_fn = [](std::size_t n) {
      const auto schedule = coefficients(n);
      const auto w = schedule.weights();
      return std::vector<double>(w.begin(), w.end());
    };
  }
  SuiteResult r;
  r.name = name;
  Rng rng(derive_seed(opt.seed, name));
  const auto start = std::chrono::steady_clock::now();
  if (name == "coefficients") {
    suite_coefficients(r, opt, rng);
  } else if (name == "reduction") {
    suite_reduction(r, rng);
  } else if (name == "gradients") {
    suite_gradients(r, rng);
  } else if (name == "shift") {
    suite_shift(r, rng);
  } else if (name == "lemma") {
    suite_lemma(r, rng);
  } else if (name == "expansion") {
    suite_expansion(r, rng);
  } else if (name == "softmax") {
    suite_softmax(r, rng);
  } else {
    throw std::invalid_argument("unknown verify suite '" + name + "'");
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<SuiteResult> run_verify_suites(const std::vector<std::string>& names, const VerifyOptions& options) {
  std::vector<SuiteResult> out;
  for (const auto& name : names) {
    out.push_back(run_verify_suite(name, options));
  }
  return out;
}

std::string format_suite_table(const std::vector<SuiteResult>& results) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "suite" << std::setw(8) << "result" << std::setw(10) << "checks"
     << "seconds\n";
  for (const auto& r : results) {
    os << std::left << std::setw(14) << r.name << std::setw(8) << (r.passed() ? "PASS" : "FAIL") << std::setw(10)
       << r.checks << std::fixed << std::setprecision(3) << r.seconds << "\n";
    for (const auto& f : r.failures) {
      os << "    - " << f << "\n";
    }
  }
  return os.str();
}

}  // namespace mdpo
