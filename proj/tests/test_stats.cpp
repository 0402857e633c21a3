#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cfloat>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "zcp/errors.hpp"
#include "zcp/stats.hpp"

using namespace zcp;

namespace {

MetricSeries make_series(Metric m, std::vector<double> orig,
                         std::vector<double> ref) {
  MetricSeries s;
  s.metric = m;
  s.kind = kind_of(m);
  s.original = std::move(orig);
  s.reference = std::move(ref);
  return s;
}

// Oracle: enumerate every sign assignment of the discordant pairs. Under the
// null each pair flips a fair coin, so the tail is #{masks with >= b heads}
// over 2^n. Exact dyadic, hence comparable bit for bit.
double mask_tail(size_t b, size_t c) {
  size_t n = b + c;
  uint64_t favorable = 0;
  for (uint64_t mask = 0; mask < (uint64_t{1} << n); ++mask) {
    if (static_cast<size_t>(std::popcount(mask)) >= b) ++favorable;
  }
  return std::ldexp(static_cast<double>(favorable), -static_cast<int>(n));
}

// Oracle: long-double pmf recurrence, usable far beyond the exact-integer
// range of the implementation.
double pmf_tail(size_t b, size_t c) {
  size_t n = b + c;
  long double term = std::pow(0.5L, static_cast<long double>(n));  // C(n,0)/2^n
  long double acc = 0.0L;
  for (size_t k = 0; k <= n; ++k) {
    if (k >= b) acc += term;
    if (k < n) {
      term = term * static_cast<long double>(n - k) /
             static_cast<long double>(k + 1);
    }
  }
  return static_cast<double>(acc);
}

}  // namespace

TEST_CASE("test kind names") {
  CHECK(to_string(TestKind::Bootstrap) == "bootstrap");
  CHECK(to_string(TestKind::McNemar) == "mcnemar");
}

// ---------------------------------------------------------------------------
// McNemar

TEST_CASE("mcnemar tail matches exhaustive enumeration for every small count") {
  for (size_t n = 0; n <= 12; ++n) {
    for (size_t b = 0; b <= n; ++b) {
      CAPTURE(n);
      CAPTURE(b);
      CHECK(mcnemar_p(b, n - b) == mask_tail(b, n - b));
    }
  }
}

TEST_CASE("mcnemar pinned values") {
  CHECK(mcnemar_p(0, 0) == 1.0);
  CHECK(mcnemar_p(5, 0) == 0.03125);           // 1/32
  CHECK(mcnemar_p(8, 2) == 0.0546875);         // 56/1024
  CHECK(mcnemar_p(1, 1) == 0.75);              // 3/4
  CHECK(mcnemar_p(0, 5) == 1.0);               // whole mass
  CHECK(mcnemar_p(10, 0) == std::ldexp(1.0, -10));
}

TEST_CASE("mcnemar is monotone in the evidence direction") {
  CHECK(mcnemar_p(8, 2) < mcnemar_p(7, 3));
  CHECK(mcnemar_p(7, 3) < mcnemar_p(6, 4));
  CHECK(mcnemar_p(6, 4) < mcnemar_p(5, 5));
  // More discordance at the same split sharpens the tail.
  CHECK(mcnemar_p(40, 20) < mcnemar_p(20, 10));
}

TEST_CASE("mcnemar large-count log path agrees with a long-double oracle") {
  // Exact-integer side of the switchover.
  CHECK(mcnemar_p(60, 60) == doctest::Approx(pmf_tail(60, 60)).epsilon(1e-9));
  CHECK(mcnemar_p(90, 30) == doctest::Approx(pmf_tail(90, 30)).epsilon(1e-9));
  // Log-space side.
  CHECK(mcnemar_p(61, 60) == doctest::Approx(pmf_tail(61, 60)).epsilon(1e-9));
  CHECK(mcnemar_p(100, 30) == doctest::Approx(pmf_tail(100, 30)).epsilon(1e-9));
  CHECK(mcnemar_p(400, 400) == doctest::Approx(pmf_tail(400, 400)).epsilon(1e-6));
  CHECK(mcnemar_p(0, 150) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mcnemar never reports an exact zero") {
  CHECK(mcnemar_p(2000, 0) == DBL_MIN);
  CHECK(mcnemar_p(120, 0) > 0.0);
}

TEST_CASE("mcnemar over a series counts discordant pairs") {
  MetricSeries s = make_series(Metric::Acc, {1, 1, 1, 0, 0, 1},
                               {0, 0, 1, 1, 0, 1});
  CHECK(mcnemar_p(s) == mcnemar_p(2, 1));
  CHECK(mcnemar_p(s) == 0.5);

  MetricSeries bad = make_series(Metric::Acc, {1, 0.5}, {0, 0});
  CHECK_THROWS_WITH_AS(mcnemar_p(bad), doctest::Contains("0/1"), DataError);
}

// ---------------------------------------------------------------------------
// Bootstrap

TEST_CASE("bootstrap matches the closed-form resampling distribution") {
  // Gaps {-1, 2, 5}: 27 equally likely resample triples, of which exactly
  // four have sum <= 0 (the all -1 triple and the three with two -1s and the
  // 2), so p converges to 4/27.
  MetricSeries s = make_series(Metric::Pall, {0, 3, 6}, {1, 1, 1});
  BootstrapP bp = bootstrap_p(s, 100000, 42);
  CHECK_FALSE(bp.lower_bound);
  CHECK(bp.p == doctest::Approx(4.0 / 27.0).epsilon(0.07));
  CHECK(std::abs(bp.p - 4.0 / 27.0) < 0.01);
}

TEST_CASE("bootstrap is reproducible and seed-sensitive") {
  MetricSeries s = make_series(Metric::Pfirst, {0.3, 0.1, 0.5, 0.2},
                               {0.4, 0.2, 0.1, 0.3});
  BootstrapP a = bootstrap_p(s, 2000, 7);
  BootstrapP b = bootstrap_p(s, 2000, 7);
  CHECK(a.p == b.p);
  CHECK(a.lower_bound == b.lower_bound);
  // True tail is (3/4)^4 ~ 0.3164; a healthy draw lands nearby.
  CHECK(a.p == doctest::Approx(0.3164).epsilon(0.2));
}

TEST_CASE("bootstrap reports a floor when no resample crosses zero") {
  MetricSeries s = make_series(Metric::Pall, {0.9, 0.8, 0.95}, {0.1, 0.2, 0.3});
  BootstrapP bp = bootstrap_p(s, 500, 1);
  CHECK(bp.p == 1e-4);
  CHECK(bp.lower_bound);
}

TEST_CASE("bootstrap saturates at one when every resample is nonpositive") {
  MetricSeries s = make_series(Metric::Pall, {0.1, 0.2}, {0.5, 0.2});
  BootstrapP bp = bootstrap_p(s, 500, 1);
  CHECK(bp.p == 1.0);
  CHECK_FALSE(bp.lower_bound);
}

TEST_CASE("bootstrap refuses misuse") {
  MetricSeries discrete = make_series(Metric::Acc, {1, 0}, {0, 1});
  CHECK_THROWS_AS(bootstrap_p(discrete, 100, 0), ConfigError);

  MetricSeries tiny = make_series(Metric::Pall, {0.5}, {0.4});
  CHECK_THROWS_WITH_AS(bootstrap_p(tiny, 100, 0),
                       doctest::Contains("two pairs"), DataError);

  MetricSeries ok = make_series(Metric::Pall, {0.5, 0.6}, {0.4, 0.4});
  CHECK_THROWS_AS(bootstrap_p(ok, 0, 0), ConfigError);
}

// ---------------------------------------------------------------------------
// Calibration

TEST_CASE("bayes factor floors at one for unremarkable p-values") {
  CHECK(bayes_factor(1.0) == 1.0);
  CHECK(bayes_factor(0.5) == 1.0);
  CHECK(bayes_factor(1.0 / 2.718281828459045) == 1.0);  // the switch point
  CHECK(bayes_factor(0.3678) > 1.0);                    // just below it
  CHECK(bayes_factor(0.3678) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("bayes factor matches its closed form below the floor") {
  for (double p : {0.1, 0.01, 1e-3, 1e-4, 1e-6}) {
    CAPTURE(p);
    CHECK(bayes_factor(p) == 1.0 / (-std::exp(1.0) * p * std::log(p)));
  }
  CHECK(bayes_factor(0.01) == doctest::Approx(7.988).epsilon(1e-3));
  CHECK(bayes_factor(1e-3) > bayes_factor(1e-2));
  CHECK(bayes_factor(1e-4) > bayes_factor(1e-3));
}

TEST_CASE("bayes factor rejects out-of-domain p") {
  CHECK_THROWS_AS(bayes_factor(0.0), std::domain_error);
  CHECK_THROWS_AS(bayes_factor(-0.1), std::domain_error);
  CHECK_THROWS_AS(bayes_factor(1.5), std::domain_error);
  CHECK_THROWS_AS(bayes_factor(std::nan("")), std::domain_error);
}

TEST_CASE("confidence is the posterior of the prior odds") {
  CHECK(confidence(1.0, 0.5) == 0.5);
  CHECK(confidence(9.0, 0.5) == 0.9);
  CHECK(confidence(3.0, 0.25) == 0.5);
  for (double bf : {1.0, 1.5, 7.25, 399.5, 4e6}) {
    CAPTURE(bf);
    CHECK(confidence(bf, 0.5) == bf / (bf + 1.0));
  }
  CHECK(confidence(10.0, 0.1) < confidence(10.0, 0.5));
  CHECK(confidence(10.0, 0.5) < confidence(10.0, 0.9));
}

TEST_CASE("confidence rejects degenerate priors and sub-floor factors") {
  CHECK_THROWS_WITH_AS(confidence(2.0, 0.0), doctest::Contains("prior"),
                       ConfigError);
  CHECK_THROWS_AS(confidence(2.0, 1.0), ConfigError);
  CHECK_THROWS_AS(confidence(2.0, -0.2), ConfigError);
  CHECK_THROWS_AS(confidence(0.99, 0.5), std::domain_error);
  CHECK_THROWS_AS(confidence(std::nan(""), 0.5), std::domain_error);
}

// ---------------------------------------------------------------------------
// Dispatch

TEST_CASE("discrete series run through mcnemar with diagnostics") {
  MetricSeries s = make_series(Metric::Acc, {1, 1, 1, 0, 0, 1},
                               {0, 0, 1, 1, 0, 1});
  StatsConfig cfg;
  TestOutcome out = run_test(s, cfg);
  CHECK(out.test_used == TestKind::McNemar);
  CHECK(out.metric == Metric::Acc);
  CHECK(out.p_value == 0.5);
  CHECK_FALSE(out.p_is_lower_bound);
  CHECK(out.bf10 == 1.0);
  CHECK(out.c_cont == 0.5);
  CHECK(out.diagnostics.discordant_b == 2);
  CHECK(out.diagnostics.discordant_c == 1);
  CHECK(out.diagnostics.pairs == 6);
  CHECK(out.diagnostics.mean_gap == doctest::Approx(1.0 / 6.0));

  TestOutcome forced = run_test(s, cfg, TestKind::McNemar);
  CHECK(forced.p_value == out.p_value);
}

TEST_CASE("a lopsided discrete series yields high confidence") {
  std::vector<double> orig, ref;
  for (int i = 0; i < 30; ++i) { orig.push_back(1); ref.push_back(0); }
  for (int i = 0; i < 2; ++i) { orig.push_back(0); ref.push_back(1); }
  for (int i = 0; i < 8; ++i) { orig.push_back(1); ref.push_back(1); }
  MetricSeries s = make_series(Metric::Con, orig, ref);
  TestOutcome out = run_test(s, StatsConfig{});
  CHECK(out.p_value == mcnemar_p(30, 2));
  CHECK(out.p_value < 1e-6);
  CHECK(out.bf10 > 1e3);
  CHECK(out.c_cont > 0.999);
}

TEST_CASE("continuous series run through the bootstrap with the config seed") {
  MetricSeries s = make_series(Metric::Pall, {0.3, 0.1, 0.5, 0.2},
                               {0.4, 0.2, 0.1, 0.3});
  StatsConfig cfg;
  cfg.bootstrap_iterations = 3000;
  cfg.seed = 99;
  TestOutcome out = run_test(s, cfg);
  CHECK(out.test_used == TestKind::Bootstrap);
  CHECK(out.p_value == bootstrap_p(s, 3000, 99).p);
  CHECK(out.diagnostics.bootstrap_iterations == 3000);
  CHECK(out.diagnostics.pairs == 4);
  CHECK(out.c_cont == confidence(out.bf10, cfg.prior));
}

TEST_CASE("the bound flag propagates through the outcome") {
  MetricSeries s = make_series(Metric::Pfirst, {0.9, 0.8, 0.95}, {0.1, 0.2, 0.3});
  StatsConfig cfg;
  cfg.bootstrap_iterations = 500;
  TestOutcome out = run_test(s, cfg);
  CHECK(out.p_value == 1e-4);
  CHECK(out.p_is_lower_bound);
  CHECK(out.bf10 == bayes_factor(1e-4));
  CHECK(out.c_cont == confidence(out.bf10, 0.5));
  CHECK(out.c_cont > 0.995);
}

TEST_CASE("the configured prior flows into the posterior") {
  MetricSeries s = make_series(Metric::Acc, {1, 1, 1, 1, 1, 1},
                               {0, 0, 0, 0, 0, 1});
  StatsConfig cfg;
  cfg.prior = 0.7;
  TestOutcome out = run_test(s, cfg);
  CHECK(out.prior == 0.7);
  CHECK(out.c_cont == confidence(out.bf10, 0.7));
  StatsConfig skeptical;
  skeptical.prior = 0.1;
  CHECK(run_test(s, skeptical).c_cont < out.c_cont);
}

TEST_CASE("dispatch refuses mismatched forcing and empty input") {
  MetricSeries discrete = make_series(Metric::Acc, {1, 0}, {0, 1});
  MetricSeries continuous = make_series(Metric::Pall, {0.5, 0.6}, {0.4, 0.4});
  StatsConfig cfg;
  CHECK_THROWS_WITH_AS(run_test(discrete, cfg, TestKind::Bootstrap),
                       doctest::Contains("continuous"), ConfigError);
  CHECK_THROWS_WITH_AS(run_test(continuous, cfg, TestKind::McNemar),
                       doctest::Contains("discrete"), ConfigError);

  MetricSeries empty = make_series(Metric::Acc, {}, {});
  CHECK_THROWS_WITH_AS(run_test(empty, cfg), doctest::Contains("empty series"),
                       DataError);

  MetricSeries fractional = make_series(Metric::Acc, {0.5, 1.0}, {0, 1});
  CHECK_THROWS_AS(run_test(fractional, cfg), DataError);
}
