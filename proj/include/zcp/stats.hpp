#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "zcp/metrics.hpp"

namespace zcp {

enum class TestKind { Bootstrap, McNemar };

std::string to_string(TestKind t);

struct StatsConfig {
  size_t bootstrap_iterations = 10000;
  uint64_t seed = 0;
  double prior = 0.5;
};

struct BootstrapP {
  double p = 1.0;
  // True when no resample landed at or below zero: the count hit its floor
  // and p is the smallest value the iteration budget can resolve.
  bool lower_bound = false;
};

struct TestOutcome {
  Metric metric = Metric::Acc;
  TestKind test_used = TestKind::McNemar;
  double p_value = 1.0;
  bool p_is_lower_bound = false;
  double bf10 = 1.0;
  double prior = 0.5;
  double c_cont = 0.5;

  struct Diagnostics {
    double mean_gap = 0.0;
    size_t pairs = 0;
    size_t bootstrap_iterations = 0;
    size_t discordant_b = 0;  // original right, reference wrong
    size_t discordant_c = 0;  // original wrong, reference right
  } diagnostics;
};

// One-sided paired bootstrap on the mean gap. Resamples whole pairs with
// replacement B times; p = #{mean difference <= 0} / B, ties counting against
// the alternative. A zero count returns 1e-4 with the bound flag set.
BootstrapP bootstrap_p(const MetricSeries& series, size_t iterations,
                       uint64_t seed);

// Exact one-sided binomial McNemar tail over the discordant pairs:
// p = sum_{k=b}^{b+c} C(b+c, k) / 2^(b+c); no discordance means p = 1.
double mcnemar_p(size_t b, size_t c);
double mcnemar_p(const MetricSeries& series);

// Calibration bound: 1 / (-e * p * ln p) for p < 1/e, exactly 1 otherwise.
double bayes_factor(double p);

// Posterior odds under prior pi: BF*pi / (BF*pi + (1-pi)).
double confidence(double bf, double prior);

// Dispatches by series kind (Discrete -> McNemar, Continuous -> bootstrap)
// and chains p -> BF -> confidence. The forced overload rejects a test that
// cannot apply to the series kind.
TestOutcome run_test(const MetricSeries& series, const StatsConfig& config);
TestOutcome run_test(const MetricSeries& series, const StatsConfig& config,
                     TestKind forced);

}  // namespace zcp
