#include <cfloat>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "zcp/errors.hpp"
#include "zcp/rng.hpp"
#include "zcp/stats.hpp"

namespace zcp {

std::string to_string(TestKind t) {
  return t == TestKind::Bootstrap ? "bootstrap" : "mcnemar";
}

namespace {

double mean_gap_of(const MetricSeries& s) {
  double sum = 0.0;
  for (size_t i = 0; i < s.size(); ++i) sum += s.original[i] - s.reference[i];
  return sum / static_cast<double>(s.size());
}

bool is_binary(double v) { return v == 0.0 || v == 1.0; }

void require_binary(const MetricSeries& s) {
  for (size_t i = 0; i < s.size(); ++i) {
    if (!is_binary(s.original[i]) || !is_binary(s.reference[i])) {
      throw DataError("discrete test requires 0/1 values");
    }
  }
}

}  // namespace

BootstrapP bootstrap_p(const MetricSeries& series, size_t iterations,
                       uint64_t seed) {
  if (series.kind != MetricKind::Continuous)
    throw ConfigError("bootstrap applies only to continuous metrics");
  size_t n = series.size();
  if (n < 2) throw DataError("bootstrap needs at least two pairs");
  if (iterations == 0) throw ConfigError("bootstrap needs iterations > 0");

  std::vector<double> d(n);
  for (size_t i = 0; i < n; ++i) d[i] = series.original[i] - series.reference[i];

  size_t at_or_below = 0;
  for (size_t b = 0; b < iterations; ++b) {
    // Each iteration reseeds from (seed, index), so any parallel split
    // reproduces the serial stream exactly.
    SplitMix64 rng(mix64(seed, b));
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) sum += d[rng.below(n)];
    if (sum <= 0.0) ++at_or_below;
  }

  BootstrapP out;
  if (at_or_below == 0) {
    out.p = 1e-4;
    out.lower_bound = true;
  } else {
    out.p = static_cast<double>(at_or_below) / static_cast<double>(iterations);
  }
  return out;
}

double mcnemar_p(size_t b, size_t c) {
  size_t n = b + c;
  if (n == 0) return 1.0;

  if (n <= 120) {
    // Binomials and their tail sum stay below 2^126, so the arithmetic is
    // exact and the result is the correctly rounded dyadic tail.
    unsigned __int128 coeff = 1;
    for (size_t k = 1; k <= b; ++k) {
      coeff = coeff * (n - k + 1) / k;  // C(n, k), divisions are exact
    }
    unsigned __int128 sum = 0;
    for (size_t k = b; k <= n; ++k) {
      sum += coeff;
      if (k < n) coeff = coeff * (n - k) / (k + 1);
    }
    double p = std::ldexp(static_cast<double>(sum), -static_cast<int>(n));
    return std::max(p, DBL_MIN);
  }

  // Log-space tail for large counts: log-sum-exp over log C(n,k) - n log 2.
  double max_term = -HUGE_VAL;
  std::vector<double> terms;
  terms.reserve(n - b + 1);
  double log2n = static_cast<double>(n) * std::log(2.0);
  for (size_t k = b; k <= n; ++k) {
    double lt = std::lgamma(static_cast<double>(n) + 1.0) -
                std::lgamma(static_cast<double>(k) + 1.0) -
                std::lgamma(static_cast<double>(n - k) + 1.0) - log2n;
    terms.push_back(lt);
    max_term = std::max(max_term, lt);
  }
  double acc = 0.0;
  for (double lt : terms) acc += std::exp(lt - max_term);
  double p = std::exp(max_term + std::log(acc));
  return std::max(std::min(p, 1.0), DBL_MIN);
}

double mcnemar_p(const MetricSeries& series) {
  require_binary(series);
  size_t b = 0, c = 0;
  for (size_t i = 0; i < series.size(); ++i) {
    if (series.original[i] == 1.0 && series.reference[i] == 0.0) ++b;
    if (series.original[i] == 0.0 && series.reference[i] == 1.0) ++c;
  }
  return mcnemar_p(b, c);
}

double bayes_factor(double p) {
  if (!(p > 0.0) || p > 1.0) {
    throw std::domain_error("bayes_factor needs p in (0, 1]");
  }
  constexpr double kInvE = 1.0 / 2.718281828459045;
  if (p >= kInvE) return 1.0;  // evidence floor; continuous at p = 1/e
  return 1.0 / (-std::exp(1.0) * p * std::log(p));
}

double confidence(double bf, double prior) {
  if (!(prior > 0.0) || !(prior < 1.0)) {
    throw ConfigError("prior must lie strictly inside (0, 1)");
  }
  if (!(bf >= 1.0)) throw std::domain_error("bayes factor below its floor");
  return bf * prior / (bf * prior + (1.0 - prior));
}

namespace {

TestOutcome finish(const MetricSeries& series, const StatsConfig& config,
                   TestOutcome out) {
  out.metric = series.metric;
  out.prior = config.prior;
  out.bf10 = bayes_factor(out.p_value);
  out.c_cont = confidence(out.bf10, config.prior);
  out.diagnostics.mean_gap = mean_gap_of(series);
  out.diagnostics.pairs = series.size();
  return out;
}

}  // namespace

TestOutcome run_test(const MetricSeries& series, const StatsConfig& config) {
  return run_test(series, config,
                  series.kind == MetricKind::Discrete ? TestKind::McNemar
                                                      : TestKind::Bootstrap);
}

TestOutcome run_test(const MetricSeries& series, const StatsConfig& config,
                     TestKind forced) {
  if (series.size() == 0) throw DataError("empty series");
  TestOutcome out;
  out.test_used = forced;
  if (forced == TestKind::McNemar) {
    if (series.kind != MetricKind::Discrete) {
      throw ConfigError("mcnemar applies only to discrete metrics");
    }
    require_binary(series);
    size_t b = 0, c = 0;
    for (size_t i = 0; i < series.size(); ++i) {
      if (series.original[i] == 1.0 && series.reference[i] == 0.0) ++b;
      if (series.original[i] == 0.0 && series.reference[i] == 1.0) ++c;
    }
    out.p_value = mcnemar_p(b, c);
    out.diagnostics.discordant_b = b;
    out.diagnostics.discordant_c = c;
  } else {
    if (series.kind != MetricKind::Continuous) {
      throw ConfigError("bootstrap applies only to continuous metrics");
    }
    BootstrapP bp = bootstrap_p(series, config.bootstrap_iterations, config.seed);
    out.p_value = bp.p;
    out.p_is_lower_bound = bp.lower_bound;
    out.diagnostics.bootstrap_iterations = config.bootstrap_iterations;
  }
  return finish(series, config, out);
}

}  // namespace zcp
