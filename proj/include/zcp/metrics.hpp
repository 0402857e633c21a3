#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "zcp/probe.hpp"

namespace zcp {

enum class Metric { Acc, Con, Pfirst, Pall };
enum class MetricKind { Discrete, Continuous };

std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);
MetricKind kind_of(Metric m);

// Per-item scores, absent where the probe could not produce one (e.g. no
// logprobs from the backend, or a full-CoT side missing for consistency).
struct ItemMetrics {
  std::string id;
  std::optional<double> acc;
  std::optional<double> con;
  std::optional<double> p_first;
  std::optional<double> p_all;
  bool zero_cot_found = false;
  bool full_cot_found = false;

  std::optional<double> get(Metric m) const;
};

// Paired per-item values for one metric, pruned to pairs where both sides
// produced a score. original[i] and reference[i] describe the same item id.
struct MetricSeries {
  Metric metric = Metric::Acc;
  MetricKind kind = MetricKind::Discrete;
  std::vector<double> original;
  std::vector<double> reference;
  size_t excluded_pairs = 0;

  size_t size() const { return original.size(); }
  double mean_original() const;
  double mean_reference() const;
};

// 1 if the extraction succeeded and matches the ground truth, else 0. A probe
// that produced nothing parseable scores 0 rather than dropping the item.
double accuracy(const ExtractedAnswer& got, const std::string& truth);

// Label-free agreement between the zero-CoT and full-CoT extractions.
double consistency(const ExtractedAnswer& zero_cot,
                   const ExtractedAnswer& full_cot);

// exp of the first target-token logprob.
double first_token_prob(const std::vector<double>& logprobs);

// Geometric-mean token probability, exp(mean logprob). Clamped into
// [min(p_k), max(p_k)] so float error cannot push it past either extreme;
// a one-token target equals first_token_prob bit for bit.
double all_token_prob(const std::vector<double>& logprobs);

// Drops pairs missing either side (counting them), keeps input order.
// Throws DataError when nothing survives.
MetricSeries build_series(Metric metric,
                          const std::vector<std::optional<double>>& original,
                          const std::vector<std::optional<double>>& reference);

}  // namespace zcp
