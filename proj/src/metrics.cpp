#include <algorithm>
#include <cmath>
#include <numeric>

#include "zcp/errors.hpp"
#include "zcp/metrics.hpp"

namespace zcp {

std::string to_string(Metric m) {
  switch (m) {
    case Metric::Acc: return "acc";
    case Metric::Con: return "con";
    case Metric::Pfirst: return "p_first";
    case Metric::Pall: return "p_all";
  }
  return "acc";
}

Metric metric_from_string(const std::string& s) {
  if (s == "acc") return Metric::Acc;
  if (s == "con") return Metric::Con;
  if (s == "p_first") return Metric::Pfirst;
  if (s == "p_all") return Metric::Pall;
  throw ConfigError("unknown metric: " + s);
}

MetricKind kind_of(Metric m) {
  switch (m) {
    case Metric::Acc:
    case Metric::Con: return MetricKind::Discrete;
    case Metric::Pfirst:
    case Metric::Pall: return MetricKind::Continuous;
  }
  return MetricKind::Discrete;
}

std::optional<double> ItemMetrics::get(Metric m) const {
  switch (m) {
    case Metric::Acc: return acc;
    case Metric::Con: return con;
    case Metric::Pfirst: return p_first;
    case Metric::Pall: return p_all;
  }
  return std::nullopt;
}

double MetricSeries::mean_original() const {
  if (original.empty()) return 0.0;
  return std::accumulate(original.begin(), original.end(), 0.0) /
         static_cast<double>(original.size());
}

double MetricSeries::mean_reference() const {
  if (reference.empty()) return 0.0;
  return std::accumulate(reference.begin(), reference.end(), 0.0) /
         static_cast<double>(reference.size());
}

double accuracy(const ExtractedAnswer& got, const std::string& truth) {
  if (got.status != ExtractStatus::Found) return 0.0;
  return answer_texts_match(got.raw, truth) ? 1.0 : 0.0;
}

double consistency(const ExtractedAnswer& zero_cot,
                   const ExtractedAnswer& full_cot) {
  if (zero_cot.status != ExtractStatus::Found) return 0.0;
  if (full_cot.status != ExtractStatus::Found) return 0.0;
  return answer_texts_match(zero_cot.raw, full_cot.raw) ? 1.0 : 0.0;
}

double first_token_prob(const std::vector<double>& logprobs) {
  if (logprobs.empty()) throw DataError("no logprobs to score");
  return std::exp(logprobs.front());
}

double all_token_prob(const std::vector<double>& logprobs) {
  if (logprobs.empty()) throw DataError("no logprobs to score");
  double sum = 0.0;
  double lo = logprobs.front(), hi = logprobs.front();
  for (double lp : logprobs) {
    sum += lp;
    lo = std::min(lo, lp);
    hi = std::max(hi, lp);
  }
  double mean = sum / static_cast<double>(logprobs.size());
  return std::clamp(std::exp(mean), std::exp(lo), std::exp(hi));
}

MetricSeries build_series(Metric metric,
                          const std::vector<std::optional<double>>& original,
                          const std::vector<std::optional<double>>& reference) {
  if (original.size() != reference.size()) {
    throw DataError("paired series differ in length");
  }
  MetricSeries s;
  s.metric = metric;
  s.kind = kind_of(metric);
  for (size_t i = 0; i < original.size(); ++i) {
    if (original[i] && reference[i]) {
      s.original.push_back(*original[i]);
      s.reference.push_back(*reference[i]);
    } else {
      ++s.excluded_pairs;
    }
  }
  if (s.original.empty()) {
    throw DataError("no pairs left for " + to_string(metric) +
                    " after exclusions");
  }
  return s;
}

}  // namespace zcp
