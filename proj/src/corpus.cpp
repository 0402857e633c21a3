#include "zcp/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "zcp/errors.hpp"
#include "zcp/rng.hpp"

namespace zcp {

using nlohmann::json;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Original: return "original";
    case Variant::Paraphrased: return "paraphrased";
    case Variant::Reference: return "reference";
  }
  return "original";
}

Variant variant_from_string(const std::string& s) {
  if (s == "original") return Variant::Original;
  if (s == "paraphrased") return Variant::Paraphrased;
  if (s == "reference") return Variant::Reference;
  throw ConfigError("unknown dataset variant: \"" + s +
                    "\" (expected original, paraphrased, or reference)");
}

namespace {

std::string require_string(const json& j, const char* key,
                           const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw DataError(where + ": missing or non-string field \"" + key + "\"");
  }
  std::string v = j.at(key).get<std::string>();
  if (v.empty()) {
    throw DataError(where + ": field \"" + key + "\" is empty");
  }
  return v;
}

std::optional<std::string> optional_string(const json& j, const char* key,
                                           const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_string()) {
    throw DataError(where + ": field \"" + key + "\" must be a string");
  }
  return j.at(key).get<std::string>();
}

std::string stem_of(const std::string& path) {
  size_t slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  size_t dot = base.find_last_of('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

}  // namespace

Dataset load_dataset(const std::string& path, Variant variant,
                     const std::string& name) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);

  Dataset ds;
  ds.name = name.empty() ? stem_of(path) : name;
  ds.variant = variant;

  std::unordered_set<std::string> seen;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = path + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": malformed JSON line: " + e.what());
    }
    if (!j.is_object()) throw DataError(where + ": line is not a JSON object");

    BenchmarkItem item;
    item.id = require_string(j, "id", where);
    item.question = require_string(j, "question", where);
    item.answer = require_string(j, "answer", where);
    item.solution = optional_string(j, "solution", where);
    item.subject = optional_string(j, "subject", where);

    if (!seen.insert(item.id).second) {
      throw DataError(where + ": duplicate item id \"" + item.id + "\"");
    }
    ds.items.push_back(std::move(item));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write dataset file: " + path);
  for (const auto& item : ds.items) {
    json j;
    j["id"] = item.id;
    j["question"] = item.question;
    j["answer"] = item.answer;
    if (item.solution) j["solution"] = *item.solution;
    if (item.subject) j["subject"] = *item.subject;
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("short write to dataset file: " + path);
}

namespace {

// First k of a partial Fisher-Yates over [0, n), then restored to input
// order. Pure in (n, k, rng seed).
std::vector<size_t> draw_indices(size_t n, size_t k, SplitMix64& rng) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

Dataset sample(const Dataset& ds, const SamplePlan& plan) {
  Dataset out;
  out.name = ds.name;
  out.variant = ds.variant;

  if (plan.kind == SamplePlan::Kind::Uniform) {
    if (plan.n > ds.size()) {
      throw DataError("sample size " + std::to_string(plan.n) +
                      " exceeds dataset size " + std::to_string(ds.size()));
    }
    SplitMix64 rng(plan.seed);
    for (size_t i : draw_indices(ds.size(), plan.n, rng)) {
      out.items.push_back(ds.items[i]);
    }
    return out;
  }

  // Stratified: fixed draw per subject, per-subject stream derived from
  // (seed, subject) so subject iteration order cannot matter.
  std::map<std::string, std::vector<size_t>> strata;
  for (size_t i = 0; i < ds.items.size(); ++i) {
    if (ds.items[i].subject) strata[*ds.items[i].subject].push_back(i);
  }
  std::vector<std::string> subjects = plan.subjects;
  if (subjects.empty()) {
    for (const auto& [subject, _] : strata) subjects.push_back(subject);
  }
  std::vector<size_t> selected;
  for (const auto& subject : subjects) {
    auto it = strata.find(subject);
    if (it == strata.end()) {
      throw DataError("unknown subject in sampling plan: \"" + subject + "\"");
    }
    if (it->second.size() < plan.per_subject) {
      throw DataError("subject \"" + subject + "\" has only " +
                      std::to_string(it->second.size()) + " items, need " +
                      std::to_string(plan.per_subject));
    }
    SplitMix64 rng(mix64(plan.seed, fnv1a64(subject)));
    for (size_t local : draw_indices(it->second.size(), plan.per_subject, rng)) {
      selected.push_back(it->second[local]);
    }
  }
  std::sort(selected.begin(), selected.end());
  for (size_t i : selected) out.items.push_back(ds.items[i]);
  return out;
}

PairingResult pair_datasets(const Dataset& original, const Dataset& reference) {
  std::unordered_map<std::string, size_t> ref_by_id;
  for (size_t i = 0; i < reference.items.size(); ++i) {
    ref_by_id.emplace(reference.items[i].id, i);
  }
  PairingResult result;
  std::unordered_set<std::string> matched;
  for (const auto& item : original.items) {
    auto it = ref_by_id.find(item.id);
    if (it == ref_by_id.end()) {
      result.excluded.push_back({item.id, "no reference counterpart"});
      continue;
    }
    matched.insert(item.id);
    result.pairs.push_back({item, reference.items[it->second]});
  }
  for (const auto& item : reference.items) {
    if (!matched.count(item.id)) {
      result.excluded.push_back({item.id, "no original counterpart"});
    }
  }
  if (result.pairs.empty()) {
    throw DataError("datasets \"" + original.name + "\" and \"" +
                    reference.name + "\" share no item ids");
  }
  return result;
}

std::string exclusions_to_json(const std::vector<Exclusion>& excluded) {
  json arr = json::array();
  for (const auto& e : excluded) {
    arr.push_back({{"id", e.id}, {"reason", e.reason}});
  }
  return arr.dump();
}

std::pair<Dataset, Dataset> split_c_u(const Dataset& ds, uint64_t seed) {
  size_t n = ds.size();
  if (n < 2) throw DataError("cannot split fewer than two items");
  size_t half = (n + 1) / 2;
  SplitMix64 rng(mix64(seed, fnv1a64("split_c_u")));
  std::vector<size_t> chosen = draw_indices(n, half, rng);

  std::vector<bool> in_c(n, false);
  for (size_t i : chosen) in_c[i] = true;

  Dataset c, u;
  c.name = ds.name + "_C";
  u.name = ds.name + "_U";
  c.variant = u.variant = ds.variant;
  for (size_t i = 0; i < n; ++i) {
    (in_c[i] ? c : u).items.push_back(ds.items[i]);
  }
  return {std::move(c), std::move(u)};
}

}  // namespace zcp
