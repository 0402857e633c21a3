#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace zcp {

struct BenchmarkItem {
  std::string id;
  std::string question;
  std::optional<std::string> solution;  // worked reasoning chain, when the benchmark ships one
  std::string answer;                   // canonical final answer text
  std::optional<std::string> subject;
};

enum class Variant { Original, Paraphrased, Reference };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct Dataset {
  std::string name;
  Variant variant = Variant::Original;
  std::vector<BenchmarkItem> items;

  size_t size() const { return items.size(); }
};

// A probe pair. The reference item reuses the original's id; the id is the
// pairing key across variants.
struct ItemPair {
  BenchmarkItem original;
  BenchmarkItem reference;
};

struct Exclusion {
  std::string id;
  std::string reason;
};

// JSONL, one object per line: {"id","question","answer"} required,
// {"solution","subject"} optional, unknown keys ignored. Rejects duplicate
// ids and empty required fields; errors name the offending line.
Dataset load_dataset(const std::string& path, Variant variant,
                     const std::string& name = "");
void save_dataset(const Dataset& ds, const std::string& path);

struct SamplePlan {
  enum class Kind { Uniform, Stratified } kind = Kind::Uniform;
  size_t n = 0;                        // Uniform: total draw
  size_t per_subject = 0;              // Stratified: draw per subject
  std::vector<std::string> subjects;   // Stratified: empty means every subject present
  uint64_t seed = 0;
};

// Without replacement; a pure function of (dataset, plan). Selection is
// random, output preserves the input item order.
Dataset sample(const Dataset& ds, const SamplePlan& plan);

struct PairingResult {
  std::vector<ItemPair> pairs;          // ordered by the original dataset
  std::vector<Exclusion> excluded;      // unmatched ids from either side
};

PairingResult pair_datasets(const Dataset& original, const Dataset& reference);

std::string exclusions_to_json(const std::vector<Exclusion>& excluded);

// Deterministic disjoint halves whose sizes differ by at most one. Used to
// carve a to-be-contaminated split from an untouched control split.
std::pair<Dataset, Dataset> split_c_u(const Dataset& ds, uint64_t seed);

}  // namespace zcp
