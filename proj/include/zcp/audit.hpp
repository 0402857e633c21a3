#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zcp/backend.hpp"
#include "zcp/corpus.hpp"
#include "zcp/metrics.hpp"
#include "zcp/probe.hpp"
#include "zcp/stats.hpp"

namespace zcp {

// ZeroCoT is the probing regime: force the answer with no reasoning. FullCoT
// is the ablation that lets the model reason first (and drops consistency,
// which needs a zero-CoT side to compare against).
enum class ProbeRegime { ZeroCoT, FullCoT };

std::string to_string(ProbeRegime r);
ProbeRegime regime_from_string(const std::string& s);

struct SimConfig {
  SimProfile profile;
  // Treat every original item as memorized. An explicit id list narrows the
  // contaminated subset instead; ids are matched against original questions.
  bool memorize_original = true;
  std::vector<std::string> shortcut_ids;
};

struct RunConfig {
  BackendConfig backend;
  AccessMode access = AccessMode::OpenWeight;
  ProbeRegime regime = ProbeRegime::ZeroCoT;

  std::string original_path;
  std::string reference_path;
  std::string paraphrased_path;  // optional second evaluation side

  // Resolved by resolve_metrics: explicit selections are validated against
  // the access mode and regime, defaults are trimmed to what they support.
  std::vector<Metric> metrics;
  bool metrics_explicit = false;

  StatsConfig stats;
  uint64_t seed = 0;
  size_t concurrency = 8;
  std::string cache_dir;  // empty disables the cache
  std::vector<double> sweep_fractions;
  SimConfig sim;
  bool record_timestamp = false;  // default off: reports stay byte-stable
};

BackendConfig backend_config_from_json(const nlohmann::json& j,
                                       const std::string& where = "backend");
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

// Applies metric defaults and capability gates. Explicitly requesting a
// metric the access mode, regime, or backend cannot provide is a
// configuration error; defaulted metrics are quietly dropped and recorded.
void resolve_metrics(RunConfig& cfg, std::vector<Metric>* dropped = nullptr);

struct VariantRow {
  Metric metric = Metric::Acc;
  double s = 0.0;      // mean on the evaluated side
  double s_ref = 0.0;  // mean on the shared reference side
  size_t excluded_pairs = 0;  // pairs missing this metric on either side
  TestOutcome outcome;
};

struct SideResults {
  std::string side;  // "original" or "paraphrased"
  std::vector<VariantRow> rows;
};

struct SweepRow {
  double fraction = 0.0;
  double acc_original = 0.0;
  double acc_reference = 0.0;
  double gap = 0.0;  // acc_original - acc_reference
};

struct AuditReport {
  int schema_version = 1;
  std::string config_digest;
  uint64_t seed = 0;
  std::string rng = "splitmix64";
  nlohmann::json metadata;  // dataset shapes, exclusions, policies, rates
  std::vector<SideResults> results;
  std::vector<SweepRow> sweep;
  nlohmann::json items = nlohmann::json::array();  // raw outputs + extractions

  nlohmann::json to_json() const;
  static AuditReport from_json(const nlohmann::json& j);
};

enum class ReportFormat { JSON, Markdown };

std::string render_report(const AuditReport& report, ReportFormat format);

// Call accounting for one run. Kept outside AuditReport so cache state can
// never leak into report bytes.
struct RunStats {
  uint64_t complete_calls = 0;
  uint64_t teacher_force_calls = 0;
  CachedBackend::Stats cache;
};

AuditReport run_audit(const RunConfig& cfg, RunStats* stats = nullptr);
AuditReport run_audit(const RunConfig& cfg, const Dataset& original,
                      const Dataset& reference, const Dataset* paraphrased,
                      RunStats* stats = nullptr);

std::vector<SweepRow> run_truncation_sweep(const RunConfig& cfg,
                                           const Dataset& original,
                                           const Dataset& reference,
                                           const std::vector<double>& fractions);

}  // namespace zcp
