#include <algorithm>
#include <atomic>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "zcp/audit.hpp"
#include "zcp/errors.hpp"
#include "zcp/rng.hpp"

namespace zcp {

using json = nlohmann::json;

std::string to_string(ProbeRegime r) {
  return r == ProbeRegime::ZeroCoT ? "zero_cot" : "full_cot";
}

ProbeRegime regime_from_string(const std::string& s) {
  if (s == "zero_cot") return ProbeRegime::ZeroCoT;
  if (s == "full_cot") return ProbeRegime::FullCoT;
  throw ConfigError("unknown probe regime: " + s);
}

namespace {

void check_keys(const json& j, const char* where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

double probability_field(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  double v = j.at(key).get<double>();
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ConfigError(std::string(key) + " must lie in [0, 1]");
  }
  return v;
}

bool is_logit_metric(Metric m) {
  return m == Metric::Pfirst || m == Metric::Pall;
}

void run_parallel(size_t jobs, size_t concurrency,
                  const std::function<void(size_t)>& work) {
  if (jobs == 0) return;
  if (concurrency <= 1 || jobs == 1) {
    for (size_t i = 0; i < jobs; ++i) work(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= jobs) return;
      try {
        work(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  size_t threads = std::min(concurrency, jobs);
  pool.reserve(threads);
  for (size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

BackendConfig backend_config_from_json(const json& b, const std::string& where) {
  check_keys(b, where.c_str(),
             {"kind", "model", "endpoint", "api_key_env", "supports_prefill",
              "supports_echo_logprobs", "max_retries", "backoff_base_ms",
              "timeout_s", "concurrency"});
  BackendConfig out;
  out.kind = b.value("kind", "simulator");
  if (out.kind != "simulator" && out.kind != "http") {
    throw ConfigError(where + " kind must be \"simulator\" or \"http\"");
  }
  out.model_id = b.value("model", std::string("sim"));
  out.endpoint = b.value("endpoint", std::string());
  out.api_key_env = b.value("api_key_env", std::string("ZCP_API_KEY"));
  out.supports_prefill = b.value("supports_prefill", true);
  out.supports_echo_logprobs = b.value("supports_echo_logprobs", false);
  out.max_retries = b.value("max_retries", 5);
  out.backoff_base_ms = b.value("backoff_base_ms", 250);
  out.timeout_s = b.value("timeout_s", 120);
  if (b.contains("concurrency")) {
    out.concurrency = b.at("concurrency").get<int>();
    if (out.concurrency < 1) {
      throw ConfigError(where + " concurrency must be positive");
    }
  }
  return out;
}

RunConfig run_config_from_json(const json& j) {
  check_keys(j, "config",
             {"seed", "access", "regime", "backend", "datasets", "metrics",
              "stats", "concurrency", "cache_dir", "sweep_fractions",
              "simulator", "record_timestamp"});
  RunConfig cfg;
  if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  cfg.access = access_from_string(j.value("access", "open_weight"));
  cfg.regime = regime_from_string(j.value("regime", "zero_cot"));

  if (j.contains("backend")) {
    cfg.backend = backend_config_from_json(j.at("backend"), "backend");
  }

  if (j.contains("datasets")) {
    const json& d = j.at("datasets");
    check_keys(d, "datasets", {"original", "reference", "paraphrased"});
    cfg.original_path = d.value("original", std::string());
    cfg.reference_path = d.value("reference", std::string());
    cfg.paraphrased_path = d.value("paraphrased", std::string());
  }

  if (j.contains("metrics")) {
    if (!j.at("metrics").is_array()) {
      throw ConfigError("metrics must be an array of metric names");
    }
    for (const auto& m : j.at("metrics")) {
      cfg.metrics.push_back(metric_from_string(m.get<std::string>()));
    }
    cfg.metrics_explicit = true;
  }

  if (j.contains("stats")) {
    const json& s = j.at("stats");
    check_keys(s, "stats", {"bootstrap_iterations", "prior"});
    if (s.contains("bootstrap_iterations")) {
      cfg.stats.bootstrap_iterations = s.at("bootstrap_iterations").get<size_t>();
      if (cfg.stats.bootstrap_iterations == 0) {
        throw ConfigError("bootstrap_iterations must be positive");
      }
    }
    cfg.stats.prior = probability_field(s, "prior", 0.5);
    if (cfg.stats.prior == 0.0 || cfg.stats.prior == 1.0) {
      throw ConfigError("prior must lie strictly inside (0, 1)");
    }
  }

  if (j.contains("concurrency")) {
    cfg.concurrency = j.at("concurrency").get<size_t>();
    if (cfg.concurrency == 0) throw ConfigError("concurrency must be positive");
  }
  cfg.cache_dir = j.value("cache_dir", std::string());

  if (j.contains("sweep_fractions")) {
    for (const auto& f : j.at("sweep_fractions")) {
      double v = f.get<double>();
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ConfigError("sweep fractions must lie in [0, 1]");
      }
      cfg.sweep_fractions.push_back(v);
    }
  }

  if (j.contains("simulator")) {
    const json& s = j.at("simulator");
    check_keys(s, "simulator",
               {"p_shortcut", "p_clean", "p_fullcot", "tf_mean_shortcut",
                "tf_mean_clean", "tf_mean_fullcot", "tf_jitter",
                "memorize_original", "shortcut_ids"});
    SimProfile& p = cfg.sim.profile;
    p.p_shortcut = probability_field(s, "p_shortcut", p.p_shortcut);
    p.p_clean = probability_field(s, "p_clean", p.p_clean);
    p.p_fullcot = probability_field(s, "p_fullcot", p.p_fullcot);
    p.tf_mean_shortcut = probability_field(s, "tf_mean_shortcut", p.tf_mean_shortcut);
    p.tf_mean_clean = probability_field(s, "tf_mean_clean", p.tf_mean_clean);
    p.tf_mean_fullcot = probability_field(s, "tf_mean_fullcot", p.tf_mean_fullcot);
    p.tf_jitter = probability_field(s, "tf_jitter", p.tf_jitter);
    cfg.sim.memorize_original = s.value("memorize_original", true);
    if (s.contains("shortcut_ids")) {
      for (const auto& id : s.at("shortcut_ids")) {
        cfg.sim.shortcut_ids.push_back(id.get<std::string>());
      }
    }
  }

  cfg.record_timestamp = j.value("record_timestamp", false);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return run_config_from_json(j);
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["access"] = to_string(cfg.access);
  j["regime"] = to_string(cfg.regime);
  j["backend"] = {{"kind", cfg.backend.kind},
                  {"model", cfg.backend.model_id},
                  {"endpoint", cfg.backend.endpoint},
                  {"api_key_env", cfg.backend.api_key_env},
                  {"supports_prefill", cfg.backend.supports_prefill},
                  {"supports_echo_logprobs", cfg.backend.supports_echo_logprobs},
                  {"max_retries", cfg.backend.max_retries},
                  {"backoff_base_ms", cfg.backend.backoff_base_ms},
                  {"timeout_s", cfg.backend.timeout_s}};
  j["datasets"] = {{"original", cfg.original_path},
                   {"reference", cfg.reference_path},
                   {"paraphrased", cfg.paraphrased_path}};
  json metrics = json::array();
  for (Metric m : cfg.metrics) metrics.push_back(to_string(m));
  j["metrics"] = metrics;
  j["stats"] = {{"bootstrap_iterations", cfg.stats.bootstrap_iterations},
                {"prior", cfg.stats.prior}};
  j["concurrency"] = cfg.concurrency;
  j["cache_dir"] = cfg.cache_dir;
  j["sweep_fractions"] = cfg.sweep_fractions;
  const SimProfile& p = cfg.sim.profile;
  j["simulator"] = {{"p_shortcut", p.p_shortcut},
                    {"p_clean", p.p_clean},
                    {"p_fullcot", p.p_fullcot},
                    {"tf_mean_shortcut", p.tf_mean_shortcut},
                    {"tf_mean_clean", p.tf_mean_clean},
                    {"tf_mean_fullcot", p.tf_mean_fullcot},
                    {"tf_jitter", p.tf_jitter},
                    {"memorize_original", cfg.sim.memorize_original},
                    {"shortcut_ids", cfg.sim.shortcut_ids}};
  j["record_timestamp"] = cfg.record_timestamp;
  return j;
}

void resolve_metrics(RunConfig& cfg, std::vector<Metric>* dropped) {
  bool logit_access = cfg.access == AccessMode::OpenWeight;
  bool logit_backend =
      cfg.backend.kind == "simulator" || cfg.backend.supports_echo_logprobs;
  bool con_possible = cfg.regime == ProbeRegime::ZeroCoT;

  if (cfg.metrics_explicit) {
    for (Metric m : cfg.metrics) {
      if (is_logit_metric(m) && !logit_access) {
        throw ConfigError(to_string(m) +
                          " needs token logprobs; closed-source access "
                          "exposes none");
      }
      if (is_logit_metric(m) && !logit_backend) {
        throw ConfigError(to_string(m) +
                          " needs echo logprobs, which this backend cannot "
                          "provide");
      }
      if (m == Metric::Con && !con_possible) {
        throw ConfigError(
            "consistency compares zero-CoT against full-CoT output; the "
            "full-CoT regime has no zero-CoT side");
      }
    }
  } else {
    std::vector<Metric> defaults;
    if (logit_access) {
      defaults = {Metric::Acc, Metric::Con, Metric::Pfirst, Metric::Pall};
    } else {
      defaults = {Metric::Acc, Metric::Con};
    }
    cfg.metrics.clear();
    for (Metric m : defaults) {
      bool keep = true;
      if (is_logit_metric(m) && !logit_backend) keep = false;
      if (m == Metric::Con && !con_possible) keep = false;
      if (keep) {
        cfg.metrics.push_back(m);
      } else if (dropped) {
        dropped->push_back(m);
      }
    }
  }

  std::vector<Metric> unique;
  for (Metric m : cfg.metrics) {
    if (std::find(unique.begin(), unique.end(), m) == unique.end()) {
      unique.push_back(m);
    }
  }
  cfg.metrics = unique;
  if (cfg.metrics.empty()) throw ConfigError("no metrics left to evaluate");

  if (!cfg.sweep_fractions.empty()) {
    if (cfg.access == AccessMode::ClosedSource) {
      throw ConfigError(
          "the truncation sweep forces partial reasoning via assistant "
          "prefill, which closed-source access cannot do");
    }
    if (cfg.regime == ProbeRegime::FullCoT) {
      throw ConfigError("the truncation sweep requires the zero-CoT regime");
    }
    if (cfg.backend.kind == "http" && !cfg.backend.supports_prefill) {
      throw ConfigError(
          "the truncation sweep needs assistant prefill support on the "
          "backend");
    }
  }
}

namespace {

struct Built {
  std::shared_ptr<Backend> outer;
  SimBackend* sim = nullptr;
  CachedBackend* cache = nullptr;
};

Built make_backend(const RunConfig& cfg, const Dataset& original,
                   const Dataset& reference, const Dataset* paraphrased) {
  Built b;
  std::shared_ptr<Backend> inner;
  if (cfg.backend.kind == "simulator") {
    SimProfile p = cfg.sim.profile;
    p.seed = mix64(cfg.seed, fnv1a64("simulator"));
    if (!cfg.sim.shortcut_ids.empty()) {
      std::unordered_set<std::string> wanted(cfg.sim.shortcut_ids.begin(),
                                             cfg.sim.shortcut_ids.end());
      for (const auto& item : original.items) {
        if (wanted.count(item.id)) {
          p.shortcut_ids.insert(item.id);
          p.memorized_questions.insert(fnv1a64(item.question));
        }
      }
    } else if (cfg.sim.memorize_original) {
      p.memorize(original);
    }
    auto sim = std::make_shared<SimBackend>(std::move(p));
    sim->observe(original);
    sim->observe(reference);
    if (paraphrased) sim->observe(*paraphrased);
    b.sim = sim.get();
    inner = std::move(sim);
  } else {
    inner = std::make_shared<HttpBackend>(cfg.backend);
  }
  if (!cfg.cache_dir.empty()) {
    auto cache = std::make_shared<CachedBackend>(std::move(inner), cfg.cache_dir);
    b.cache = cache.get();
    b.outer = std::move(cache);
  } else {
    b.outer = std::move(inner);
  }
  return b;
}

constexpr int kForcedMaxTokens = 256;   // a boxed answer and its closer
constexpr int kFullCotMaxTokens = 2048; // room for the reasoning chain

ModelRequest to_request(const RunConfig& cfg, const ProbePrompt& prompt,
                        bool want_full_budget) {
  ModelRequest r;
  r.model_id = cfg.backend.model_id;
  r.messages = {{"user", prompt.user_text}};
  r.assistant_prefill = prompt.assistant_prefill;
  r.decoding.temperature = 0.0;
  r.decoding.max_tokens = want_full_budget ? kFullCotMaxTokens : kForcedMaxTokens;
  return r;
}

// Everything recorded about one item on one dataset side.
struct SideProbe {
  std::string raw;
  ExtractedAnswer ext;
  bool compliant = false;
  bool prefill_supported = true;
  bool has_full = false;
  std::string full_raw;
  ExtractedAnswer full_ext;
  ItemMetrics im;
};

SideProbe probe_item(const RunConfig& cfg, Backend& backend,
                     const BenchmarkItem& item, bool want_con,
                     bool want_logit) {
  SideProbe out;
  out.im.id = item.id;

  ProbePrompt primary = cfg.regime == ProbeRegime::ZeroCoT
                            ? build_zero_cot(item, cfg.access)
                            : build_full_cot(item);
  ModelRequest req =
      to_request(cfg, primary, cfg.regime == ProbeRegime::FullCoT);
  ModelResponse resp = backend.complete(req);
  out.raw = resp.text;
  out.prefill_supported = resp.prefill_supported;

  if (cfg.regime == ProbeRegime::ZeroCoT) {
    // A prefill downgrade mid-run flips the wire format from "continues
    // inside the box" to "emits its own \boxed{...}".
    bool prefilled = primary.assistant_prefill.has_value() &&
                     resp.prefill_supported;
    out.ext = extract_boxed(resp.text, prefilled);
    out.compliant = is_zero_cot_compliant(
        resp.text,
        prefilled ? PromptMode::ZeroCoTPrefill : PromptMode::ZeroCoTInstruction);
  } else {
    out.ext = extract_boxed(resp.text);
    out.compliant = true;
  }
  out.im.zero_cot_found = out.ext.status == ExtractStatus::Found;
  out.im.acc = accuracy(out.ext, item.answer);

  if (want_con) {
    ProbePrompt full = build_full_cot(item);
    ModelResponse full_resp = backend.complete(to_request(cfg, full, true));
    out.has_full = true;
    out.full_raw = full_resp.text;
    out.full_ext = extract_boxed(full_resp.text);
    out.im.full_cot_found = out.full_ext.status == ExtractStatus::Found;
    out.im.con = consistency(out.ext, out.full_ext);
  }

  if (want_logit) {
    TeacherForceResult tf = backend.teacher_force(req, item.answer);
    out.im.p_first = first_token_prob(tf.logprobs);
    out.im.p_all = all_token_prob(tf.logprobs);
  }
  return out;
}

json probe_record(const std::string& side, const BenchmarkItem& item,
                  const SideProbe& p, bool zero_cot_regime) {
  json r;
  r["id"] = item.id;
  r["side"] = side;
  r["raw"] = p.raw;
  r["answer"] = p.ext.raw;
  r["normalized"] = p.ext.normalized;
  r["status"] = to_string(p.ext.status);
  if (zero_cot_regime) r["compliant"] = p.compliant;
  if (p.has_full) {
    r["full_raw"] = p.full_raw;
    r["full_answer"] = p.full_ext.raw;
    r["full_status"] = to_string(p.full_ext.status);
  }
  r["acc"] = *p.im.acc;
  if (p.im.con) r["con"] = *p.im.con;
  if (p.im.p_first) r["p_first"] = *p.im.p_first;
  if (p.im.p_all) r["p_all"] = *p.im.p_all;
  return r;
}

double compliance_rate(const std::vector<SideProbe>& probes) {
  if (probes.empty()) return 0.0;
  size_t ok = 0;
  for (const auto& p : probes) ok += p.compliant ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(probes.size());
}

bool all_prefill_supported(const std::vector<SideProbe>& probes) {
  for (const auto& p : probes) {
    if (!p.prefill_supported) return false;
  }
  return true;
}

std::vector<VariantRow> score_side(const RunConfig& cfg,
                                   const std::string& side,
                                   const std::vector<SideProbe>& eval_side,
                                   const std::vector<SideProbe>& ref_side) {
  std::vector<VariantRow> rows;
  for (Metric m : cfg.metrics) {
    std::vector<std::optional<double>> ev, rv;
    ev.reserve(eval_side.size());
    rv.reserve(ref_side.size());
    for (const auto& p : eval_side) ev.push_back(p.im.get(m));
    for (const auto& p : ref_side) rv.push_back(p.im.get(m));
    MetricSeries series = build_series(m, ev, rv);

    StatsConfig sc = cfg.stats;
    sc.seed = mix64(cfg.seed, fnv1a64("stats:" + side + ":" + to_string(m)));

    VariantRow row;
    row.metric = m;
    row.s = series.mean_original();
    row.s_ref = series.mean_reference();
    row.excluded_pairs = series.excluded_pairs;
    row.outcome = run_test(series, sc);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<SweepRow> sweep_with_backend(const RunConfig& cfg, Backend& backend,
                                         const std::vector<ItemPair>& pairs,
                                         const std::vector<double>& fractions) {
  std::vector<SweepRow> table;
  for (double f : fractions) {
    std::vector<double> acc_orig(pairs.size()), acc_ref(pairs.size());
    run_parallel(pairs.size(), cfg.concurrency, [&](size_t i) {
      const auto& pr = pairs[i];
      for (int side = 0; side < 2; ++side) {
        const BenchmarkItem& item = side == 0 ? pr.original : pr.reference;
        ProbePrompt prompt = truncate_cot(item, f);
        ModelResponse resp =
            backend.complete(to_request(cfg, prompt, false));
        ExtractedAnswer ext = extract_boxed(resp.text, true);
        (side == 0 ? acc_orig : acc_ref)[i] = accuracy(ext, item.answer);
      }
    });
    SweepRow row;
    row.fraction = f;
    for (size_t i = 0; i < pairs.size(); ++i) {
      row.acc_original += acc_orig[i];
      row.acc_reference += acc_ref[i];
    }
    row.acc_original /= static_cast<double>(pairs.size());
    row.acc_reference /= static_cast<double>(pairs.size());
    row.gap = row.acc_original - row.acc_reference;
    table.push_back(row);
  }
  return table;
}

}  // namespace

AuditReport run_audit(const RunConfig& cfg, RunStats* stats) {
  if (cfg.original_path.empty() || cfg.reference_path.empty()) {
    throw ConfigError("datasets.original and datasets.reference are required");
  }
  Dataset original =
      load_dataset(cfg.original_path, Variant::Original);
  Dataset reference =
      load_dataset(cfg.reference_path, Variant::Reference);
  if (!cfg.paraphrased_path.empty()) {
    Dataset paraphrased =
        load_dataset(cfg.paraphrased_path, Variant::Paraphrased);
    return run_audit(cfg, original, reference, &paraphrased, stats);
  }
  return run_audit(cfg, original, reference, nullptr, stats);
}

AuditReport run_audit(const RunConfig& config, const Dataset& original,
                      const Dataset& reference, const Dataset* paraphrased,
                      RunStats* stats) {
  RunConfig cfg = config;
  std::vector<Metric> dropped;
  resolve_metrics(cfg, &dropped);

  // Pair by id. With a paraphrased side present, only ids found in all
  // three datasets survive, so every comparison shares one reference slice.
  std::unordered_map<std::string, const BenchmarkItem*> ref_by_id, para_by_id;
  for (const auto& item : reference.items) ref_by_id[item.id] = &item;
  if (paraphrased) {
    for (const auto& item : paraphrased->items) para_by_id[item.id] = &item;
  }

  std::vector<ItemPair> pairs;            // original vs reference
  std::vector<const BenchmarkItem*> para_items;  // aligned with pairs
  std::vector<Exclusion> exclusions;
  std::unordered_set<std::string> kept;
  for (const auto& item : original.items) {
    auto ref = ref_by_id.find(item.id);
    if (ref == ref_by_id.end()) {
      exclusions.push_back({item.id, "no reference counterpart"});
      continue;
    }
    if (paraphrased) {
      auto para = para_by_id.find(item.id);
      if (para == para_by_id.end()) {
        exclusions.push_back({item.id, "no paraphrased counterpart"});
        continue;
      }
      para_items.push_back(para->second);
    }
    kept.insert(item.id);
    pairs.push_back({item, *ref->second});
  }
  // Ids absent from the original get one root-cause entry; ids whose
  // original was itself excluded are already explained above.
  std::unordered_set<std::string> orig_ids, noted;
  for (const auto& item : original.items) orig_ids.insert(item.id);
  for (const auto& item : reference.items) {
    if (!kept.count(item.id) && !orig_ids.count(item.id) &&
        noted.insert(item.id).second) {
      exclusions.push_back({item.id, "no original counterpart"});
    }
  }
  if (paraphrased) {
    for (const auto& item : paraphrased->items) {
      if (!kept.count(item.id) && !orig_ids.count(item.id) &&
          noted.insert(item.id).second) {
        exclusions.push_back({item.id, "no original counterpart"});
      }
    }
  }
  if (pairs.empty()) throw DataError("no pairable items across the datasets");

  bool want_con =
      std::find(cfg.metrics.begin(), cfg.metrics.end(), Metric::Con) !=
      cfg.metrics.end();
  bool want_logit = false;
  for (Metric m : cfg.metrics) want_logit = want_logit || is_logit_metric(m);

  Built backend = make_backend(cfg, original, reference, paraphrased);

  size_t n = pairs.size();
  std::vector<SideProbe> orig_probes(n), ref_probes(n);
  std::vector<SideProbe> para_probes(paraphrased ? n : 0);
  size_t sides = paraphrased ? 3 : 2;
  run_parallel(n * sides, cfg.concurrency, [&](size_t job) {
    size_t i = job / sides;
    size_t side = job % sides;
    if (side == 0) {
      orig_probes[i] =
          probe_item(cfg, *backend.outer, pairs[i].original, want_con, want_logit);
    } else if (side == 1) {
      ref_probes[i] =
          probe_item(cfg, *backend.outer, pairs[i].reference, want_con, want_logit);
    } else {
      para_probes[i] =
          probe_item(cfg, *backend.outer, *para_items[i], want_con, want_logit);
    }
  });

  AuditReport report;
  report.seed = cfg.seed;
  report.config_digest = digest128_hex(run_config_to_json(cfg).dump());

  report.results.push_back(
      {"original", score_side(cfg, "original", orig_probes, ref_probes)});
  if (paraphrased) {
    report.results.push_back(
        {"paraphrased", score_side(cfg, "paraphrased", para_probes, ref_probes)});
  }

  if (!cfg.sweep_fractions.empty()) {
    report.sweep =
        sweep_with_backend(cfg, *backend.outer, pairs, cfg.sweep_fractions);
  }

  json meta;
  meta["access"] = to_string(cfg.access);
  meta["regime"] = to_string(cfg.regime);
  meta["backend"] = {{"kind", cfg.backend.kind}, {"model", cfg.backend.model_id}};
  json datasets;
  datasets["original"] = {{"name", original.name}, {"size", original.size()}};
  datasets["reference"] = {{"name", reference.name}, {"size", reference.size()}};
  if (paraphrased) {
    datasets["paraphrased"] = {{"name", paraphrased->name},
                               {"size", paraphrased->size()}};
  }
  meta["datasets"] = datasets;
  meta["pairs"] = n;
  json excl = json::array();
  for (const auto& e : exclusions) {
    excl.push_back({{"id", e.id}, {"reason", e.reason}});
  }
  meta["exclusions"] = excl;
  json metric_names = json::array();
  for (Metric m : cfg.metrics) metric_names.push_back(to_string(m));
  meta["metrics"] = metric_names;
  json dropped_names = json::array();
  for (Metric m : dropped) dropped_names.push_back(to_string(m));
  meta["metrics_dropped"] = dropped_names;
  meta["prefill_supported"] = all_prefill_supported(orig_probes) &&
                              all_prefill_supported(ref_probes) &&
                              all_prefill_supported(para_probes);
  if (cfg.regime == ProbeRegime::ZeroCoT) {
    json compliance;
    compliance["original"] = compliance_rate(orig_probes);
    compliance["reference"] = compliance_rate(ref_probes);
    if (paraphrased) compliance["paraphrased"] = compliance_rate(para_probes);
    meta["compliance"] = compliance;
  }
  meta["policies"] = {
      {"bootstrap", "paired mean-gap resample; ties count toward the null"},
      {"mcnemar", "exact one-sided binomial tail over discordant pairs"},
      {"consistency_missing_full_cot", "scored 0 and flagged"},
      {"teacher_forcing", "target is the item's own ground-truth answer"}};
  if (cfg.record_timestamp) meta["generated_at"] = utc_timestamp();
  report.metadata = std::move(meta);

  bool zero_regime = cfg.regime == ProbeRegime::ZeroCoT;
  for (size_t i = 0; i < n; ++i) {
    report.items.push_back(
        probe_record("original", pairs[i].original, orig_probes[i], zero_regime));
  }
  for (size_t i = 0; i < n; ++i) {
    report.items.push_back(
        probe_record("reference", pairs[i].reference, ref_probes[i], zero_regime));
  }
  for (size_t i = 0; i < para_probes.size(); ++i) {
    report.items.push_back(
        probe_record("paraphrased", *para_items[i], para_probes[i], zero_regime));
  }

  if (stats) {
    if (backend.sim) {
      stats->complete_calls = backend.sim->complete_calls();
      stats->teacher_force_calls = backend.sim->teacher_force_calls();
    }
    if (backend.cache) stats->cache = backend.cache->stats();
  }
  return report;
}

std::vector<SweepRow> run_truncation_sweep(const RunConfig& config,
                                           const Dataset& original,
                                           const Dataset& reference,
                                           const std::vector<double>& fractions) {
  RunConfig cfg = config;
  resolve_metrics(cfg, nullptr);
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw ConfigError("sweep fractions must lie in [0, 1]");
    }
  }
  PairingResult paired = pair_datasets(original, reference);
  Built backend = make_backend(cfg, original, reference, nullptr);
  return sweep_with_backend(cfg, *backend.outer, paired.pairs, fractions);
}

// --------------------------------------------------------------------------
// Serialization.

namespace {

json outcome_to_json(const TestOutcome& o) {
  return {{"test", to_string(o.test_used)},
          {"p_value", o.p_value},
          {"p_is_lower_bound", o.p_is_lower_bound},
          {"bf10", o.bf10},
          {"prior", o.prior},
          {"c_cont", o.c_cont},
          {"diagnostics",
           {{"mean_gap", o.diagnostics.mean_gap},
            {"pairs", o.diagnostics.pairs},
            {"bootstrap_iterations", o.diagnostics.bootstrap_iterations},
            {"discordant_b", o.diagnostics.discordant_b},
            {"discordant_c", o.diagnostics.discordant_c}}}};
}

TestOutcome outcome_from_json(const json& j) {
  TestOutcome o;
  o.test_used = j.at("test").get<std::string>() == "bootstrap"
                    ? TestKind::Bootstrap
                    : TestKind::McNemar;
  o.p_value = j.at("p_value").get<double>();
  o.p_is_lower_bound = j.at("p_is_lower_bound").get<bool>();
  o.bf10 = j.at("bf10").get<double>();
  o.prior = j.at("prior").get<double>();
  o.c_cont = j.at("c_cont").get<double>();
  const json& d = j.at("diagnostics");
  o.diagnostics.mean_gap = d.at("mean_gap").get<double>();
  o.diagnostics.pairs = d.at("pairs").get<size_t>();
  o.diagnostics.bootstrap_iterations =
      d.at("bootstrap_iterations").get<size_t>();
  o.diagnostics.discordant_b = d.at("discordant_b").get<size_t>();
  o.diagnostics.discordant_c = d.at("discordant_c").get<size_t>();
  return o;
}

}  // namespace

json AuditReport::to_json() const {
  json j;
  j["schema_version"] = schema_version;
  j["config_digest"] = config_digest;
  j["seed"] = seed;
  j["rng"] = rng;
  j["metadata"] = metadata;
  json sides = json::array();
  for (const auto& side : results) {
    json rows = json::array();
    for (const auto& row : side.rows) {
      json r;
      r["metric"] = to_string(row.metric);
      r["s"] = row.s;
      r["s_ref"] = row.s_ref;
      r["excluded_pairs"] = row.excluded_pairs;
      r["test"] = outcome_to_json(row.outcome);
      r["test"]["metric"] = to_string(row.outcome.metric);
      rows.push_back(std::move(r));
    }
    sides.push_back({{"side", side.side}, {"rows", rows}});
  }
  j["results"] = sides;
  json sweep_rows = json::array();
  for (const auto& row : sweep) {
    sweep_rows.push_back({{"fraction", row.fraction},
                          {"acc_original", row.acc_original},
                          {"acc_reference", row.acc_reference},
                          {"gap", row.gap}});
  }
  j["sweep"] = sweep_rows;
  j["items"] = items;
  return j;
}

AuditReport AuditReport::from_json(const json& j) {
  AuditReport r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != 1) {
    throw DataError("unsupported report schema version");
  }
  r.config_digest = j.at("config_digest").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  r.rng = j.at("rng").get<std::string>();
  r.metadata = j.at("metadata");
  for (const auto& side : j.at("results")) {
    SideResults s;
    s.side = side.at("side").get<std::string>();
    for (const auto& row : side.at("rows")) {
      VariantRow v;
      v.metric = metric_from_string(row.at("metric").get<std::string>());
      v.s = row.at("s").get<double>();
      v.s_ref = row.at("s_ref").get<double>();
      v.excluded_pairs = row.at("excluded_pairs").get<size_t>();
      v.outcome = outcome_from_json(row.at("test"));
      v.outcome.metric = metric_from_string(
          row.at("test").at("metric").get<std::string>());
      s.rows.push_back(std::move(v));
    }
    r.results.push_back(std::move(s));
  }
  for (const auto& row : j.at("sweep")) {
    r.sweep.push_back({row.at("fraction").get<double>(),
                       row.at("acc_original").get<double>(),
                       row.at("acc_reference").get<double>(),
                       row.at("gap").get<double>()});
  }
  r.items = j.at("items");
  return r;
}

namespace {

std::string metric_label(Metric m) {
  switch (m) {
    case Metric::Acc: return "Acc (%)";
    case Metric::Con: return "Con (%)";
    case Metric::Pfirst: return "P_first";
    case Metric::Pall: return "P_all";
  }
  return "";
}

std::string render_mean(Metric m, double v) {
  if (kind_of(m) == MetricKind::Discrete) return fmt("%.2f", v * 100.0);
  return fmt("%.3f", v);
}

std::string render_confidence(const TestOutcome& o) {
  if (o.p_is_lower_bound) return ">0.998";
  return fmt("%.3f", o.c_cont);
}

}  // namespace

std::string render_report(const AuditReport& report, ReportFormat format) {
  if (format == ReportFormat::JSON) {
    return report.to_json().dump(2) + "\n";
  }

  std::string md = "# Contamination audit\n\n";
  md += "seed " + std::to_string(report.seed);
  if (report.metadata.contains("pairs")) {
    md += " | pairs " + std::to_string(report.metadata["pairs"].get<size_t>());
  }
  if (report.metadata.contains("backend")) {
    md += " | backend " +
          report.metadata["backend"]["kind"].get<std::string>() + " (" +
          report.metadata["backend"]["model"].get<std::string>() + ")";
  }
  if (report.metadata.contains("access")) {
    md += " | access " + report.metadata["access"].get<std::string>();
  }
  if (report.metadata.contains("regime")) {
    md += " | regime " + report.metadata["regime"].get<std::string>();
  }
  md += "\n";

  for (const auto& side : report.results) {
    md += "\n## " + side.side + " vs reference\n\n";
    md += "| Metric | S_ref | S | C_cont |\n";
    md += "| --- | --- | --- | --- |\n";
    for (const auto& row : side.rows) {
      md += "| " + metric_label(row.metric) + " | " +
            render_mean(row.metric, row.s_ref) + " | " +
            render_mean(row.metric, row.s) + " | " +
            render_confidence(row.outcome) + " |\n";
    }
  }

  if (!report.sweep.empty()) {
    md += "\n## Truncation sweep\n\n";
    md += "| Fraction | Acc original (%) | Acc reference (%) | Gap (%) |\n";
    md += "| --- | --- | --- | --- |\n";
    for (const auto& row : report.sweep) {
      md += "| " + fmt("%.2f", row.fraction) + " | " +
            fmt("%.2f", row.acc_original * 100.0) + " | " +
            fmt("%.2f", row.acc_reference * 100.0) + " | " +
            fmt("%.2f", row.gap * 100.0) + " |\n";
    }
  }
  return md;
}

}  // namespace zcp
