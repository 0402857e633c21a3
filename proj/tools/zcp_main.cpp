// Command-line front end. Subcommands mirror the pipeline stages: ingest
// datasets, generate reference/paraphrase variants, probe, analyze, render
// reports, run truncation sweeps. Every stage reads and writes plain files,
// so long runs resume from the model-call cache rather than from flags.

#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "zcp/audit.hpp"
#include "zcp/backend.hpp"
#include "zcp/corpus.hpp"
#include "zcp/errors.hpp"
#include "zcp/metrics.hpp"
#include "zcp/refgen.hpp"

namespace {

using nlohmann::json;

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw zcp::ConfigError("cannot open output file: " + path);
  out << content;
  if (!out) throw zcp::ConfigError("failed writing output file: " + path);
}

json load_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw zcp::ConfigError(std::string("cannot open ") + what + ": " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw zcp::ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
  return j;
}

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(csv);
  while (std::getline(in, cur, ',')) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

// Flag-level overrides shared by probe/analyze/sweep. Unset fields leave the
// config file value alone.
struct RunOverrides {
  std::optional<uint64_t> seed;
  std::optional<std::string> cache_dir;
  std::optional<size_t> concurrency;
  std::optional<std::string> original;
  std::optional<std::string> reference;
  std::optional<std::string> paraphrased;
  std::optional<std::string> metrics_csv;
  std::optional<double> prior;
  std::optional<size_t> bootstrap_iterations;
  std::optional<std::string> access;
  std::optional<std::string> regime;
};

void add_run_overrides(CLI::App* sub, RunOverrides& ov) {
  sub->add_option("--seed", ov.seed, "Override the run seed");
  sub->add_option("--cache-dir", ov.cache_dir, "Override the model-call cache directory");
  sub->add_option("--concurrency", ov.concurrency, "Override the probe fan-out bound");
  sub->add_option("--original", ov.original, "Override the original dataset path");
  sub->add_option("--reference", ov.reference, "Override the reference dataset path");
  sub->add_option("--paraphrased", ov.paraphrased, "Override the paraphrased dataset path");
  sub->add_option("--metrics", ov.metrics_csv,
                  "Comma-separated metric list (acc,con,p_first,p_all)");
  sub->add_option("--prior", ov.prior, "Override the contamination prior");
  sub->add_option("--bootstrap-iterations", ov.bootstrap_iterations,
                  "Override the bootstrap iteration count");
  sub->add_option("--access", ov.access, "Override access mode (open_weight|closed_source)");
  sub->add_option("--regime", ov.regime, "Override probe regime (zero_cot|full_cot)");
}

void apply_overrides(zcp::RunConfig& cfg, const RunOverrides& ov) {
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.cache_dir) cfg.cache_dir = *ov.cache_dir;
  if (ov.concurrency) {
    if (*ov.concurrency == 0) throw zcp::ConfigError("concurrency must be positive");
    cfg.concurrency = *ov.concurrency;
  }
  if (ov.original) cfg.original_path = *ov.original;
  if (ov.reference) cfg.reference_path = *ov.reference;
  if (ov.paraphrased) cfg.paraphrased_path = *ov.paraphrased;
  if (ov.metrics_csv) {
    cfg.metrics.clear();
    for (const auto& name : split_csv(*ov.metrics_csv)) {
      cfg.metrics.push_back(zcp::metric_from_string(name));
    }
    cfg.metrics_explicit = true;
  }
  if (ov.prior) {
    if (!(*ov.prior > 0.0 && *ov.prior < 1.0)) {
      throw zcp::ConfigError("prior must lie strictly inside (0, 1)");
    }
    cfg.stats.prior = *ov.prior;
  }
  if (ov.bootstrap_iterations) {
    if (*ov.bootstrap_iterations == 0) {
      throw zcp::ConfigError("bootstrap_iterations must be positive");
    }
    cfg.stats.bootstrap_iterations = *ov.bootstrap_iterations;
  }
  if (ov.access) cfg.access = zcp::access_from_string(*ov.access);
  if (ov.regime) cfg.regime = zcp::regime_from_string(*ov.regime);
}

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
  std::string in;
  std::string out;
  std::string variant = "original";
  std::string name;
  std::optional<size_t> sample_n;
  std::optional<size_t> per_subject;
  std::string subjects_csv;
  uint64_t seed = 0;
  std::string split_c;
  std::string split_u;
};

int do_ingest(const IngestArgs& a) {
  if (a.out.empty() && a.split_c.empty()) {
    throw zcp::ConfigError("ingest needs --out and/or --split-c/--split-u");
  }
  if (a.split_c.empty() != a.split_u.empty()) {
    throw zcp::ConfigError("--split-c and --split-u must be given together");
  }

  zcp::Dataset ds =
      zcp::load_dataset(a.in, zcp::variant_from_string(a.variant), a.name);
  size_t loaded = ds.size();

  if (a.sample_n || a.per_subject) {
    zcp::SamplePlan plan;
    plan.seed = a.seed;
    if (a.sample_n) {
      plan.kind = zcp::SamplePlan::Kind::Uniform;
      plan.n = *a.sample_n;
    } else {
      plan.kind = zcp::SamplePlan::Kind::Stratified;
      plan.per_subject = *a.per_subject;
      plan.subjects = split_csv(a.subjects_csv);
    }
    ds = zcp::sample(ds, plan);
  }

  if (!a.out.empty()) zcp::save_dataset(ds, a.out);
  std::cout << "loaded " << loaded << " items; kept " << ds.size() << "\n";

  if (!a.split_c.empty()) {
    auto [c, u] = zcp::split_c_u(ds, a.seed);
    zcp::save_dataset(c, a.split_c);
    zcp::save_dataset(u, a.split_u);
    std::cout << "split " << c.size() << " + " << u.size() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// genref / paraphrase

struct GenArgs {
  std::string config;
  std::string in;
  std::string out;
  std::string log;
  std::optional<size_t> concurrency;
  size_t variants = 1;  // paraphrase only
};

struct GenSetup {
  std::vector<std::shared_ptr<zcp::Backend>> backends;  // generator, judge A, judge B
  zcp::ConsensusOptions opts;
  size_t concurrency = 1;
};

GenSetup load_gen_setup(const std::string& config_path) {
  json j = load_json_file(config_path, "config file");
  if (!j.is_object()) throw zcp::ConfigError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::vector<std::string> known = {
        "generator",   "judge_a",    "judge_b",  "max_retries", "temperature",
        "max_tokens",  "cache_dir",  "concurrency", "run_salt"};
    bool ok = false;
    for (const auto& k : known) ok = ok || it.key() == k;
    if (!ok) throw zcp::ConfigError("unknown config key: \"" + it.key() + "\"");
  }
  for (const char* role : {"generator", "judge_a", "judge_b"}) {
    if (!j.contains(role)) {
      throw zcp::ConfigError(std::string("config needs a \"") + role +
                             "\" backend block");
    }
  }

  GenSetup setup;
  std::string cache_dir = j.value("cache_dir", std::string());
  std::vector<std::string> model_ids;
  for (const char* role : {"generator", "judge_a", "judge_b"}) {
    zcp::BackendConfig bc = zcp::backend_config_from_json(j.at(role), role);
    if (bc.kind != "http") {
      throw zcp::ConfigError(std::string(role) +
                             " must be an http backend; the simulator cannot "
                             "write new problems");
    }
    model_ids.push_back(bc.model_id);
    std::shared_ptr<zcp::Backend> b = std::make_shared<zcp::HttpBackend>(bc);
    if (!cache_dir.empty()) {
      b = std::make_shared<zcp::CachedBackend>(b, cache_dir);
    }
    setup.backends.push_back(std::move(b));
  }

  setup.opts.generator_model = model_ids[0];
  setup.opts.judge_a_model = model_ids[1];
  setup.opts.judge_b_model = model_ids[2];
  if (j.contains("max_retries")) {
    setup.opts.max_retries = j.at("max_retries").get<size_t>();
  }
  if (j.contains("temperature")) {
    setup.opts.generator_temperature = j.at("temperature").get<double>();
    if (setup.opts.generator_temperature < 0.0) {
      throw zcp::ConfigError("temperature must be nonnegative");
    }
  }
  if (j.contains("max_tokens")) {
    setup.opts.max_tokens = j.at("max_tokens").get<int>();
    if (setup.opts.max_tokens <= 0) {
      throw zcp::ConfigError("max_tokens must be positive");
    }
  }
  setup.opts.run_salt = j.value("run_salt", std::string());
  if (j.contains("concurrency")) {
    setup.concurrency = j.at("concurrency").get<size_t>();
    if (setup.concurrency == 0) {
      throw zcp::ConfigError("concurrency must be positive");
    }
  }
  return setup;
}

// Inserts a suffix before the extension: out.jsonl + "_v2" -> out_v2.jsonl.
std::string with_suffix(const std::string& path, const std::string& suffix) {
  size_t slash = path.find_last_of('/');
  size_t dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
    return path + suffix;
  }
  return path.substr(0, dot) + suffix + path.substr(dot);
}

int do_generate(const GenArgs& a, zcp::GenKind kind) {
  GenSetup setup = load_gen_setup(a.config);
  if (a.concurrency) {
    if (*a.concurrency == 0) throw zcp::ConfigError("concurrency must be positive");
    setup.concurrency = *a.concurrency;
  }
  size_t variants = (kind == zcp::GenKind::EvasiveParaphrase) ? a.variants : 1;
  if (variants == 0) throw zcp::ConfigError("--variants must be positive");

  zcp::Dataset source = zcp::load_dataset(a.in, zcp::Variant::Original);

  std::vector<std::string> log_lines;
  for (size_t v = 1; v <= variants; ++v) {
    zcp::ConsensusOptions opts = setup.opts;
    if (variants > 1) {
      opts.run_salt += (opts.run_salt.empty() ? "" : ":");
      opts.run_salt += "v" + std::to_string(v);
    }
    zcp::ReferenceRun run = zcp::generate_reference(
        source, kind, *setup.backends[0], *setup.backends[1],
        *setup.backends[2], opts, setup.concurrency);

    std::string out_path =
        (variants > 1) ? with_suffix(a.out, "_v" + std::to_string(v)) : a.out;
    zcp::save_dataset(run.dataset, out_path);
    std::cout << "variant " << v << ": accepted " << run.dataset.size() << "/"
              << source.size() << " (" << run.failures << " exhausted retries) -> "
              << out_path << "\n";

    for (const auto& line : run.log_lines) {
      if (variants > 1) {
        json entry = json::parse(line);
        entry["variant"] = v;
        log_lines.push_back(entry.dump());
      } else {
        log_lines.push_back(line);
      }
    }
  }

  if (!a.log.empty()) {
    std::string joined;
    for (const auto& line : log_lines) {
      joined += line;
      joined += '\n';
    }
    write_text_file(a.log, joined);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// probe / analyze / report / sweep

struct ProbeArgs {
  std::string config;
  std::string out;
  RunOverrides ov;
};

int do_probe(const ProbeArgs& a) {
  zcp::RunConfig cfg = zcp::load_run_config(a.config);
  apply_overrides(cfg, a.ov);
  zcp::RunStats stats;
  zcp::AuditReport report = zcp::run_audit(cfg, &stats);

  std::string lines;
  for (const auto& rec : report.items) {
    lines += rec.dump();
    lines += '\n';
  }
  write_text_file(a.out, lines);
  std::cout << "probed " << report.items.size() << " records ("
            << stats.complete_calls << " completions, "
            << stats.teacher_force_calls << " scored continuations)\n";
  return 0;
}

struct AnalyzeArgs {
  std::string config;
  std::string out;
  std::string markdown;
  RunOverrides ov;
};

int do_analyze(const AnalyzeArgs& a) {
  zcp::RunConfig cfg = zcp::load_run_config(a.config);
  apply_overrides(cfg, a.ov);
  zcp::RunStats stats;
  zcp::AuditReport report = zcp::run_audit(cfg, &stats);

  write_text_file(a.out, zcp::render_report(report, zcp::ReportFormat::JSON));
  if (!a.markdown.empty()) {
    write_text_file(a.markdown,
                    zcp::render_report(report, zcp::ReportFormat::Markdown));
  }

  std::cout << "wrote " << a.out << " (" << stats.complete_calls
            << " completions, cache hits " << stats.cache.hits << ")\n";
  for (const auto& side : report.results) {
    for (const auto& row : side.rows) {
      std::cout << side.side << " " << zcp::to_string(row.metric)
                << ": p=" << row.outcome.p_value
                << (row.outcome.p_is_lower_bound ? " (lower bound)" : "")
                << " C=" << row.outcome.c_cont << "\n";
    }
  }
  return 0;
}

struct ReportArgs {
  std::string in;
  std::string format = "md";
  std::string out;
};

int do_report(const ReportArgs& a) {
  if (a.format != "md" && a.format != "json") {
    throw zcp::ConfigError("--format must be md or json");
  }
  json j = load_json_file(a.in, "report file");
  zcp::AuditReport report = zcp::AuditReport::from_json(j);
  std::string rendered = zcp::render_report(
      report, a.format == "md" ? zcp::ReportFormat::Markdown
                               : zcp::ReportFormat::JSON);
  if (a.out.empty()) {
    std::cout << rendered;
  } else {
    write_text_file(a.out, rendered);
  }
  return 0;
}

struct SweepArgs {
  std::string config;
  std::string fractions_csv;
  std::string out;
  RunOverrides ov;
};

int do_sweep(const SweepArgs& a) {
  zcp::RunConfig cfg = zcp::load_run_config(a.config);
  apply_overrides(cfg, a.ov);
  if (!a.fractions_csv.empty()) {
    cfg.sweep_fractions.clear();
    for (const auto& tok : split_csv(a.fractions_csv)) {
      double v = 0.0;
      try {
        size_t used = 0;
        v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw zcp::ConfigError("bad sweep fraction: \"" + tok + "\"");
      }
      if (!(v >= 0.0 && v <= 1.0)) {
        throw zcp::ConfigError("sweep fractions must lie in [0, 1]");
      }
      cfg.sweep_fractions.push_back(v);
    }
  }
  if (cfg.sweep_fractions.empty()) {
    throw zcp::ConfigError("sweep needs fractions (config sweep_fractions or --fractions)");
  }
  if (cfg.original_path.empty() || cfg.reference_path.empty()) {
    throw zcp::ConfigError("sweep needs original and reference dataset paths");
  }

  zcp::Dataset original =
      zcp::load_dataset(cfg.original_path, zcp::Variant::Original);
  zcp::Dataset reference =
      zcp::load_dataset(cfg.reference_path, zcp::Variant::Reference);
  std::vector<zcp::SweepRow> rows =
      zcp::run_truncation_sweep(cfg, original, reference, cfg.sweep_fractions);

  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"fraction", r.fraction},
                   {"acc_original", r.acc_original},
                   {"acc_reference", r.acc_reference},
                   {"gap", r.gap}});
  }
  std::string rendered = out.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << rendered;
  } else {
    write_text_file(a.out, rendered);
    std::cout << "wrote " << a.out << " (" << rows.size() << " fractions)\n";
  }
  return 0;
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const zcp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const zcp::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const zcp::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const zcp::BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmark contamination audit: zero-CoT probes, paired "
               "reference sets, calibrated confidence"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "zcp 0.1.0");

  IngestArgs ingest_args;
  CLI::App* ingest = app.add_subcommand(
      "ingest", "Validate, sample, and split a JSONL dataset");
  ingest->add_option("--in", ingest_args.in, "Input dataset (JSONL)")->required();
  ingest->add_option("--out", ingest_args.out, "Output dataset path");
  ingest->add_option("--variant", ingest_args.variant,
                     "original|paraphrased|reference");
  ingest->add_option("--name", ingest_args.name, "Dataset name (default: file stem)");
  CLI::Option* opt_n =
      ingest->add_option("--sample-n", ingest_args.sample_n, "Uniform sample size");
  CLI::Option* opt_k = ingest->add_option("--per-subject", ingest_args.per_subject,
                                          "Stratified draw per subject");
  opt_n->excludes(opt_k);
  ingest->add_option("--subjects", ingest_args.subjects_csv,
                     "Comma-separated subject filter for --per-subject");
  ingest->add_option("--seed", ingest_args.seed, "Sampling/split seed");
  ingest->add_option("--split-c", ingest_args.split_c,
                     "Write the to-be-contaminated half here");
  ingest->add_option("--split-u", ingest_args.split_u,
                     "Write the held-out control half here");

  GenArgs genref_args;
  CLI::App* genref = app.add_subcommand(
      "genref", "Generate the isomorphically perturbed reference set");
  genref->add_option("--config", genref_args.config, "Generator/judge config (JSON)")
      ->required();
  genref->add_option("--in", genref_args.in, "Source dataset (JSONL)")->required();
  genref->add_option("--out", genref_args.out, "Output dataset path")->required();
  genref->add_option("--log", genref_args.log, "Generation log (JSON lines)");
  genref->add_option("--concurrency", genref_args.concurrency,
                     "Concurrent items in flight");

  GenArgs para_args;
  CLI::App* para = app.add_subcommand(
      "paraphrase", "Generate evasive paraphrase variants");
  para->add_option("--config", para_args.config, "Generator/judge config (JSON)")
      ->required();
  para->add_option("--in", para_args.in, "Source dataset (JSONL)")->required();
  para->add_option("--out", para_args.out, "Output dataset path")->required();
  para->add_option("--log", para_args.log, "Generation log (JSON lines)");
  para->add_option("--concurrency", para_args.concurrency,
                   "Concurrent items in flight");
  para->add_option("--variants", para_args.variants,
                   "Independent paraphrase variants to emit");

  ProbeArgs probe_args;
  CLI::App* probe = app.add_subcommand(
      "probe", "Run probes and dump per-item records (JSON lines)");
  probe->add_option("--config", probe_args.config, "Run config (JSON)")->required();
  probe->add_option("--out", probe_args.out, "Output records path")->required();
  add_run_overrides(probe, probe_args.ov);

  AnalyzeArgs analyze_args;
  CLI::App* analyze = app.add_subcommand(
      "analyze", "Full audit: probe, score, test, write the JSON report");
  analyze->add_option("--config", analyze_args.config, "Run config (JSON)")->required();
  analyze->add_option("--out", analyze_args.out, "Report output path")->required();
  analyze->add_option("--markdown", analyze_args.markdown,
                      "Also render a Markdown report here");
  add_run_overrides(analyze, analyze_args.ov);

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "Render a stored report");
  report->add_option("--in", report_args.in, "Report JSON path")->required();
  report->add_option("--format", report_args.format, "md|json");
  report->add_option("--out", report_args.out, "Output path (default: stdout)");

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Truncation sweep: gap vs. kept reasoning fraction");
  sweep->add_option("--config", sweep_args.config, "Run config (JSON)")->required();
  sweep->add_option("--fractions", sweep_args.fractions_csv,
                    "Comma-separated fractions in [0, 1]");
  sweep->add_option("--out", sweep_args.out, "Output path (default: stdout)");
  add_run_overrides(sweep, sweep_args.ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*ingest) return run_guarded([&] { return do_ingest(ingest_args); });
  if (*genref) {
    return run_guarded(
        [&] { return do_generate(genref_args, zcp::GenKind::IsomorphicPerturb); });
  }
  if (*para) {
    return run_guarded(
        [&] { return do_generate(para_args, zcp::GenKind::EvasiveParaphrase); });
  }
  if (*probe) return run_guarded([&] { return do_probe(probe_args); });
  if (*analyze) return run_guarded([&] { return do_analyze(analyze_args); });
  if (*report) return run_guarded([&] { return do_report(report_args); });
  if (*sweep) return run_guarded([&] { return do_sweep(sweep_args); });
  return 0;
}
