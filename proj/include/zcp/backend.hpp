#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "zcp/corpus.hpp"
#include "zcp/probe.hpp"

namespace zcp {

struct Message {
  std::string role;  // "system" | "user" | "assistant"
  std::string text;
};

struct Decoding {
  double temperature = 0.0;
  int max_tokens = 512;
};

struct ModelRequest {
  std::string model_id;
  std::vector<Message> messages;
  std::optional<std::string> assistant_prefill;  // forced start of the reply
  Decoding decoding;
  bool want_logprobs = false;
  // Folded into the cache key but never sent over the wire. Distinguishes
  // calls that are intentionally resampled (regeneration attempts, the two
  // judges) despite carrying identical prompts.
  std::string cache_salt;
};

struct TokenScore {
  std::string token;
  double logprob = 0.0;  // natural log, <= 0
};

struct ModelResponse {
  std::string text;
  std::optional<std::vector<TokenScore>> token_scores;
  bool prefill_supported = true;  // false when the prefill was downgraded
  int retries = 0;
};

// Per-token scores for a forced target continuation under the backend's own
// tokenization. Entries are finite naturals logs, <= 0.
struct TeacherForceResult {
  std::vector<std::string> target_tokens;
  std::vector<double> logprobs;

  size_t size() const { return logprobs.size(); }
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual ModelResponse complete(const ModelRequest& request) = 0;

  // Scores `target` as the forced continuation of the prompt in `request`.
  // Backends without token-score access must refuse (CapabilityError) rather
  // than fabricate scores; absence and zero are different things.
  virtual TeacherForceResult teacher_force(const ModelRequest& request,
                                           const std::string& target);

  virtual bool supports_prefill() const { return true; }
  virtual bool supports_logprobs() const { return false; }
};

// ---------------------------------------------------------------------------
// OpenAI-style chat-completions client.

struct BackendConfig {
  std::string kind = "simulator";  // "simulator" | "http"
  std::string model_id = "sim";
  std::string endpoint;            // scheme://host[:port]
  std::string api_key_env = "ZCP_API_KEY";
  bool supports_prefill = true;          // server honors a trailing assistant turn
  bool supports_echo_logprobs = false;   // completions endpoint scores echoed prompts
  int max_retries = 5;
  int backoff_base_ms = 250;
  int timeout_s = 120;
  int concurrency = 8;  // in-flight request bound
};

struct HttpReply {
  int status = 0;
  std::string body;
  bool transport_failed = false;
  std::string error;
};

// Seam for tests: maps (path, JSON body) to a reply without a live socket.
using Transport =
    std::function<HttpReply(const std::string& path, const std::string& body)>;

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendConfig config, Transport transport = {});
  ~HttpBackend() override;

  ModelResponse complete(const ModelRequest& request) override;
  TeacherForceResult teacher_force(const ModelRequest& request,
                                   const std::string& target) override;
  bool supports_prefill() const override { return config_.supports_prefill; }
  bool supports_logprobs() const override {
    return config_.supports_echo_logprobs;
  }

  // Raw text a scored continuation is appended to; exposed for tests.
  static std::string render_scoring_prompt(const ModelRequest& request);

 private:
  HttpReply post_with_retries(const std::string& path, const std::string& body,
                              int* retries_out);

  BackendConfig config_;
  std::string api_key_;
  Transport transport_;
  struct Gate;
  std::unique_ptr<Gate> gate_;
};

// ---------------------------------------------------------------------------
// Deterministic stand-in for a contaminated model.

struct SimProfile {
  // Contaminated item ids. Membership alone cannot separate an original item
  // from its perturbed twin (they share the id), so the profile also keeps
  // hashes of the exact question texts it "trained" on.
  std::unordered_set<std::string> shortcut_ids;
  std::unordered_set<uint64_t> memorized_questions;

  double p_shortcut = 0.9;   // zero-CoT correctness on memorized questions
  double p_clean = 0.2;      // zero-CoT correctness elsewhere
  double p_fullcot = 0.95;   // correctness once reasoning is allowed

  double tf_mean_shortcut = 0.6;  // mean ground-truth token prob, memorized
  double tf_mean_clean = 0.3;
  double tf_mean_fullcot = 0.9;   // both sides converge under full reasoning
  double tf_jitter = 0.08;        // half-width of per-token spread

  uint64_t seed = 0;

  void memorize(const Dataset& ds);
  bool is_shortcut(const BenchmarkItem& item) const;
};

// Pure in (profile, prompt, item): shuffling evaluation order can never
// change a per-item outcome. Zero-CoT draws Bernoulli(p_shortcut or p_clean)
// by shortcut membership; full CoT draws Bernoulli(p_fullcot); partial CoT
// blends linearly along the truncation axis, sharing the zero-CoT draw so
// fraction 0 reproduces the zero-CoT outcome exactly.
ModelResponse simulate(const SimProfile& profile, const ProbePrompt& prompt,
                       const BenchmarkItem& item);
TeacherForceResult simulate_teacher_force(const SimProfile& profile,
                                          const ProbePrompt& prompt,
                                          const BenchmarkItem& item,
                                          const std::string& target);

class SimBackend : public Backend {
 public:
  explicit SimBackend(SimProfile profile);

  // Registers items so wire-level requests can be resolved back to them.
  void observe(const Dataset& ds);

  ModelResponse complete(const ModelRequest& request) override;
  TeacherForceResult teacher_force(const ModelRequest& request,
                                   const std::string& target) override;
  bool supports_logprobs() const override { return true; }

  const SimProfile& profile() const { return profile_; }
  uint64_t complete_calls() const { return complete_calls_.load(); }
  uint64_t teacher_force_calls() const { return tf_calls_.load(); }

 private:
  struct Resolved {
    ProbePrompt prompt;
    BenchmarkItem item;
  };
  Resolved resolve(const ModelRequest& request) const;

  SimProfile profile_;
  std::unordered_map<std::string, BenchmarkItem> by_question_;
  std::atomic<uint64_t> complete_calls_{0};
  std::atomic<uint64_t> tf_calls_{0};
};

// ---------------------------------------------------------------------------
// Content-addressed read-through cache.

class CachedBackend : public Backend {
 public:
  CachedBackend(std::shared_ptr<Backend> inner, std::string cache_dir);

  ModelResponse complete(const ModelRequest& request) override;
  TeacherForceResult teacher_force(const ModelRequest& request,
                                   const std::string& target) override;
  bool supports_prefill() const override { return inner_->supports_prefill(); }
  bool supports_logprobs() const override { return inner_->supports_logprobs(); }

  struct Stats {
    uint64_t hits = 0;
    uint64_t misses = 0;
    uint64_t corrupt = 0;  // unreadable entries treated as misses
  };
  Stats stats() const;

  // Digest of (model id, rendered prompt, decoding, logprob switch). Prompt
  // or parameter changes always change the key.
  static std::string request_key(const ModelRequest& request,
                                 const std::string& teacher_force_target = "");

 private:
  std::string entry_path(const std::string& key) const;

  std::shared_ptr<Backend> inner_;
  std::string dir_;
  mutable std::atomic<uint64_t> hits_{0}, misses_{0}, corrupt_{0};
};

}  // namespace zcp
