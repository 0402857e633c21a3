#include "zcp/backend.hpp"

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <semaphore>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "zcp/errors.hpp"
#include "zcp/rng.hpp"

namespace zcp {

using nlohmann::json;

TeacherForceResult Backend::teacher_force(const ModelRequest&,
                                          const std::string&) {
  throw CapabilityError(
      "this backend exposes no token scores; teacher forcing is unavailable");
}

namespace {

std::string body_snippet(const std::string& body) {
  return body.size() <= 200 ? body : body.substr(0, 200) + "...";
}

json chat_messages(const ModelRequest& request, bool include_prefill) {
  json msgs = json::array();
  for (const auto& m : request.messages) {
    msgs.push_back({{"role", m.role}, {"content", m.text}});
  }
  if (include_prefill && request.assistant_prefill) {
    msgs.push_back({{"role", "assistant"}, {"content", *request.assistant_prefill}});
  }
  return msgs;
}

json chat_body(const ModelRequest& request, bool include_prefill) {
  json body;
  body["model"] = request.model_id;
  body["messages"] = chat_messages(request, include_prefill);
  body["temperature"] = request.decoding.temperature;
  body["max_tokens"] = request.decoding.max_tokens;
  if (include_prefill && request.assistant_prefill) {
    // vLLM-style continuation of the trailing assistant turn.
    body["continue_final_message"] = true;
    body["add_generation_prompt"] = false;
  }
  if (request.want_logprobs) body["logprobs"] = true;
  return body;
}

// Prefill downgraded to an instruction appended to the user turn. The forced
// zero-CoT prefix becomes the boxed-only instruction; any other prefill is
// carried over verbatim.
json downgraded_body(const ModelRequest& request) {
  ModelRequest alt = request;
  alt.assistant_prefill.reset();
  if (request.assistant_prefill && !alt.messages.empty()) {
    for (auto it = alt.messages.rbegin(); it != alt.messages.rend(); ++it) {
      if (it->role == "user") {
        const std::string& pre = *request.assistant_prefill;
        it->text += "\n";
        it->text += pre.ends_with(kForcedAnswerPrefix) ? kBoxedOnlyInstruction
                                                       : pre.c_str();
        break;
      }
    }
  }
  return chat_body(alt, false);
}

double validated_logprob(double lp, const char* where) {
  if (std::isnan(lp) || std::isinf(lp)) {
    throw BackendError(std::string("non-finite log-probability in ") + where);
  }
  // Some servers emit tiny positive values for near-certain tokens.
  return std::min(lp, 0.0);
}

}  // namespace

struct HttpBackend::Gate {
  std::counting_semaphore<1024> sem;
  explicit Gate(int n) : sem(n) {}
};

HttpBackend::HttpBackend(BackendConfig config, Transport transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (config_.endpoint.empty() && !transport_) {
    throw ConfigError("http backend needs an endpoint");
  }
  if (config_.concurrency < 1 || config_.concurrency > 1024) {
    throw ConfigError("backend concurrency must lie in [1, 1024]");
  }
  if (const char* key = std::getenv(config_.api_key_env.c_str())) {
    api_key_ = key;
  }
  gate_ = std::make_unique<Gate>(config_.concurrency);
  if (!transport_) {
    BackendConfig cfg = config_;
    std::string api_key = api_key_;
    transport_ = [cfg, api_key](const std::string& path,
                                const std::string& body) -> HttpReply {
      httplib::Client client(cfg.endpoint);
      client.set_connection_timeout(cfg.timeout_s, 0);
      client.set_read_timeout(cfg.timeout_s, 0);
      client.set_write_timeout(cfg.timeout_s, 0);
      httplib::Headers headers;
      if (!api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key);
      }
      auto res = client.Post(path, headers, body, "application/json");
      HttpReply reply;
      if (!res) {
        reply.transport_failed = true;
        reply.error = httplib::to_string(res.error());
        return reply;
      }
      reply.status = res->status;
      reply.body = res->body;
      return reply;
    };
  }
}

HttpBackend::~HttpBackend() = default;

HttpReply HttpBackend::post_with_retries(const std::string& path,
                                         const std::string& body,
                                         int* retries_out) {
  static thread_local SplitMix64 jitter(
      static_cast<uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
  int attempt = 0;
  for (;;) {
    gate_->sem.acquire();
    HttpReply reply = transport_(path, body);
    gate_->sem.release();
    bool retryable = reply.transport_failed || reply.status == 429 ||
                     (reply.status >= 500 && reply.status < 600);
    if (!retryable) return reply;
    if (attempt >= config_.max_retries) {
      throw BackendError(
          "retries exhausted after " + std::to_string(attempt + 1) +
          " attempts; last " +
          (reply.transport_failed ? "transport error: " + reply.error
                                  : "status: " + std::to_string(reply.status)));
    }
    double scale = std::ldexp(1.0, attempt);  // 1, 2, 4, ...
    auto delay = static_cast<int64_t>(config_.backoff_base_ms * scale *
                                      (0.5 + jitter.uniform()));
    std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    ++attempt;
    if (retries_out) ++*retries_out;
  }
}

ModelResponse HttpBackend::complete(const ModelRequest& request) {
  bool wants_prefill = request.assistant_prefill.has_value();
  bool downgraded = wants_prefill && !config_.supports_prefill;
  json body = downgraded ? downgraded_body(request)
                         : chat_body(request, wants_prefill);
  int retries = 0;
  for (;;) {
    HttpReply reply =
        post_with_retries("/v1/chat/completions", body.dump(), &retries);
    if (reply.status == 401 || reply.status == 403) {
      throw BackendError("authentication rejected (status " +
                         std::to_string(reply.status) + "); check $" +
                         config_.api_key_env);
    }
    if (reply.status >= 400 && reply.status < 500) {
      // Servers that cannot honor a trailing assistant turn reject the
      // request outright; downgrade once and flag it.
      if (wants_prefill && !downgraded) {
        downgraded = true;
        body = downgraded_body(request);
        continue;
      }
      throw BackendError("request rejected (status " +
                         std::to_string(reply.status) +
                         "): " + body_snippet(reply.body));
    }

    json j;
    try {
      j = json::parse(reply.body);
    } catch (const json::parse_error& e) {
      throw BackendError(std::string("malformed response payload: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() ||
        j["choices"].empty()) {
      throw BackendError("response carries no choices: " +
                         body_snippet(reply.body));
    }
    const json& choice = j["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string()) {
      throw BackendError("response choice carries no message content");
    }
    ModelResponse out;
    out.text = choice["message"]["content"].get<std::string>();
    out.retries = retries;
    out.prefill_supported = !wants_prefill || !downgraded;
    if (request.want_logprobs && choice.contains("logprobs") &&
        choice["logprobs"].is_object() &&
        choice["logprobs"].contains("content") &&
        choice["logprobs"]["content"].is_array()) {
      std::vector<TokenScore> scores;
      for (const auto& entry : choice["logprobs"]["content"]) {
        TokenScore ts;
        ts.token = entry.value("token", std::string());
        ts.logprob = validated_logprob(entry.value("logprob", 0.0),
                                       "completion logprobs");
        scores.push_back(std::move(ts));
      }
      out.token_scores = std::move(scores);
    }
    return out;
  }
}

std::string HttpBackend::render_scoring_prompt(const ModelRequest& request) {
  std::string raw;
  for (size_t i = 0; i < request.messages.size(); ++i) {
    if (i) raw += "\n\n";
    raw += request.messages[i].text;
  }
  if (request.assistant_prefill) {
    raw += "\n";
    raw += *request.assistant_prefill;
  }
  return raw;
}

TeacherForceResult HttpBackend::teacher_force(const ModelRequest& request,
                                              const std::string& target) {
  if (!config_.supports_echo_logprobs) {
    throw CapabilityError("backend \"" + config_.model_id +
                          "\" exposes no echo logprobs; teacher forcing "
                          "unavailable");
  }
  if (target.empty()) {
    throw BackendError("teacher forcing needs a non-empty target");
  }
  std::string raw = render_scoring_prompt(request);
  json body;
  body["model"] = request.model_id;
  body["prompt"] = raw + target;
  body["max_tokens"] = 0;
  body["echo"] = true;
  body["logprobs"] = 0;
  body["temperature"] = 0.0;

  HttpReply reply = post_with_retries("/v1/completions", body.dump(), nullptr);
  if (reply.status != 200) {
    throw BackendError("scoring request rejected (status " +
                       std::to_string(reply.status) +
                       "): " + body_snippet(reply.body));
  }
  json j;
  try {
    j = json::parse(reply.body);
  } catch (const json::parse_error& e) {
    throw BackendError(std::string("malformed scoring payload: ") + e.what());
  }
  const json* lp = nullptr;
  if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty() &&
      j["choices"][0].contains("logprobs") &&
      j["choices"][0]["logprobs"].is_object()) {
    lp = &j["choices"][0]["logprobs"];
  }
  if (!lp || !lp->contains("tokens") || !lp->contains("token_logprobs") ||
      !lp->contains("text_offset")) {
    throw CapabilityError(
        "server did not return echoed token scores; teacher forcing "
        "unavailable on this endpoint");
  }
  const json& tokens = (*lp)["tokens"];
  const json& logprobs = (*lp)["token_logprobs"];
  const json& offsets = (*lp)["text_offset"];
  size_t n = std::min({tokens.size(), logprobs.size(), offsets.size()});

  TeacherForceResult result;
  auto boundary = static_cast<int64_t>(raw.size());
  bool boundary_seen = false;
  for (size_t i = 0; i < n; ++i) {
    auto off = offsets[i].get<int64_t>();
    if (off < boundary) continue;
    if (off == boundary) boundary_seen = true;
    if (logprobs[i].is_null()) {
      throw BackendError("server returned no score for a target token");
    }
    result.target_tokens.push_back(tokens[i].get<std::string>());
    result.logprobs.push_back(
        validated_logprob(logprobs[i].get<double>(), "echo logprobs"));
  }
  if (result.logprobs.empty()) {
    throw BackendError("target produced no tokens under the server tokenizer");
  }
  if (!boundary_seen) {
    throw BackendError(
        "tokenizer merged the prompt/target boundary; scores cannot be "
        "aligned to the target");
  }
  return result;
}

// ---------------------------------------------------------------------------

CachedBackend::CachedBackend(std::shared_ptr<Backend> inner,
                             std::string cache_dir)
    : inner_(std::move(inner)), dir_(std::move(cache_dir)) {
  if (!inner_) throw ConfigError("cache needs a backend to wrap");
  if (dir_.empty()) throw ConfigError("cache needs a directory");
  std::filesystem::create_directories(dir_);
}

std::string CachedBackend::request_key(const ModelRequest& request,
                                       const std::string& teacher_force_target) {
  json j;
  j["model"] = request.model_id;
  json msgs = json::array();
  for (const auto& m : request.messages) {
    msgs.push_back({{"role", m.role}, {"content", m.text}});
  }
  j["messages"] = msgs;
  if (request.assistant_prefill) j["prefill"] = *request.assistant_prefill;
  j["temperature"] = request.decoding.temperature;
  j["max_tokens"] = request.decoding.max_tokens;
  j["want_logprobs"] = request.want_logprobs;
  if (!request.cache_salt.empty()) j["salt"] = request.cache_salt;
  if (!teacher_force_target.empty()) j["teacher_force"] = teacher_force_target;
  return digest128_hex(j.dump());
}

std::string CachedBackend::entry_path(const std::string& key) const {
  return dir_ + "/" + key.substr(0, 2) + "/" + key + ".json";
}

namespace {

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream buf;
  buf << in.rdbuf();
  out = buf.str();
  return true;
}

void write_atomically(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  std::filesystem::create_directories(p.parent_path());
  static std::atomic<uint64_t> counter{0};
  std::string tmp = path + ".tmp." + std::to_string(::getpid()) + "." +
                    std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) {
      std::filesystem::remove(tmp);
      throw BackendError("cannot write cache entry: " + path);
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

ModelResponse CachedBackend::complete(const ModelRequest& request) {
  std::string key = request_key(request);
  std::string path = entry_path(key);
  std::string content;
  if (read_file(path, content)) {
    try {
      json j = json::parse(content);
      if (j.at("kind").get<std::string>() == "complete") {
        const json& r = j.at("response");
        ModelResponse out;
        out.text = r.at("text").get<std::string>();
        out.prefill_supported = r.value("prefill_supported", true);
        if (r.contains("token_scores") && r["token_scores"].is_array()) {
          std::vector<TokenScore> scores;
          for (const auto& e : r["token_scores"]) {
            scores.push_back({e.at("token").get<std::string>(),
                              e.at("logprob").get<double>()});
          }
          out.token_scores = std::move(scores);
        }
        hits_.fetch_add(1);
        return out;
      }
      corrupt_.fetch_add(1);  // key collision across kinds; treat as miss
    } catch (const json::exception&) {
      corrupt_.fetch_add(1);  // unreadable entry: recompute and overwrite
    }
  }
  misses_.fetch_add(1);
  ModelResponse out = inner_->complete(request);
  json r;
  r["text"] = out.text;
  r["prefill_supported"] = out.prefill_supported;
  if (out.token_scores) {
    json scores = json::array();
    for (const auto& s : *out.token_scores) {
      scores.push_back({{"token", s.token}, {"logprob", s.logprob}});
    }
    r["token_scores"] = std::move(scores);
  }
  json entry;
  entry["kind"] = "complete";
  entry["key"] = key;
  entry["response"] = std::move(r);
  write_atomically(path, entry.dump());
  return out;
}

TeacherForceResult CachedBackend::teacher_force(const ModelRequest& request,
                                                const std::string& target) {
  std::string key = request_key(request, target);
  std::string path = entry_path(key);
  std::string content;
  if (read_file(path, content)) {
    try {
      json j = json::parse(content);
      if (j.at("kind").get<std::string>() == "teacher_force") {
        const json& r = j.at("response");
        TeacherForceResult out;
        out.target_tokens = r.at("tokens").get<std::vector<std::string>>();
        out.logprobs = r.at("logprobs").get<std::vector<double>>();
        hits_.fetch_add(1);
        return out;
      }
      corrupt_.fetch_add(1);
    } catch (const json::exception&) {
      corrupt_.fetch_add(1);
    }
  }
  misses_.fetch_add(1);
  TeacherForceResult out = inner_->teacher_force(request, target);
  json entry;
  entry["kind"] = "teacher_force";
  entry["key"] = key;
  entry["response"] = {{"tokens", out.target_tokens}, {"logprobs", out.logprobs}};
  write_atomically(path, entry.dump());
  return out;
}

CachedBackend::Stats CachedBackend::stats() const {
  return {hits_.load(), misses_.load(), corrupt_.load()};
}

}  // namespace zcp
