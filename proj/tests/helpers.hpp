#pragma once

#include <sys/stat.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "zcp/backend.hpp"
#include "zcp/corpus.hpp"
#include "zcp/errors.hpp"

namespace zcptest {

// Self-cleaning scratch directory.
struct TempDir {
  std::string path;

  TempDir() {
    char tmpl[] = "/tmp/zcptest.XXXXXX";
    char* p = mkdtemp(tmpl);
    if (!p) throw std::runtime_error("mkdtemp failed");
    path = p;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return path + "/" + name; }
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// An aligned original/reference pair of datasets: shared ids, distinct
// question/solution/answer texts on each side. Solutions carry exactly
// `solution_tokens` whitespace tokens so truncation fractions land on whole
// token counts.
struct PairedSets {
  zcp::Dataset original;
  zcp::Dataset reference;
};

inline PairedSets make_paired_sets(size_t n, size_t solution_tokens = 8) {
  PairedSets out;
  out.original.name = "orig";
  out.original.variant = zcp::Variant::Original;
  out.reference.name = "ref";
  out.reference.variant = zcp::Variant::Reference;
  static const char* kSubjects[] = {"algebra", "geometry", "counting"};

  for (size_t i = 0; i < n; ++i) {
    std::string id = "item-" + std::to_string(i);
    for (int side = 0; side < 2; ++side) {
      zcp::BenchmarkItem item;
      item.id = id;
      const char* who = side == 0 ? "original" : "perturbed";
      item.question = "Compute quantity " + std::to_string(i) + " in the " +
                      who + " setting.";
      std::string sol;
      for (size_t t = 0; t < solution_tokens; ++t) {
        if (t) sol += ' ';
        sol += "s" + std::to_string(i) + (side == 0 ? "o" : "r") +
               std::to_string(t);
      }
      item.solution = sol;
      item.answer = std::to_string(side == 0 ? 3 * i + 5 : 2 * i + 7);
      item.subject = kSubjects[i % 3];
      (side == 0 ? out.original : out.reference).items.push_back(std::move(item));
    }
  }
  return out;
}

// Backend with canned responses. Requests are recorded in call order. A
// responder function takes priority; otherwise queued responses pop in FIFO
// order, falling back to `fallback` once the queue drains.
class ScriptedBackend : public zcp::Backend {
 public:
  std::function<zcp::ModelResponse(const zcp::ModelRequest&)> responder;
  std::vector<zcp::ModelResponse> queue;
  zcp::ModelResponse fallback;
  std::vector<zcp::TeacherForceResult> tf_queue;
  bool logprobs = false;

  zcp::ModelResponse complete(const zcp::ModelRequest& request) override {
    std::lock_guard<std::mutex> lock(mu_);
    requests_.push_back(request);
    if (responder) return responder(request);
    if (next_ < queue.size()) return queue[next_++];
    return fallback;
  }

  zcp::TeacherForceResult teacher_force(const zcp::ModelRequest& request,
                                        const std::string& target) override {
    std::lock_guard<std::mutex> lock(mu_);
    tf_requests_.push_back(request);
    tf_targets_.push_back(target);
    if (tf_next_ < tf_queue.size()) return tf_queue[tf_next_++];
    if (!logprobs) return zcp::Backend::teacher_force(request, target);
    zcp::TeacherForceResult r;
    r.target_tokens = {target};
    r.logprobs = {-0.5};
    return r;
  }

  bool supports_logprobs() const override { return logprobs; }

  std::vector<zcp::ModelRequest> requests() const {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_;
  }
  std::vector<zcp::ModelRequest> tf_requests() const {
    std::lock_guard<std::mutex> lock(mu_);
    return tf_requests_;
  }
  std::vector<std::string> tf_targets() const {
    std::lock_guard<std::mutex> lock(mu_);
    return tf_targets_;
  }
  size_t calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_.size();
  }

 private:
  mutable std::mutex mu_;
  std::vector<zcp::ModelRequest> requests_;
  std::vector<zcp::ModelRequest> tf_requests_;
  std::vector<std::string> tf_targets_;
  size_t next_ = 0;
  size_t tf_next_ = 0;
};

inline zcp::ModelResponse text_response(const std::string& text) {
  zcp::ModelResponse r;
  r.text = text;
  return r;
}

}  // namespace zcptest
