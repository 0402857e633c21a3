#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <sstream>

#include "zcp/backend.hpp"
#include "zcp/errors.hpp"
#include "zcp/rng.hpp"

namespace zcp {

void SimProfile::memorize(const Dataset& ds) {
  for (const auto& item : ds.items) {
    shortcut_ids.insert(item.id);
    memorized_questions.insert(fnv1a64(item.question));
  }
}

bool SimProfile::is_shortcut(const BenchmarkItem& item) const {
  if (!shortcut_ids.count(item.id)) return false;
  if (memorized_questions.empty()) return true;
  return memorized_questions.count(fnv1a64(item.question)) > 0;
}

namespace {

// Draws derive from (seed, item id, question text, purpose tag): identical
// across call orders, independent across the original/reference twins that
// share an id.
uint64_t item_stream(const SimProfile& pf, const BenchmarkItem& item,
                     const std::string& tag) {
  uint64_t h = fnv1a64(tag, mix64(pf.seed, 0x5ca1ab1eULL));
  h = fnv1a64(item.id, h);
  h = fnv1a64(item.question, h);
  return h;
}

double unit_draw(uint64_t h) { return SplitMix64(h).uniform(); }

// Zero-CoT prefill and partial CoT share one draw (common random numbers
// along the truncation axis), so fraction 0 reproduces the zero-CoT outcome.
const char* draw_class(PromptMode m) {
  switch (m) {
    case PromptMode::ZeroCoTPrefill:
    case PromptMode::PartialCoT: return "forced";
    case PromptMode::ZeroCoTInstruction: return "forced_instruction";
    case PromptMode::FullCoT: return "full";
  }
  return "full";
}

size_t count_tokens(const std::string& s) {
  std::istringstream in(s);
  std::string tok;
  size_t n = 0;
  while (in >> tok) ++n;
  return n;
}

std::string trim_copy(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_ll(const std::string& s, long long& out) {
  if (s.empty() || s.size() > 18) return false;
  size_t i = (s[0] == '+' || s[0] == '-') ? 1 : 0;
  if (i == s.size()) return false;
  for (size_t j = i; j < s.size(); ++j) {
    if (!std::isdigit(static_cast<unsigned char>(s[j]))) return false;
  }
  out = std::stoll(s);
  return true;
}

// Form-preserving perturbation of the ground truth; never canonically equal
// to it, identical for every probe mode of the same item.
std::string wrong_answer(const SimProfile& pf, const BenchmarkItem& item) {
  auto k = static_cast<long long>(1 + item_stream(pf, item, "wrong") % 7);
  std::string t = trim_copy(item.answer);

  long long v = 0;
  if (parse_ll(t, v)) return std::to_string(v + k);

  size_t dot = t.find('.');
  if (dot != std::string::npos && t.find('.', dot + 1) == std::string::npos) {
    long long ip = 0;
    std::string head = t.substr(0, dot), tail = t.substr(dot + 1);
    bool tail_digits = !tail.empty() &&
        std::all_of(tail.begin(), tail.end(), [](unsigned char c) {
          return std::isdigit(c) != 0;
        });
    if (tail_digits && parse_ll(head.empty() ? "0" : head, ip)) {
      return std::to_string(ip + k) + "." + tail;
    }
  }

  for (const char* cmd : {"\\frac{", "\\dfrac{", "\\tfrac{"}) {
    size_t len = std::strlen(cmd);
    if (t.compare(0, len, cmd) == 0) {
      size_t close = t.find('}', len);
      long long num = 0;
      if (close != std::string::npos && parse_ll(t.substr(len, close - len), num)) {
        return t.substr(0, len) + std::to_string(num + k) + t.substr(close);
      }
    }
  }
  return "not " + t;
}

double effective_fraction(const ProbePrompt& prompt, const BenchmarkItem& item) {
  if (!prompt.assistant_prefill) return 0.0;
  const std::string& pre = *prompt.assistant_prefill;
  if (!pre.ends_with(kForcedAnswerPrefix)) return 0.0;
  std::string chain = pre.substr(0, pre.size() - std::strlen(kForcedAnswerPrefix));
  size_t kept = count_tokens(chain);
  if (kept == 0) return 0.0;
  size_t total = item.solution ? count_tokens(*item.solution) : 0;
  if (total == 0) return 1.0;
  return std::min(1.0, static_cast<double>(kept) / static_cast<double>(total));
}

}  // namespace

ModelResponse simulate(const SimProfile& profile, const ProbePrompt& prompt,
                       const BenchmarkItem& item) {
  double zero_rate = profile.is_shortcut(item) ? profile.p_shortcut
                                               : profile.p_clean;
  double rate = zero_rate;
  switch (prompt.mode) {
    case PromptMode::ZeroCoTPrefill:
    case PromptMode::ZeroCoTInstruction:
      break;
    case PromptMode::FullCoT:
      rate = profile.p_fullcot;
      break;
    case PromptMode::PartialCoT: {
      double f = effective_fraction(prompt, item);
      rate = (1.0 - f) * zero_rate + f * profile.p_fullcot;
      break;
    }
  }

  std::string tag = std::string("answer:") + draw_class(prompt.mode);
  bool correct = unit_draw(item_stream(profile, item, tag)) < rate;
  std::string ans = correct ? item.answer : wrong_answer(profile, item);

  ModelResponse r;
  switch (prompt.mode) {
    case PromptMode::ZeroCoTPrefill:
    case PromptMode::PartialCoT:
      r.text = ans + "} \\]";  // continues the box the prefill opened
      break;
    case PromptMode::ZeroCoTInstruction:
      r.text = "\\boxed{" + ans + "}";
      break;
    case PromptMode::FullCoT:
      r.text = (item.solution ? *item.solution
                              : std::string("Working through the steps.")) +
               "\n" + kForcedAnswerPrefix + ans + "} \\]";
      break;
  }
  return r;
}

TeacherForceResult simulate_teacher_force(const SimProfile& profile,
                                          const ProbePrompt& prompt,
                                          const BenchmarkItem& item,
                                          const std::string& target) {
  if (target.empty() || count_tokens(target) == 0) {
    throw BackendError("teacher forcing needs a non-empty target");
  }
  double mean = profile.tf_mean_fullcot;
  if (prompt.mode != PromptMode::FullCoT) {
    mean = profile.is_shortcut(item) ? profile.tf_mean_shortcut
                                     : profile.tf_mean_clean;
  }
  std::istringstream in(target);
  std::string tok;
  TeacherForceResult result;
  size_t k = 0;
  std::string cls = draw_class(prompt.mode);
  while (in >> tok) {
    double u = unit_draw(
        item_stream(profile, item, "tf:" + cls + ":" + std::to_string(k)));
    double p = std::clamp(mean + profile.tf_jitter * (2.0 * u - 1.0), 0.01, 0.99);
    result.target_tokens.push_back(tok);
    result.logprobs.push_back(std::log(p));
    ++k;
  }
  return result;
}

SimBackend::SimBackend(SimProfile profile) : profile_(std::move(profile)) {}

void SimBackend::observe(const Dataset& ds) {
  for (const auto& item : ds.items) by_question_[item.question] = item;
}

SimBackend::Resolved SimBackend::resolve(const ModelRequest& request) const {
  const Message* user = nullptr;
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == "user") {
      user = &*it;
      break;
    }
  }
  if (!user) throw BackendError("request carries no user turn");

  std::string question = user->text;
  bool instruction = false;
  std::string suffix = std::string("\n") + kBoxedOnlyInstruction;
  if (question.ends_with(suffix)) {
    question.resize(question.size() - suffix.size());
    instruction = true;
  }
  auto it = by_question_.find(question);
  if (it == by_question_.end()) {
    throw BackendError("request does not match any observed item");
  }

  Resolved r;
  r.item = it->second;
  r.prompt.user_text = user->text;
  if (request.assistant_prefill) {
    const std::string& pre = *request.assistant_prefill;
    if (!pre.ends_with(kForcedAnswerPrefix)) {
      throw BackendError("unrecognized assistant prefill");
    }
    std::string chain = pre.substr(0, pre.size() - std::strlen(kForcedAnswerPrefix));
    r.prompt.assistant_prefill = pre;
    r.prompt.mode = count_tokens(chain) == 0 ? PromptMode::ZeroCoTPrefill
                                             : PromptMode::PartialCoT;
  } else {
    r.prompt.mode = instruction ? PromptMode::ZeroCoTInstruction
                                : PromptMode::FullCoT;
  }
  return r;
}

ModelResponse SimBackend::complete(const ModelRequest& request) {
  complete_calls_.fetch_add(1);
  Resolved r = resolve(request);
  return simulate(profile_, r.prompt, r.item);
}

TeacherForceResult SimBackend::teacher_force(const ModelRequest& request,
                                             const std::string& target) {
  tf_calls_.fetch_add(1);
  Resolved r = resolve(request);
  return simulate_teacher_force(profile_, r.prompt, r.item, target);
}

}  // namespace zcp
