#include "zcp/probe.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <vector>

#include "zcp/errors.hpp"

namespace zcp {

std::string to_string(PromptMode m) {
  switch (m) {
    case PromptMode::ZeroCoTPrefill: return "zero_cot_prefill";
    case PromptMode::ZeroCoTInstruction: return "zero_cot_instruction";
    case PromptMode::FullCoT: return "full_cot";
    case PromptMode::PartialCoT: return "partial_cot";
  }
  return "full_cot";
}

std::string to_string(AccessMode a) {
  return a == AccessMode::OpenWeight ? "open_weight" : "closed_source";
}

AccessMode access_from_string(const std::string& s) {
  if (s == "open_weight") return AccessMode::OpenWeight;
  if (s == "closed_source") return AccessMode::ClosedSource;
  throw ConfigError("unknown access mode: \"" + s +
                    "\" (expected open_weight or closed_source)");
}

std::string to_string(ExtractStatus s) {
  switch (s) {
    case ExtractStatus::Found: return "found";
    case ExtractStatus::NotFound: return "not_found";
    case ExtractStatus::Ambiguous: return "ambiguous";
  }
  return "not_found";
}

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> whitespace_tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> tokens;
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

}  // namespace

ProbePrompt build_zero_cot(const BenchmarkItem& item, AccessMode access) {
  ProbePrompt p;
  p.user_text = item.question;
  if (access == AccessMode::OpenWeight) {
    p.mode = PromptMode::ZeroCoTPrefill;
    p.assistant_prefill = kForcedAnswerPrefix;
  } else {
    p.mode = PromptMode::ZeroCoTInstruction;
    p.user_text += "\n";
    p.user_text += kBoxedOnlyInstruction;
  }
  return p;
}

ProbePrompt build_full_cot(const BenchmarkItem& item) {
  ProbePrompt p;
  p.mode = PromptMode::FullCoT;
  p.user_text = item.question;
  return p;
}

ProbePrompt truncate_cot(const BenchmarkItem& item, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ConfigError("truncation fraction must lie in [0, 1]");
  }
  if (!item.solution) {
    throw DataError("item \"" + item.id + "\" has no solution chain to truncate");
  }
  std::vector<std::string> tokens = whitespace_tokens(*item.solution);
  // ceil with a guard against binary representation spill (0.1 * 30 must
  // keep 3 tokens, not 4).
  auto keep = static_cast<size_t>(
      std::ceil(fraction * static_cast<double>(tokens.size()) - 1e-9));
  if (keep > tokens.size()) keep = tokens.size();
  if (keep == 0) return build_zero_cot(item, AccessMode::OpenWeight);

  std::string chain;
  for (size_t i = 0; i < keep; ++i) {
    if (i) chain += ' ';
    chain += tokens[i];
  }
  ProbePrompt p;
  p.mode = PromptMode::PartialCoT;
  p.fraction = fraction;
  p.user_text = item.question;
  p.assistant_prefill = chain + "\n" + kForcedAnswerPrefix;
  return p;
}

namespace {

// Position of the brace balancing an already-open one, scanning from `start`.
// A backslash escapes the next character. npos when unbalanced.
size_t find_balancing_close(const std::string& s, size_t start) {
  int depth = 1;
  for (size_t i = start; i < s.size(); ++i) {
    char c = s[i];
    if (c == '\\') {
      ++i;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string::npos;
}

constexpr char kBoxMarker[] = "\\boxed{";

}  // namespace

ExtractedAnswer extract_boxed(const std::string& output, bool begins_mid_box) {
  ExtractedAnswer ans;
  size_t marker = output.rfind(kBoxMarker);
  if (marker != std::string::npos) {
    size_t start = marker + std::strlen(kBoxMarker);
    size_t close = find_balancing_close(output, start);
    if (close == std::string::npos) {
      ans.raw = trim(output.substr(start));
      ans.status = ExtractStatus::Ambiguous;
      return ans;
    }
    ans.raw = output.substr(start, close - start);
    ans.normalized = canonical_answer_form(ans.raw);
    ans.status = ExtractStatus::Found;
    return ans;
  }
  if (begins_mid_box) {
    size_t close = find_balancing_close(output, 0);
    if (close == std::string::npos) {
      ans.raw = trim(output);
      ans.status = ExtractStatus::Ambiguous;
      return ans;
    }
    ans.raw = output.substr(0, close);
    ans.normalized = canonical_answer_form(ans.raw);
    ans.status = ExtractStatus::Found;
    return ans;
  }
  ans.status = ExtractStatus::NotFound;
  return ans;
}

namespace {

std::string strip_outer_delims(std::string t) {
  struct Delim { const char* open; const char* close; };
  static const Delim kDelims[] = {
      {"$$", "$$"}, {"$", "$"}, {"\\[", "\\]"}, {"\\(", "\\)"}};
  bool changed = true;
  while (changed) {
    changed = false;
    t = trim(t);
    for (const auto& d : kDelims) {
      size_t lo = std::strlen(d.open), lc = std::strlen(d.close);
      if (t.size() >= lo + lc && t.compare(0, lo, d.open) == 0 &&
          t.compare(t.size() - lc, lc, d.close) == 0) {
        t = t.substr(lo, t.size() - lo - lc);
        changed = true;
        break;
      }
    }
  }
  return trim(t);
}

struct Rational {
  long long num = 0;
  long long den = 1;
};

bool fits_ll(__int128 v) {
  return v <= static_cast<__int128>(9223372036854775807LL) &&
         v >= -static_cast<__int128>(9223372036854775807LL) - 1;
}

// "1,234,567" style integers; commas must group exactly three digits.
bool strip_thousands_commas(std::string& t) {
  size_t i = 0;
  if (i < t.size() && (t[i] == '+' || t[i] == '-')) ++i;
  size_t first = t.find(',', i);
  if (first == std::string::npos) return true;  // nothing to do
  size_t lead = first - i;
  if (lead < 1 || lead > 3) return false;
  for (size_t j = i; j < first; ++j) {
    if (!std::isdigit(static_cast<unsigned char>(t[j]))) return false;
  }
  size_t pos = first;
  while (pos < t.size()) {
    if (t[pos] != ',' || pos + 4 > t.size()) return false;
    for (size_t j = pos + 1; j <= pos + 3; ++j) {
      if (!std::isdigit(static_cast<unsigned char>(t[j]))) return false;
    }
    pos += 4;
  }
  std::string out;
  for (char c : t) {
    if (c != ',') out += c;
  }
  t = out;
  return true;
}

std::optional<Rational> parse_decimal_or_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  size_t i = 0;
  long long sign = 1;
  if (s[i] == '+' || s[i] == '-') {
    if (s[i] == '-') sign = -1;
    ++i;
  }
  if (i == s.size()) return std::nullopt;
  __int128 num = 0;
  __int128 den = 1;
  bool seen_digit = false, seen_dot = false;
  for (; i < s.size(); ++i) {
    char c = s[i];
    if (c == '.') {
      if (seen_dot) return std::nullopt;
      seen_dot = true;
      continue;
    }
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    seen_digit = true;
    num = num * 10 + (c - '0');
    if (seen_dot) den *= 10;
    if (!fits_ll(num) || !fits_ll(den)) return std::nullopt;
  }
  if (!seen_digit) return std::nullopt;
  Rational r;
  r.num = sign * static_cast<long long>(num);
  r.den = static_cast<long long>(den);
  return r;
}

Rational reduce(Rational r) {
  if (r.den < 0) {
    r.den = -r.den;
    r.num = -r.num;
  }
  long long g = std::gcd(r.num < 0 ? -r.num : r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
  if (r.num == 0) r.den = 1;
  return r;
}

std::optional<Rational> combine_fraction(const std::optional<Rational>& a,
                                         const std::optional<Rational>& b,
                                         long long sign) {
  if (!a || !b || b->num == 0) return std::nullopt;
  __int128 num = static_cast<__int128>(a->num) * b->den * sign;
  __int128 den = static_cast<__int128>(a->den) * b->num;
  if (!fits_ll(num) || !fits_ll(den)) return std::nullopt;
  return reduce({static_cast<long long>(num), static_cast<long long>(den)});
}

std::optional<Rational> parse_rational_text(const std::string& text) {
  std::string t;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) t += c;
  }
  if (t.empty()) return std::nullopt;

  long long sign = 1;
  size_t i = 0;
  if (t[0] == '+' || t[0] == '-') {
    if (t[0] == '-') sign = -1;
    i = 1;
  }
  std::string body = t.substr(i);

  for (const char* cmd : {"\\frac", "\\dfrac", "\\tfrac"}) {
    size_t len = std::strlen(cmd);
    if (body.compare(0, len, cmd) == 0 && body.size() > len &&
        body[len] == '{') {
      size_t a_close = find_balancing_close(body, len + 1);
      if (a_close == std::string::npos || a_close + 1 >= body.size() ||
          body[a_close + 1] != '{') {
        return std::nullopt;
      }
      size_t b_close = find_balancing_close(body, a_close + 2);
      if (b_close == std::string::npos || b_close + 1 != body.size()) {
        return std::nullopt;
      }
      auto a = parse_decimal_or_int(body.substr(len + 1, a_close - len - 1));
      auto b = parse_decimal_or_int(
          body.substr(a_close + 2, b_close - a_close - 2));
      return combine_fraction(a, b, sign);
    }
  }

  size_t slash = body.find('/');
  if (slash != std::string::npos && body.find('/', slash + 1) == std::string::npos) {
    auto a = parse_decimal_or_int(body.substr(0, slash));
    auto b = parse_decimal_or_int(body.substr(slash + 1));
    return combine_fraction(a, b, sign);
  }

  std::string plain = t;
  if (!strip_thousands_commas(plain)) return std::nullopt;
  auto r = parse_decimal_or_int(plain);
  if (!r) return std::nullopt;
  return reduce(*r);
}

}  // namespace

std::string canonical_answer_form(const std::string& text) {
  std::string t = strip_outer_delims(text);
  if (auto r = parse_rational_text(t)) {
    return "#r:" + std::to_string(r->num) + "/" + std::to_string(r->den);
  }
  std::string stripped;
  for (char c : t) {
    if (!std::isspace(static_cast<unsigned char>(c))) stripped += c;
  }
  return "#s:" + stripped;
}

std::optional<double> numeric_answer_value(const std::string& text) {
  auto r = parse_rational_text(strip_outer_delims(text));
  if (!r) return std::nullopt;
  return static_cast<double>(r->num) / static_cast<double>(r->den);
}

bool answer_texts_match(const std::string& a, const std::string& b) {
  return canonical_answer_form(a) == canonical_answer_form(b);
}

bool answers_match(const ExtractedAnswer& a, const std::string& b) {
  return a.status == ExtractStatus::Found && answer_texts_match(a.raw, b);
}

namespace {

// Delimiters, punctuation, and markdown that may legitimately surround a
// forced answer without counting as reasoning.
bool only_wrapper_chars(const std::string& s) {
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (std::strchr("$\\[]().,:*#", c)) continue;
    return false;
  }
  return true;
}

bool strip_answer_lead_in(std::string& s) {
  static const char kLead[] = "the final answer is";
  if (s.size() < std::strlen(kLead)) return false;
  for (size_t i = 0; i < std::strlen(kLead); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != kLead[i]) return false;
  }
  s.erase(0, std::strlen(kLead));
  return true;
}

}  // namespace

bool is_zero_cot_compliant(const std::string& output, PromptMode mode) {
  if (mode == PromptMode::ZeroCoTPrefill || mode == PromptMode::PartialCoT) {
    // The box is already open; compliant means it closes without the model
    // smuggling multi-line reasoning inside it.
    size_t close = find_balancing_close(output, 0);
    if (close == std::string::npos) return false;
    return output.substr(0, close).find('\n') == std::string::npos;
  }
  if (mode != PromptMode::ZeroCoTInstruction) return true;

  size_t marker = output.rfind(kBoxMarker);
  if (marker == std::string::npos) return false;
  size_t start = marker + std::strlen(kBoxMarker);
  size_t close = find_balancing_close(output, start);
  if (close == std::string::npos) return false;

  std::string prefix = trim(output.substr(0, marker));
  strip_answer_lead_in(prefix);
  std::string suffix = output.substr(close + 1);
  return only_wrapper_chars(prefix) && only_wrapper_chars(suffix);
}

}  // namespace zcp
