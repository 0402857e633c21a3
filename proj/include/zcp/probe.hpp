#pragma once

#include <optional>
#include <string>

#include "zcp/corpus.hpp"

namespace zcp {

enum class PromptMode { ZeroCoTPrefill, ZeroCoTInstruction, FullCoT, PartialCoT };
enum class AccessMode { OpenWeight, ClosedSource };

std::string to_string(PromptMode m);
std::string to_string(AccessMode a);
AccessMode access_from_string(const std::string& s);

// Forcing strings. Byte-exact constants: probe results are only comparable
// across runs and models when every run issues the identical prompt.
inline constexpr char kForcedAnswerPrefix[] = "The final answer is: \\[ \\boxed{";
inline constexpr char kBoxedOnlyInstruction[] =
    "Please ONLY put your final answer within \\boxed{} directly without any "
    "other content before or after it (e.g., reasoning or explanation)";

struct ProbePrompt {
  PromptMode mode = PromptMode::FullCoT;
  double fraction = 0.0;  // PartialCoT position on the truncation axis, in [0, 1]
  std::string user_text;
  std::optional<std::string> assistant_prefill;
};

// Open-weight access forces the answer by prefilling the assistant turn;
// closed-source access appends the boxed-only instruction to the user turn.
ProbePrompt build_zero_cot(const BenchmarkItem& item, AccessMode access);
ProbePrompt build_full_cot(const BenchmarkItem& item);

// Keeps the first ceil(fraction * L) whitespace tokens of the solution chain
// as prefill, then forces the answer. fraction == 0 degenerates to
// build_zero_cot under open-weight access.
ProbePrompt truncate_cot(const BenchmarkItem& item, double fraction);

enum class ExtractStatus { Found, NotFound, Ambiguous };

std::string to_string(ExtractStatus s);

struct ExtractedAnswer {
  std::string raw;
  std::string normalized;
  ExtractStatus status = ExtractStatus::NotFound;
};

// Content of the last \boxed{...}; braces match with backslash escapes
// honored. begins_mid_box treats the text as the continuation of a box the
// prefill already opened. Unbalanced content comes back Ambiguous with a
// best-effort raw capture and never matches anything.
ExtractedAnswer extract_boxed(const std::string& output,
                              bool begins_mid_box = false);

// Canonical comparison: exact rational equality for integers, finite decimals
// and \frac{p}{q}; otherwise whitespace-stripped string equality. Outer math
// delimiters ($..$, \[..\], \(..\)) are ignored on both sides.
bool answer_texts_match(const std::string& a, const std::string& b);
bool answers_match(const ExtractedAnswer& a, const std::string& b);

// Tagged canonical form; equal answers produce equal strings.
std::string canonical_answer_form(const std::string& text);

// Value of a single numeric answer (integer, decimal, or simple fraction),
// when the text is exactly one such number.
std::optional<double> numeric_answer_value(const std::string& text);

// Telemetry: did a zero-CoT output obey the forcing (no reasoning emitted
// before the final answer)? Never affects scoring.
bool is_zero_cot_compliant(const std::string& output, PromptMode mode);

}  // namespace zcp
