#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "helpers.hpp"
#include "zcp/errors.hpp"
#include "zcp/probe.hpp"

using namespace zcp;

namespace {

BenchmarkItem demo_item(const std::string& solution = "add three and four "
                                                      "then double the sum "
                                                      "carefully") {
  BenchmarkItem item;
  item.id = "demo";
  item.question = "Jack has a stack of books that is 12 inches thick.";
  item.solution = solution;
  item.answer = "160";
  return item;
}

}  // namespace

TEST_CASE("open-weight zero-CoT forces the answer via assistant prefill") {
  BenchmarkItem item = demo_item();
  ProbePrompt p = build_zero_cot(item, AccessMode::OpenWeight);
  CHECK(p.mode == PromptMode::ZeroCoTPrefill);
  CHECK(p.user_text == item.question);
  REQUIRE(p.assistant_prefill.has_value());
  CHECK(*p.assistant_prefill == kForcedAnswerPrefix);
  CHECK(*p.assistant_prefill == "The final answer is: \\[ \\boxed{");
}

TEST_CASE("closed-source zero-CoT appends the boxed-only instruction") {
  BenchmarkItem item = demo_item();
  ProbePrompt p = build_zero_cot(item, AccessMode::ClosedSource);
  CHECK(p.mode == PromptMode::ZeroCoTInstruction);
  CHECK_FALSE(p.assistant_prefill.has_value());
  CHECK(p.user_text == item.question + "\n" + kBoxedOnlyInstruction);
  CHECK(std::string(kBoxedOnlyInstruction) ==
        "Please ONLY put your final answer within \\boxed{} directly without "
        "any other content before or after it (e.g., reasoning or "
        "explanation)");
}

TEST_CASE("full-CoT prompt is the bare question") {
  BenchmarkItem item = demo_item();
  ProbePrompt p = build_full_cot(item);
  CHECK(p.mode == PromptMode::FullCoT);
  CHECK(p.user_text == item.question);
  CHECK_FALSE(p.assistant_prefill.has_value());
}

TEST_CASE("truncation keeps the leading fraction of the solution chain") {
  BenchmarkItem item = demo_item("one two three four five six seven eight");

  SUBCASE("fraction 0 degenerates to the zero-CoT prefill") {
    ProbePrompt p = truncate_cot(item, 0.0);
    ProbePrompt z = build_zero_cot(item, AccessMode::OpenWeight);
    CHECK(p.mode == z.mode);
    CHECK(p.user_text == z.user_text);
    CHECK(p.assistant_prefill == z.assistant_prefill);
  }

  SUBCASE("fraction 0.5 keeps four of eight tokens") {
    ProbePrompt p = truncate_cot(item, 0.5);
    CHECK(p.mode == PromptMode::PartialCoT);
    CHECK(p.fraction == 0.5);
    REQUIRE(p.assistant_prefill.has_value());
    CHECK(*p.assistant_prefill ==
          std::string("one two three four") + "\n" + kForcedAnswerPrefix);
  }

  SUBCASE("fraction 1 keeps the whole chain") {
    ProbePrompt p = truncate_cot(item, 1.0);
    CHECK(*p.assistant_prefill ==
          std::string("one two three four five six seven eight") + "\n" +
              kForcedAnswerPrefix);
  }

  SUBCASE("tiny positive fractions still keep one token") {
    ProbePrompt p = truncate_cot(item, 0.01);
    CHECK(p.mode == PromptMode::PartialCoT);
    CHECK(*p.assistant_prefill == std::string("one") + "\n" + kForcedAnswerPrefix);
  }

  SUBCASE("ceil guards against binary representation spill") {
    std::string sol;
    for (int i = 0; i < 30; ++i) {
      if (i) sol += ' ';
      sol += "t" + std::to_string(i);
    }
    BenchmarkItem wide = demo_item(sol);
    // 0.1 * 30 is slightly above 3.0 in binary; the prefill must keep 3
    // tokens, not 4.
    ProbePrompt p = truncate_cot(wide, 0.1);
    CHECK(*p.assistant_prefill ==
          std::string("t0 t1 t2") + "\n" + kForcedAnswerPrefix);
  }

  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(truncate_cot(item, -0.1), ConfigError);
    CHECK_THROWS_AS(truncate_cot(item, 1.1), ConfigError);
    BenchmarkItem bare = demo_item();
    bare.solution.reset();
    CHECK_THROWS_WITH_AS(truncate_cot(bare, 0.5), doctest::Contains("demo"),
                         DataError);
  }
}

TEST_CASE("boxed extraction") {
  SUBCASE("plain box") {
    ExtractedAnswer a = extract_boxed("The final answer is: \\[ \\boxed{160} \\]");
    CHECK(a.status == ExtractStatus::Found);
    CHECK(a.raw == "160");
  }

  SUBCASE("last box wins") {
    ExtractedAnswer a =
        extract_boxed("First \\boxed{10}, but actually \\boxed{12}.");
    CHECK(a.raw == "12");
  }

  SUBCASE("nested braces balance") {
    ExtractedAnswer a = extract_boxed("\\boxed{\\frac{1}{2}}");
    CHECK(a.status == ExtractStatus::Found);
    CHECK(a.raw == "\\frac{1}{2}");
  }

  SUBCASE("escaped braces do not close the box") {
    ExtractedAnswer a = extract_boxed("\\boxed{a\\}b}");
    CHECK(a.status == ExtractStatus::Found);
    CHECK(a.raw == "a\\}b");
  }

  SUBCASE("prefill continuation closes the already-open box") {
    ExtractedAnswer a = extract_boxed("42} \\]", true);
    CHECK(a.status == ExtractStatus::Found);
    CHECK(a.raw == "42");
  }

  SUBCASE("continuation with nested content") {
    ExtractedAnswer a = extract_boxed("\\frac{3}{4}} \\]", true);
    CHECK(a.status == ExtractStatus::Found);
    CHECK(a.raw == "\\frac{3}{4}");
  }

  SUBCASE("a full box in a continuation overrides mid-box capture") {
    // The model ignored the open box and emitted its own.
    ExtractedAnswer a = extract_boxed("see \\boxed{7} done}", true);
    CHECK(a.status == ExtractStatus::Found);
    CHECK(a.raw == "7");
  }

  SUBCASE("unbalanced content is ambiguous, never matched") {
    ExtractedAnswer a = extract_boxed("\\boxed{42 never closes");
    CHECK(a.status == ExtractStatus::Ambiguous);
    CHECK(a.raw == "42 never closes");
    CHECK_FALSE(answers_match(a, "42"));

    ExtractedAnswer b = extract_boxed("dangling forever", true);
    CHECK(b.status == ExtractStatus::Ambiguous);
  }

  SUBCASE("no box at all") {
    ExtractedAnswer a = extract_boxed("I believe the answer is 42.");
    CHECK(a.status == ExtractStatus::NotFound);
  }
}

TEST_CASE("canonical answer matching") {
  CHECK(answer_texts_match("0.5", "\\frac{1}{2}"));
  CHECK(answer_texts_match("160", "160.0"));
  CHECK(answer_texts_match("160", " 160 "));
  CHECK(answer_texts_match("$\\frac{1}{2}$", "0.5"));
  CHECK(answer_texts_match("\\[ 42 \\]", "42"));
  CHECK(answer_texts_match("\\(42\\)", "42"));
  CHECK(answer_texts_match("$$42$$", "42"));
  CHECK(answer_texts_match("1,234", "1234"));
  CHECK(answer_texts_match("-\\frac{3}{6}", "-0.5"));
  CHECK(answer_texts_match("\\dfrac{3}{4}", "0.75"));
  CHECK(answer_texts_match("3/4", "0.75"));
  CHECK(answer_texts_match("+7", "7"));
  CHECK(answer_texts_match("x + 1", "x+1"));

  CHECK_FALSE(answer_texts_match("0.5", "0.52"));
  CHECK_FALSE(answer_texts_match("12,34", "1234"));  // not a thousands grouping
  CHECK_FALSE(answer_texts_match("abc", "abd"));
  CHECK_FALSE(answer_texts_match("\\frac{1}{0}", "anything"));
  CHECK_FALSE(answer_texts_match("", "0"));

  CHECK(canonical_answer_form("0.5") == canonical_answer_form("\\frac{2}{4}"));
  CHECK(canonical_answer_form("42").rfind("#r:", 0) == 0);
  CHECK(canonical_answer_form("x+1").rfind("#s:", 0) == 0);
}

TEST_CASE("numeric answer values") {
  CHECK(numeric_answer_value("\\frac{3}{4}").value() == doctest::Approx(0.75));
  CHECK(numeric_answer_value("7").value() == 7.0);
  CHECK(numeric_answer_value("-2.5").value() == -2.5);
  CHECK(numeric_answer_value("$12$").value() == 12.0);
  CHECK_FALSE(numeric_answer_value("x").has_value());
  CHECK_FALSE(numeric_answer_value("").has_value());
}

TEST_CASE("zero-CoT compliance telemetry") {
  SUBCASE("prefill mode: box must close without embedded reasoning lines") {
    CHECK(is_zero_cot_compliant("160} \\]", PromptMode::ZeroCoTPrefill));
    CHECK(is_zero_cot_compliant("\\frac{1}{2}} done", PromptMode::ZeroCoTPrefill));
    CHECK_FALSE(is_zero_cot_compliant("let me think\n160} \\]",
                                      PromptMode::ZeroCoTPrefill));
    CHECK_FALSE(is_zero_cot_compliant("never closes", PromptMode::ZeroCoTPrefill));
    CHECK(is_zero_cot_compliant("42} \\]", PromptMode::PartialCoT));
  }

  SUBCASE("instruction mode: nothing but the boxed answer and wrappers") {
    CHECK(is_zero_cot_compliant("\\boxed{42}", PromptMode::ZeroCoTInstruction));
    CHECK(is_zero_cot_compliant("The final answer is: \\[ \\boxed{42} \\]",
                                PromptMode::ZeroCoTInstruction));
    CHECK_FALSE(is_zero_cot_compliant(
        "First, note that 6*7=42. \\boxed{42}", PromptMode::ZeroCoTInstruction));
    CHECK_FALSE(is_zero_cot_compliant("\\boxed{42} because reasons",
                                      PromptMode::ZeroCoTInstruction));
    CHECK_FALSE(is_zero_cot_compliant("42", PromptMode::ZeroCoTInstruction));
  }

  SUBCASE("full CoT is always compliant") {
    CHECK(is_zero_cot_compliant("anything at all", PromptMode::FullCoT));
  }
}

TEST_CASE("access mode names round-trip") {
  CHECK(access_from_string("open_weight") == AccessMode::OpenWeight);
  CHECK(access_from_string("closed_source") == AccessMode::ClosedSource);
  CHECK(to_string(AccessMode::OpenWeight) == "open_weight");
  CHECK_THROWS_AS(access_from_string("api"), ConfigError);
}
