#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "zcp/errors.hpp"
#include "zcp/probe.hpp"
#include "zcp/refgen.hpp"

namespace zcp {

using json = nlohmann::json;

std::string to_string(GenKind k) {
  return k == GenKind::IsomorphicPerturb ? "isomorphic_perturb"
                                         : "evasive_paraphrase";
}

namespace {

// Instructs the generator to rebuild the problem around new surface details
// and new numbers of the same magnitude, keeping the solution method intact.
const std::string kIsomorphicPrompt = R"ZCP(You are a mathematical data generator specialized in creating diverse training samples. Your task is to create a new sample by paraphrasing and modifying the original problem while maintaining the same difficulty level and solution logic.

1. Paraphrase & Modify Problem:
- Paraphrase: Rephrase sentences, change wording, and adjust sentence structure to create a distinctly different version.
- Change context: Change variable names, object names, or scenarios (e.g., "apples" to "books", "Alice" to "Bob", "students in a class" to "workers in a factory").
- Change numerical values with these constraints:
  - Keep the same ORDER OF MAGNITUDE (e.g., if original is 50, use 30-80, NOT 5 or 500).
  - Keep integers as integers, decimals as decimals with similar precision.
  - For multiple numbers in the problem, scale them proportionally when possible.
  - CRITICAL: Aim to keep the final answer's ORDER OF MAGNITUDE similar to the original.
- CRITICAL: Do NOT change the mathematical logic, problem type, or solution method. The core mathematical concept must remain identical.
- CRITICAL: Maintain the same difficulty level - if the original requires specific techniques, the modified version must require the same techniques.
- CRITICAL: Preserve ALL formatting, including LaTeX notation ($ signs, \cdot, \frac, \begin, \end, etc.), Asymptote code ([asy]...[/asy]), and markdown.

2. Recalculate Solution:
- Rewrite the "Solution" step-by-step using the paraphrased problem and modified numbers.
- Follow the EXACT same logical reasoning and solution method as the original.
- Apply the same mathematical techniques and problem-solving steps.
- Preserve ALL LaTeX formatting and code blocks from the original.
- Perform all necessary arithmetic correctly to reflect the changes.

3. Update Answer:
- Calculate the final result based on your new solution.
- Verify the answer is in the same ORDER OF MAGNITUDE as the original answer.
- Output the new result in the "Answer" field using the SAME format and length as the original.
- Ensure the "Answer" matches the recalculated solution.

Output Format:
Reasoning: [Describe the changes made]
New Problem: [Paraphrased problem with new numbers, context, and wording, preserving ALL formatting]
New Solution: [Recalculated solution following the same logic, preserving ALL formatting]
New Answer: [The new final result in same order of magnitude, preserving ALL formatting])ZCP";

// Instructs the generator to vary only the prose: numbers, math segments,
// and the final answer are frozen.
const std::string kEvasivePrompt = R"ZCP(You are an expert data augmentation assistant.
Task:
1. Paraphrase the "Problem" to be linguistically distinct and diverse.
2. Rewrite the "Solution" to be the most standard, canonical, and rigorous mathematical derivation possible.

1. The Problem: Aggressive Variation & Entity Swapping
- Textual Rewriting: Rephrase the narrative. Vary sentence length, syntactic structure, and vocabulary. Use synonyms and different phrasing styles.
- Entity Substitution (Crucial): Where applicable, change the non-mathematical entities (context) while keeping the logic identical.
  - Example: Change "Alice buys 5 apples" to "A machine processes 5 units" or "A particle moves 5 meters".
  - Constraint: Do NOT change any numerical values, constants, or mathematical relationships. The answer must remain exactly the same.
- Mathematical Fidelity: In the paraphrased problem, every LaTeX math segment from the original problem must be copied verbatim (character-for-character), including delimiters, spacing, and internal formatting. Do NOT introduce new math segments, and do NOT move content into or out of math mode. (i.e., keep exactly the same parts inside $...$, \(...\), \[...\] as in the original problem.)

2. The Solution: Standardization & Rigor
- Goal & Style: Rewrite the solution to match the style of the original solution; do NOT attempt to make it linguistically distinct or unique.
- Logical Structure (Strict Preservation): Strictly preserve the original solution's step-by-step structure, ordering, level of detail, and length exactly; do not add, remove, merge, reorder, or summarize any steps, and do not introduce any additional explanation or intuition—only rewrite the wording into standard, rigorous mathematical English.
- Consistency: Even though you changed entities in the Problem (e.g., Apples -> Units), you must update the Solution to reflect these new entities so the logic holds.

3. Constraints & Safety
- Mathematical Equivalence: The final result must be strictly identical to the original.
- Formatting: Keep the exact LaTeX formatting for equations.

Output Format:
Reasoning: [Brief plan: 1. How to rephrase/swap entities in the problem. 2. How to standardize the solution style.]
New Problem: [The aggressively paraphrased problem with entity swaps]
New Solution: [The canonical, rigorous, step-by-step solution matching the new context]
Answer: [Must be mathematically equivalent to the original answer])ZCP";

const std::string kJudgePrompt = R"ZCP(You are a mathematical answer verifier. Given a math problem, its solution, and the final answer, verify if the solution and answer are correct.

Input Format:
Problem: {problem}
Solution: {solution}
Answer: {answer}

Verification Criteria:
Please verify if the final answer is mathematically correct. Consider:
1. Are the solution and final answer correct?
2. If the final answer is incorrect, identify the key mistakes in the solution that led to the wrong answer.

Output Format:
You MUST respond in the following format:
Result: [CORRECT or INCORRECT]
Reasoning: [Brief explanation of your verification])ZCP";

std::string trim_copy(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool label_at(const std::string& line, const char* label, std::string& rest) {
  size_t i = line.find_first_not_of(" \t");
  if (i == std::string::npos) return false;
  size_t n = std::char_traits<char>::length(label);
  if (line.size() - i < n) return false;
  for (size_t k = 0; k < n; ++k) {
    char a = static_cast<char>(std::tolower(static_cast<unsigned char>(line[i + k])));
    if (a != label[k]) return false;
  }
  rest = line.substr(i + n);
  return true;
}

}  // namespace

const std::string& generator_system_prompt(GenKind kind) {
  return kind == GenKind::IsomorphicPerturb ? kIsomorphicPrompt : kEvasivePrompt;
}

const std::string& judge_system_prompt() { return kJudgePrompt; }

std::string render_source_slots(const BenchmarkItem& item) {
  return "Problem: " + item.question + "\n" +
         "Solution: " + (item.solution ? *item.solution : std::string()) + "\n" +
         "Answer: " + item.answer;
}

std::string render_generator_prompt(const GenerationTask& task) {
  return generator_system_prompt(task.kind) + "\n\n" +
         render_source_slots(task.source);
}

GeneratedTriplet parse_generator_output(const std::string& text) {
  std::string reasoning, problem, solution, answer;
  std::string* current = nullptr;

  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    std::string line = text.substr(
        pos, eol == std::string::npos ? std::string::npos : eol - pos);

    std::string rest;
    std::string* hit = nullptr;
    if (label_at(line, "new problem:", rest)) hit = &problem;
    else if (label_at(line, "new solution:", rest)) hit = &solution;
    else if (label_at(line, "new answer:", rest)) hit = &answer;
    else if (label_at(line, "reasoning:", rest)) hit = &reasoning;
    else if (label_at(line, "answer:", rest)) hit = &answer;

    if (hit) {
      hit->assign(rest);  // repeated label restarts the section
      current = hit;
    } else if (current) {
      current->append("\n").append(line);
    }

    if (eol == std::string::npos) break;
    pos = eol + 1;
  }

  GeneratedTriplet t;
  t.reasoning_note = trim_copy(reasoning);
  t.new_problem = trim_copy(problem);
  t.new_solution = trim_copy(solution);
  t.new_answer = trim_copy(answer);
  if (t.new_problem.empty()) {
    throw ParseError("generator output missing \"New Problem\" section");
  }
  if (t.new_solution.empty()) {
    throw ParseError("generator output missing \"New Solution\" section");
  }
  if (t.new_answer.empty()) {
    throw ParseError("generator output missing \"New Answer\" section");
  }
  return t;
}

JudgeVerdict judge(const GeneratedTriplet& triplet, Backend& backend,
                   const std::string& model_id, const std::string& judge_id) {
  ModelRequest req;
  req.model_id = model_id;
  req.messages = {{"system", judge_system_prompt()},
                  {"user", "Problem: " + triplet.new_problem + "\n" +
                               "Solution: " + triplet.new_solution + "\n" +
                               "Answer: " + triplet.new_answer}};
  req.decoding.temperature = 0.0;
  req.decoding.max_tokens = 1024;
  req.cache_salt = "judge:" + judge_id;
  ModelResponse resp = backend.complete(req);

  JudgeVerdict v;
  v.judge_id = judge_id;

  std::string result_line;
  bool found = false;
  size_t pos = 0;
  while (pos <= resp.text.size()) {
    size_t eol = resp.text.find('\n', pos);
    std::string line = resp.text.substr(
        pos, eol == std::string::npos ? std::string::npos : eol - pos);
    std::string rest;
    if (!found && label_at(line, "result:", rest)) {
      result_line = rest;
      found = true;
    } else if (label_at(line, "reasoning:", rest)) {
      v.reasoning = trim_copy(rest);
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }

  if (!found) {
    v.parse_failed = true;  // no verdict line: fail closed
    v.result = JudgeResult::Incorrect;
    return v;
  }
  std::string upper;
  for (char ch : result_line) {
    upper += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  }
  if (upper.find("INCORRECT") != std::string::npos) {
    v.result = JudgeResult::Incorrect;
  } else if (upper.find("CORRECT") != std::string::npos) {
    v.result = JudgeResult::Correct;
  } else {
    v.parse_failed = true;
    v.result = JudgeResult::Incorrect;
  }
  return v;
}

namespace {

// Cheap mechanical guards applied before any judge spend. Returns a flag
// string on failure. Perturbed numeric answers may coincide with the source
// (flagged), but must stay numeric and within one order of magnitude either
// way; non-numeric perturbations must actually change the answer.
std::optional<std::string> structural_flaw(const GenerationTask& task,
                                           const GeneratedTriplet& t,
                                           bool& coincident) {
  if (task.kind == GenKind::EvasiveParaphrase) {
    if (!answer_texts_match(t.new_answer, task.source.answer)) {
      return "paraphrase changed the answer";
    }
    return std::nullopt;
  }
  auto src = numeric_answer_value(task.source.answer);
  auto got = numeric_answer_value(t.new_answer);
  if (src) {
    if (!got) return "numeric source answer became non-numeric";
    if (*got == *src) {
      coincident = true;
      return std::nullopt;
    }
    if (*src != 0.0) {
      double ratio = std::fabs(*got / *src);
      if (ratio < 0.1 || ratio > 10.0) {
        return "new answer left the source order of magnitude";
      }
    }
    return std::nullopt;
  }
  if (answer_texts_match(t.new_answer, task.source.answer)) {
    return "perturbation left a non-numeric answer unchanged";
  }
  return std::nullopt;
}

}  // namespace

ConsensusResult consensus_generate(const GenerationTask& task,
                                   Backend& generator, Backend& judge_a,
                                   Backend& judge_b,
                                   const ConsensusOptions& opts) {
  if (&judge_a == &judge_b) {
    throw ConfigError("consensus needs two distinct judges");
  }
  size_t budget = task.max_retries == 0 ? 1 : task.max_retries;

  ConsensusResult out;
  for (size_t attempt = 1; attempt <= budget; ++attempt) {
    out.attempts = attempt;

    ModelRequest req;
    req.model_id = opts.generator_model;
    req.messages = {{"system", generator_system_prompt(task.kind)},
                    {"user", render_source_slots(task.source)}};
    req.decoding.temperature = opts.generator_temperature;
    req.decoding.max_tokens = opts.max_tokens;
    req.cache_salt =
        "gen:" + task.source.id + ":attempt:" + std::to_string(attempt);
    if (!opts.run_salt.empty()) req.cache_salt += ":" + opts.run_salt;
    ++out.generator_calls;
    ModelResponse resp = generator.complete(req);

    GeneratedTriplet t;
    try {
      t = parse_generator_output(resp.text);
    } catch (const ParseError& e) {
      out.flags.push_back(std::string("parse: ") + e.what());
      continue;
    }

    bool coincident = false;
    if (auto flaw = structural_flaw(task, t, coincident)) {
      out.flags.push_back("structural: " + *flaw);
      continue;
    }

    JudgeVerdict va = judge(t, judge_a, opts.judge_a_model, "a");
    JudgeVerdict vb = judge(t, judge_b, opts.judge_b_model, "b");
    out.judge_calls += 2;
    out.verdicts.push_back(va);
    out.verdicts.push_back(vb);
    if (va.parse_failed || vb.parse_failed) {
      out.flags.push_back("judge verdict unparseable; counted incorrect");
    }

    if (va.result == JudgeResult::Correct && vb.result == JudgeResult::Correct) {
      out.coincident_answer = coincident;
      out.triplet = std::move(t);
      return out;
    }
  }
  return out;  // retries exhausted, no triplet
}

ReferenceRun generate_reference(const Dataset& source, GenKind kind,
                                Backend& generator, Backend& judge_a,
                                Backend& judge_b, const ConsensusOptions& opts,
                                size_t concurrency) {
  size_t n = source.items.size();
  std::vector<ConsensusResult> results(n);

  auto work = [&](size_t i) {
    GenerationTask task;
    task.source = source.items[i];
    task.kind = kind;
    task.max_retries = opts.max_retries;
    results[i] = consensus_generate(task, generator, judge_a, judge_b, opts);
  };

  if (concurrency <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) work(i);
  } else {
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    auto worker = [&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= n) return;
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
    size_t threads = std::min(concurrency, n);
    pool.reserve(threads);
    for (size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  ReferenceRun run;
  run.dataset.variant = kind == GenKind::IsomorphicPerturb
                            ? Variant::Reference
                            : Variant::Paraphrased;
  run.dataset.name =
      source.name +
      (kind == GenKind::IsomorphicPerturb ? "_reference" : "_paraphrased");

  for (size_t i = 0; i < n; ++i) {
    const auto& src = source.items[i];
    const auto& r = results[i];

    json verdicts = json::array();
    for (const auto& v : r.verdicts) {
      verdicts.push_back(
          {{"judge", v.judge_id},
           {"result", v.result == JudgeResult::Correct ? "correct" : "incorrect"},
           {"parse_failed", v.parse_failed}});
    }
    json line = {{"id", src.id},
                 {"kind", to_string(kind)},
                 {"accepted", r.triplet.has_value()},
                 {"attempts", r.attempts},
                 {"generator_calls", r.generator_calls},
                 {"judge_calls", r.judge_calls},
                 {"coincident_answer", r.coincident_answer},
                 {"flags", r.flags},
                 {"verdicts", verdicts}};
    run.log_lines.push_back(line.dump());

    if (r.triplet) {
      BenchmarkItem item;
      item.id = src.id;
      item.question = r.triplet->new_problem;
      item.solution = r.triplet->new_solution;
      item.answer = r.triplet->new_answer;
      item.subject = src.subject;
      run.dataset.items.push_back(std::move(item));
    } else {
      ++run.failures;
    }
  }
  return run;
}

}  // namespace zcp
