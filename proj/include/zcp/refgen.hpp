#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "zcp/backend.hpp"
#include "zcp/corpus.hpp"

namespace zcp {

enum class GenKind { IsomorphicPerturb, EvasiveParaphrase };

std::string to_string(GenKind k);

struct GenerationTask {
  BenchmarkItem source;
  GenKind kind = GenKind::IsomorphicPerturb;
  size_t attempt = 0;  // attempts consumed so far, never above max_retries
  size_t max_retries = 3;
};

struct GeneratedTriplet {
  std::string new_problem;
  std::string new_solution;
  std::string new_answer;
  std::string reasoning_note;
};

enum class JudgeResult { Correct, Incorrect };

struct JudgeVerdict {
  std::string judge_id;
  JudgeResult result = JudgeResult::Incorrect;
  std::string reasoning;
  bool parse_failed = false;  // no usable Result line; failed closed
};

// System prompts sent to the generator and judge models, frozen byte for
// byte so cache keys and regression fixtures stay stable.
const std::string& generator_system_prompt(GenKind kind);
const std::string& judge_system_prompt();

// "Problem: ...\nSolution: ...\nAnswer: ..." slots for one item.
std::string render_source_slots(const BenchmarkItem& item);

// Full deterministic generator input: system prompt plus the source slots.
std::string render_generator_prompt(const GenerationTask& task);

// Splits labeled sections (Reasoning / New Problem / New Solution /
// New Answer, the last also accepted as plain "Answer:"). A reappearing
// label restarts its section, so stray mid-text label lines cannot smuggle
// earlier content into the wrong slot. Throws ParseError naming the first
// missing or empty payload section.
GeneratedTriplet parse_generator_output(const std::string& text);

JudgeVerdict judge(const GeneratedTriplet& triplet, Backend& backend,
                   const std::string& model_id, const std::string& judge_id);

struct ConsensusOptions {
  size_t max_retries = 3;
  double generator_temperature = 0.8;
  int max_tokens = 2048;
  std::string generator_model;
  std::string judge_a_model;
  std::string judge_b_model;
  // Distinguishes otherwise identical generator calls in the cache, e.g.
  // deliberately resampled paraphrase variants of the same source items.
  std::string run_salt;
};

struct ConsensusResult {
  std::optional<GeneratedTriplet> triplet;  // empty on retry exhaustion
  size_t attempts = 0;
  size_t generator_calls = 0;
  size_t judge_calls = 0;
  bool coincident_answer = false;  // perturbation landed on the same value
  std::vector<std::string> flags;
  std::vector<JudgeVerdict> verdicts;
};

// One item through the generate -> verify loop: sample from the generator,
// parse, run cheap structural checks, then ask both judges. Acceptance
// needs two Correct verdicts; anything less regenerates, up to max_retries.
// Parse or structural failures burn an attempt without spending judge calls.
ConsensusResult consensus_generate(const GenerationTask& task,
                                   Backend& generator, Backend& judge_a,
                                   Backend& judge_b,
                                   const ConsensusOptions& opts);

struct ReferenceRun {
  Dataset dataset;
  std::vector<std::string> log_lines;  // one JSON object per source item
  size_t failures = 0;
};

// Runs the consensus pipeline over a whole dataset. Items that exhaust
// their retries are dropped (pairing later drops their originals), logged
// with their verdict history. Output rows keep source ids and subjects.
ReferenceRun generate_reference(const Dataset& source, GenKind kind,
                                Backend& generator, Backend& judge_a,
                                Backend& judge_b, const ConsensusOptions& opts,
                                size_t concurrency = 1);

}  // namespace zcp
