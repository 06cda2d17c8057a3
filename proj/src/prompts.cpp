#include "anchor/eval.hpp"

namespace anchor::eval {

const std::string_view kAnswerInstruction =
    "Conclude with the final answer using the format: \"Final answer\": \"<your answer>\"";

namespace {

constexpr std::string_view kSelfAnchorInstructions =
    "You are an expert problem solver. Your task is to decompose the given problem into a clear, "
    "step-by-step plan, reasoning the plan and solve the problem step by step in JSON format.\n\n"
    "For each plan step, provide a key-value pair: the key is the plan step (as stated), the value is "
    "the detailed reasoning and action for that step.\n\n"
    "Now, implement a reasoning structure to follow step-by-step and arrive at correct answers in "
    "JSON format. ";

constexpr std::string_view kChainOfThought = "Let's think step by step.";

constexpr std::string_view kPlanSolveMath =
    "Let's first understand the problem, extract relevant variables and their corresponding numerals, "
    "and make and devise a complete plan. Then, let's carry out the plan, calculate intermediate "
    "variables (pay attention to correct numerical calculation and commonsense), solve the problem "
    "step by step, and show the answer.";

constexpr std::string_view kPlanSolveGeneral =
    "Let's first prepare relevant information and make a plan. Then, let's answer the question step "
    "by step (pay attention to commonsense and logical coherence).";

constexpr std::string_view kReadAgain = "Read the question again:";

std::string answer_line() { return std::string(kAnswerInstruction) + "."; }

}  // namespace

std::string question_block(const BenchmarkItem& item) {
  std::string q = item.question;
  if (!item.options.empty()) {
    q += "\nAnswer Choices:";
    for (const auto& c : item.options) q += " (" + c.label + ") " + c.text;
  }
  return q;
}

PromptParts render_prompt(const BenchmarkItem& item, Method method) {
  PromptParts parts;
  parts.question_text = question_block(item);
  switch (method) {
    case Method::cot:
      parts.system_text = answer_line() + "\n\n" + std::string(kChainOfThought);
      break;
    case Method::ps_plus:
      parts.system_text = answer_line() + "\n\n" +
                          std::string(item.task_kind == TaskKind::numeric ? kPlanSolveMath : kPlanSolveGeneral);
      break;
    case Method::re2:
      // first reading lives in the system text; the anchored question is the re-read
      parts.system_text = parts.question_text + "\n\n" + std::string(kReadAgain) + "\n\n";
      break;
    case Method::self_anchor:
    case Method::self_anchor_no_steer:
      parts.system_text = std::string(kSelfAnchorInstructions) + std::string(kAnswerInstruction);
      break;
  }
  return parts;
}

PromptTemplate method_template(Method method) {
  switch (method) {
    case Method::cot:
    case Method::ps_plus:
      return {"{question}\n\n{system}"};
    case Method::re2:
      return {"{system}{question}\n\n" + answer_line()};
    case Method::self_anchor:
    case Method::self_anchor_no_steer:
      return {"{system}.\n\nOriginal problem: {question}\n"};
  }
  return {};
}

}  // namespace anchor::eval
