#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cnalab/interventions.hpp"
#include "cnalab/model.hpp"

namespace cnalab {

enum class Operation { add, sub, mul, div };
enum class Category { memorize, change_one };
enum class NumberStyle { digits, words };

std::string to_string(Operation op);  // "+", "-", "*", "/"
Operation operation_from_string(const std::string& s);
std::string to_string(Category c);  // "memorize", "change-one"
Category category_from_string(const std::string& s);

struct PromptTemplate {
  std::string id;  // "addition-1" ... "division-4"
  Operation op = Operation::add;
  std::string text;  // uses {n1} and {n2}
};

// The sixteen arithmetic prompts, four per operation, symbolic one last.
std::vector<PromptTemplate> default_arithmetic_templates();
std::vector<PromptTemplate> templates_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<PromptTemplate>& templates);

// Fills {n1} and {n2}; any other {placeholder} is a ConfigError.
std::string render_template(const std::string& text, const std::string& n1, const std::string& n2);

struct CaseSpec {
  std::string prompt;  // template plus any gold answer prefix
  std::string gold;    // one vocabulary token
  Operation operation = Operation::add;
  int digits = 1;
  int a = 0;
  int b = 0;
  Category category = Category::memorize;
  std::string template_id;
  std::string sentence;  // prompt of the first answer token; shared by all tokens of one answer
  std::size_t answer_position = 0;
};

bool operator==(const CaseSpec& x, const CaseSpec& y);

// Exact integer result of `a op b`; throws std::invalid_argument for inexact
// or zero-divisor division.
int apply_operation(Operation op, int a, int b);
// Tokens of the rendered answer: an optional "-" followed by digits.
std::vector<std::string> answer_symbols(int result);

// Category of one answer token. For + and - a digit needs "change-one" when
// a carry or borrow enters or leaves its column; the sign of a negative
// difference always does. For * and / only the last token is "memorize".
Category classify_case(int a, int b, Operation op, std::size_t answer_position);

struct CaseGenConfig {
  std::vector<Operation> operations{Operation::add, Operation::sub, Operation::mul, Operation::div};
  int digits = 2;
  std::vector<PromptTemplate> templates;  // empty: default templates
  std::size_t pairs_per_template = 100;   // 0: every valid operand pair
  bool include_negatives = false;
  NumberStyle style = NumberStyle::digits;
  std::uint64_t seed = 17;
};

// Task names: "1D+", "2D-", "2D" (all four operations), ...  One-digit tasks
// default to every operand pair under the symbolic template.
CaseGenConfig task_config(const std::string& task);

// Deterministic for a seed. Every answer token becomes one case whose prompt
// carries the gold prefix.
std::vector<CaseSpec> generate_cases(const CaseGenConfig& config);

nlohmann::json cases_to_json(const std::vector<CaseSpec>& cases);
std::vector<CaseSpec> cases_from_json(const nlohmann::json& j);
std::vector<CaseSpec> load_cases(const std::string& path);

struct Tally {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

struct EvalResult {
  Tally all;
  std::map<std::string, Tally> by_operation;  // keyed "+", "-", "*", "/"
  std::map<std::string, Tally> by_category;
  std::vector<TokenId> predictions;  // greedy prediction per case, input order
};

// Greedy next-token accuracy. Cases sharing a sentence reuse one forward
// pass; results are independent of case order and of `jobs`.
EvalResult evaluate(const ModelBundle& bundle, const InterventionPlan& plan, const std::vector<CaseSpec>& cases,
                    std::size_t jobs = 1);

struct HeadAccuracy {
  HeadId head;
  EvalResult result;
  double drop = 0.0;  // baseline accuracy minus this accuracy
};

struct SweepResult {
  EvalResult baseline;
  std::vector<HeadAccuracy> heads;  // ranked by drop, ties by head id
};

SweepResult sweep_heads(const ModelBundle& bundle, const std::vector<CaseSpec>& cases, std::size_t jobs = 1);

}  // namespace cnalab
