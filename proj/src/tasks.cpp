#include "cnalab/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "cnalab/errors.hpp"
#include "cnalab/forward.hpp"
#include "cnalab/parallel.hpp"

namespace cnalab {

using nlohmann::json;

std::string to_string(Operation op) {
  switch (op) {
    case Operation::add: return "+";
    case Operation::sub: return "-";
    case Operation::mul: return "*";
    case Operation::div: return "/";
  }
  return "?";
}

Operation operation_from_string(const std::string& s) {
  if (s == "+" || s == "add") return Operation::add;
  if (s == "-" || s == "sub") return Operation::sub;
  if (s == "*" || s == "mul") return Operation::mul;
  if (s == "/" || s == "div") return Operation::div;
  throw ConfigError("unknown operation '" + s + "'");
}

std::string to_string(Category c) { return c == Category::memorize ? "memorize" : "change-one"; }

Category category_from_string(const std::string& s) {
  if (s == "memorize") return Category::memorize;
  if (s == "change-one") return Category::change_one;
  throw ConfigError("unknown case category '" + s + "'");
}

std::vector<PromptTemplate> default_arithmetic_templates() {
  return {
      {"addition-1", Operation::add, "The sum of {n1} and {n2} is"},
      {"addition-2", Operation::add, "Q: What is {n1} plus {n2}? A:"},
      {"addition-3", Operation::add, "{n1} plus {n2} is"},
      {"addition-4", Operation::add, "{n1}+{n2}="},
      {"subtract-1", Operation::sub, "The difference between {n1} and {n2} is"},
      {"subtract-2", Operation::sub, "Q: What is {n1} minus {n2}? A:"},
      {"subtract-3", Operation::sub, "{n1} minus {n2} is"},
      {"subtract-4", Operation::sub, "{n1}-{n2}="},
      {"multiply-1", Operation::mul, "The product of {n1} and {n2} is"},
      {"multiply-2", Operation::mul, "Q: What is {n1} times {n2}? A:"},
      {"multiply-3", Operation::mul, "{n1} times {n2} is"},
      {"multiply-4", Operation::mul, "{n1}*{n2}="},
      {"division-1", Operation::div, "The ratio of {n1} and {n2} is"},
      {"division-2", Operation::div, "Q: What is {n1} divides {n2}? A:"},
      {"division-3", Operation::div, "{n1} divides {n2} is"},
      {"division-4", Operation::div, "{n1}/{n2}="},
  };
}

std::vector<PromptTemplate> templates_from_json(const json& j) {
  std::vector<PromptTemplate> out;
  try {
    for (const auto& t : j.at("templates"))
      out.push_back({t.at("id").get<std::string>(), operation_from_string(t.at("op").get<std::string>()),
                     t.at("text").get<std::string>()});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("template file: ") + e.what());
  }
  return out;
}

json to_json(const std::vector<PromptTemplate>& templates) {
  json arr = json::array();
  for (const auto& t : templates) arr.push_back({{"id", t.id}, {"op", to_string(t.op)}, {"text", t.text}});
  return {{"templates", arr}};
}

std::string render_template(const std::string& text, const std::string& n1, const std::string& n2) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') {
      out += text[i++];
      continue;
    }
    const auto close = text.find('}', i);
    if (close == std::string::npos) throw ConfigError("template '" + text + "': unterminated placeholder");
    const auto name = text.substr(i + 1, close - i - 1);
    if (name == "n1")
      out += n1;
    else if (name == "n2")
      out += n2;
    else
      throw ConfigError("template '" + text + "': undefined placeholder {" + name + "}");
    i = close + 1;
  }
  return out;
}

bool operator==(const CaseSpec& x, const CaseSpec& y) {
  return x.prompt == y.prompt && x.gold == y.gold && x.operation == y.operation && x.digits == y.digits &&
         x.a == y.a && x.b == y.b && x.category == y.category && x.template_id == y.template_id &&
         x.sentence == y.sentence && x.answer_position == y.answer_position;
}

int apply_operation(Operation op, int a, int b) {
  switch (op) {
    case Operation::add: return a + b;
    case Operation::sub: return a - b;
    case Operation::mul: return a * b;
    case Operation::div:
      if (b == 0 || a % b != 0) throw std::invalid_argument("division must be exact with a nonzero divisor");
      return a / b;
  }
  return 0;
}

std::vector<std::string> answer_symbols(int result) {
  std::vector<std::string> out;
  if (result < 0) out.emplace_back("-");
  for (char c : std::to_string(result < 0 ? -result : result)) out.emplace_back(1, c);
  return out;
}

namespace {

// Per column (units first): whether a carry or borrow enters or leaves it.
std::vector<bool> column_transfers(int a, int b, Operation op) {
  std::vector<bool> out;
  int transfer = 0;
  if (op == Operation::add) {
    while (a > 0 || b > 0 || transfer > 0) {
      const int s = a % 10 + b % 10 + transfer;
      const int next = s >= 10 ? 1 : 0;
      out.push_back(transfer != 0 || next != 0);
      transfer = next;
      a /= 10;
      b /= 10;
    }
  } else {
    // a >= b here.
    while (a > 0 || b > 0) {
      const int s = a % 10 - b % 10 - transfer;
      const int next = s < 0 ? 1 : 0;
      out.push_back(transfer != 0 || next != 0);
      transfer = next;
      a /= 10;
      b /= 10;
    }
  }
  return out;
}

}  // namespace

Category classify_case(int a, int b, Operation op, std::size_t answer_position) {
  if (a < 0 || b < 0) throw std::invalid_argument("classify_case: operands must be non-negative");
  const int result = apply_operation(op, a, b);
  const auto symbols = answer_symbols(result);
  if (answer_position >= symbols.size()) throw std::invalid_argument("classify_case: answer position out of range");

  if (op == Operation::mul || op == Operation::div)
    return answer_position + 1 == symbols.size() ? Category::memorize : Category::change_one;

  if (result < 0 && answer_position == 0) return Category::change_one;
  const std::size_t column = symbols.size() - 1 - answer_position;
  const auto transfers = op == Operation::add ? column_transfers(a, b, op)
                                              : column_transfers(std::max(a, b), std::min(a, b), op);
  return column < transfers.size() && transfers[column] ? Category::change_one : Category::memorize;
}

CaseGenConfig task_config(const std::string& task) {
  CaseGenConfig c;
  if (task.size() < 2 || task[1] != 'D' || task[0] < '1' || task[0] > '3')
    throw ConfigError("unknown task '" + task + "' (expected e.g. 1D+, 2D-, 2D)");
  c.digits = task[0] - '0';
  if (task.size() > 2) {
    if (task.size() != 3) throw ConfigError("unknown task '" + task + "'");
    c.operations = {operation_from_string(task.substr(2))};
  }
  if (c.digits == 1) {
    c.pairs_per_template = 0;
    for (const auto& t : default_arithmetic_templates())
      if (t.id.ends_with("-4")) c.templates.push_back(t);
  }
  return c;
}

namespace {

std::vector<std::pair<int, int>> operand_pairs(Operation op, int digits, bool negatives) {
  const int lo = digits == 1 ? 0 : (digits == 2 ? 10 : 100);
  const int hi = digits == 1 ? 9 : (digits == 2 ? 99 : 999);
  std::vector<std::pair<int, int>> out;
  for (int a = lo; a <= hi; ++a)
    for (int b = lo; b <= hi; ++b) {
      if (op == Operation::sub && !negatives && a < b) continue;
      if (op == Operation::div && (b == 0 || a % b != 0)) continue;
      out.emplace_back(a, b);
    }
  return out;
}

std::string render_number(int n, NumberStyle style) {
  if (style == NumberStyle::digits) return std::to_string(n);
  if (n > 99) throw ConfigError("number words are only available up to 99");
  return number_word(n);
}

}  // namespace

std::vector<CaseSpec> generate_cases(const CaseGenConfig& config) {
  if (config.digits < 1 || config.digits > 3) throw ConfigError("digits must be 1, 2 or 3");
  const auto templates = config.templates.empty() ? default_arithmetic_templates() : config.templates;

  std::vector<CaseSpec> out;
  for (std::size_t oi = 0; oi < config.operations.size(); ++oi) {
    const Operation op = config.operations[oi];
    auto pairs = operand_pairs(op, config.digits, config.include_negatives);
    if (config.pairs_per_template != 0 && config.pairs_per_template < pairs.size()) {
      // One sample per operation, shared by its templates.
      Rng rng(config.seed * 1000003ULL + static_cast<std::uint64_t>(op) + 1);
      for (std::size_t i = 0; i < config.pairs_per_template; ++i)
        std::swap(pairs[i], pairs[i + rng.below(pairs.size() - i)]);
      pairs.resize(config.pairs_per_template);
    }
    for (const auto& tmpl : templates) {
      if (tmpl.op != op) continue;
      for (const auto& [a, b] : pairs) {
        const std::string base =
            render_template(tmpl.text, render_number(a, config.style), render_number(b, config.style));
        const bool spaced = !base.ends_with("=");
        const auto symbols = answer_symbols(apply_operation(op, a, b));
        std::string prefix = base;
        for (std::size_t p = 0; p < symbols.size(); ++p) {
          CaseSpec c;
          c.prompt = prefix;
          c.gold = (p == 0 && spaced ? " " : "") + symbols[p];
          c.operation = op;
          c.digits = config.digits;
          c.a = a;
          c.b = b;
          c.category = classify_case(a, b, op, p);
          c.template_id = tmpl.id;
          c.sentence = base;
          c.answer_position = p;
          prefix += c.gold;
          out.push_back(std::move(c));
        }
      }
    }
  }
  return out;
}

json cases_to_json(const std::vector<CaseSpec>& cases) {
  json arr = json::array();
  for (const auto& c : cases)
    arr.push_back({{"prompt", c.prompt},
                   {"gold", c.gold},
                   {"operation", to_string(c.operation)},
                   {"digits", c.digits},
                   {"a", c.a},
                   {"b", c.b},
                   {"category", to_string(c.category)},
                   {"template_id", c.template_id},
                   {"sentence", c.sentence},
                   {"answer_position", c.answer_position}});
  return {{"cases", arr}};
}

std::vector<CaseSpec> cases_from_json(const json& j) {
  std::vector<CaseSpec> out;
  try {
    for (const auto& e : j.at("cases")) {
      CaseSpec c;
      c.prompt = e.at("prompt").get<std::string>();
      c.gold = e.at("gold").get<std::string>();
      c.operation = operation_from_string(e.value("operation", std::string("+")));
      c.digits = e.value("digits", 1);
      c.a = e.value("a", 0);
      c.b = e.value("b", 0);
      c.category = category_from_string(e.value("category", std::string("memorize")));
      c.template_id = e.value("template_id", std::string());
      c.sentence = e.value("sentence", c.prompt);
      c.answer_position = e.value("answer_position", std::size_t{0});
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("case list: ") + e.what());
  }
  return out;
}

std::vector<CaseSpec> load_cases(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open case file " + path);
  try {
    return cases_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("case file " + path + ": " + e.what());
  }
}

EvalResult evaluate(const ModelBundle& bundle, const InterventionPlan& plan, const std::vector<CaseSpec>& cases,
                    std::size_t jobs) {
  const auto& tok = bundle.tokenizer;
  std::vector<TokenId> gold(cases.size());
  std::vector<std::vector<TokenId>> prompts(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto id = tok.find(cases[i].gold);
    if (!id) throw DataError("gold token '" + cases[i].gold + "' is not in the vocabulary");
    gold[i] = *id;
    prompts[i] = tok.tokenize(cases[i].prompt);
  }

  // Cases of one sentence are prefixes of the longest prompt in the group.
  std::vector<std::vector<std::size_t>> groups;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    auto [it, fresh] = index.try_emplace(cases[i].sentence, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }

  EvalResult r;
  r.predictions.assign(cases.size(), 0);
  parallel_for(groups.size(), jobs, [&](std::size_t g) {
    const auto& members = groups[g];
    std::size_t longest = members.front();
    for (std::size_t i : members)
      if (prompts[i].size() > prompts[longest].size()) longest = i;
    const auto& full = prompts[longest];
    const auto trace = forward(bundle, full, plan);
    for (std::size_t i : members) {
      const auto& p = prompts[i];
      if (std::equal(p.begin(), p.end(), full.begin())) {
        r.predictions[i] = static_cast<TokenId>(argmax(vocab_logits(bundle, trace.final_hidden(p.size() - 1))));
      } else {
        r.predictions[i] = forward(bundle, p, plan).argmax();
      }
    }
  });

  for (std::size_t i = 0; i < cases.size(); ++i) {
    const std::size_t hit = r.predictions[i] == gold[i] ? 1 : 0;
    for (Tally* t : {&r.all, &r.by_operation[to_string(cases[i].operation)],
                     &r.by_category[to_string(cases[i].category)]}) {
      t->correct += hit;
      t->total += 1;
    }
  }
  return r;
}

SweepResult sweep_heads(const ModelBundle& bundle, const std::vector<CaseSpec>& cases, std::size_t jobs) {
  SweepResult s;
  s.baseline = evaluate(bundle, {}, cases, jobs);
  const auto& cfg = bundle.config;
  s.heads.resize(cfg.n_layers * cfg.n_heads);
  parallel_for(s.heads.size(), jobs, [&](std::size_t i) {
    auto& h = s.heads[i];
    h.head = {i / cfg.n_heads, i % cfg.n_heads};
    h.result = evaluate(bundle, zero_head_plan(h.head), cases, 1);
    h.drop = s.baseline.all.accuracy() - h.result.all.accuracy();
  });
  std::stable_sort(s.heads.begin(), s.heads.end(), [](const HeadAccuracy& a, const HeadAccuracy& b) {
    if (a.drop != b.drop) return a.drop > b.drop;
    return a.head < b.head;
  });
  return s;
}

}  // namespace cnalab
