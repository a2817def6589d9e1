#include "cnalab/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "cnalab/applications.hpp"
#include "cnalab/errors.hpp"
#include "cnalab/experiments.hpp"
#include "cnalab/report.hpp"

#ifndef CNA_LAB_DATA_DIR
#define CNA_LAB_DATA_DIR "data"
#endif

namespace cnalab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string model = "fixture";
  std::vector<std::string> adapters;
  std::string plan;
  std::string prompt;
  std::string prompt2;
  std::string target;
  std::string cases;
  std::string tasks;
  std::size_t pairs = 0;  // 0: task default
  std::string intervene_head;
  std::vector<std::size_t> top_k;
  std::size_t top_tokens = 10;
  std::string concept_set = "arithmetic";
  std::vector<std::size_t> m_threshold;
  std::uint64_t seed = 17;
  std::string out;
  std::size_t jobs = 0;
  std::vector<std::string> neurons;
  std::string head_transform;
  std::string scope;
  std::string deep;
  std::string edge_rule = "zscore";
  double edge_threshold = 3.0;
  std::string value_mode = "per-head";
  std::string bias_spec;
};

fs::path data_dir() {
  if (const char* env = std::getenv("CNA_LAB_DATA")) return env;
  return CNA_LAB_DATA_DIR;
}

fs::path existing(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
  return p;
}

fs::path model_path(const std::string& m) {
  if (m == "fixture") return existing(data_dir() / "fixture" / "base.cnaw", "fixture model");
  return existing(m, "model");
}

fs::path adapter_path(const std::string& a) {
  if (a.starts_with("fixture:"))
    return existing(data_dir() / "fixture" / ("lora_layer" + a.substr(8) + ".cnaw"), "fixture adapter");
  return existing(a, "adapter");
}

std::size_t resolve_jobs(std::size_t flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("CNA_LAB_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("CNA_LAB_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

LayerRange parse_range(const std::string& s, std::size_t n_layers) {
  const auto colon = s.find(':');
  LayerRange r;
  try {
    if (colon == std::string::npos)
      r.first = r.last = std::stoul(s);
    else
      r = {std::stoul(s.substr(0, colon)), std::stoul(s.substr(colon + 1))};
  } catch (const std::logic_error&) {
    throw ConfigError("bad layer range '" + s + "' (expected first:last)");
  }
  if (r.empty() || r.last >= n_layers) throw ConfigError("layer range '" + s + "' outside the model");
  return r;
}

struct Session {
  Options opt;
  std::size_t jobs = 1;
  ModelBundle base;
  std::vector<LoraAdapter> adapters;
  std::vector<std::string> adapter_labels;
  InterventionPlan plan;

  void load(bool with_adapters) {
    jobs = resolve_jobs(opt.jobs);
    base = load_bundle(model_path(opt.model));
    if (with_adapters)
      for (const auto& a : opt.adapters) {
        adapters.push_back(load_adapter(adapter_path(a)));
        adapters.back().validate(base.config);
        adapter_labels.push_back("L" + std::to_string(adapters.back().layer));
      }
    if (!opt.plan.empty()) {
      const fs::path p = existing(opt.plan, "plan");
      std::ifstream in(p);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError("plan " + p.string() + ": " + e.what());
      }
      plan = plan_from_json(j, p.parent_path());
      plan.validate(base.config);
    }
  }

  std::vector<TokenId> tokens(const std::string& text) const {
    if (text.empty()) throw ConfigError("--prompt is required");
    return base.tokenizer.tokenize(text);
  }

  std::vector<CaseSpec> cases(const std::string& default_tasks) const {
    std::vector<CaseSpec> out;
    if (!opt.cases.empty()) {
      out = load_cases(existing(opt.cases, "case file").string());
      if (out.empty()) throw ConfigError("case file " + opt.cases + " lists no cases");
      return out;
    }
    std::stringstream ss(opt.tasks.empty() ? default_tasks : opt.tasks);
    std::string task;
    while (std::getline(ss, task, ',')) {
      auto cfg = task_config(task);
      cfg.seed = opt.seed;
      if (opt.pairs > 0) cfg.pairs_per_template = opt.pairs;
      auto more = generate_cases(cfg);
      out.insert(out.end(), more.begin(), more.end());
    }
    return out;
  }

  LayerRange deep() const {
    return opt.deep.empty() ? default_depth_ranges(base.config.n_layers).deep_ffn
                            : parse_range(opt.deep, base.config.n_layers);
  }

  HeadId head() const {
    if (opt.intervene_head.empty()) throw ConfigError("--intervene-head is required");
    try {
      const auto h = parse_head(opt.intervene_head);
      check_head(base.config, h);
      return h;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  std::vector<std::size_t> ks(std::vector<std::size_t> fallback) const { return opt.top_k.empty() ? fallback : opt.top_k; }

  std::size_t k(std::size_t fallback) const {
    if (opt.top_k.size() > 1) throw ConfigError("--top-k takes a single value here");
    return opt.top_k.empty() ? fallback : opt.top_k.front();
  }

  void check(const ForwardTrace& trace) const {
    const auto c = check_trace(base, trace);
    if (!c.ok()) throw InvariantError("forward trace violates the decomposition identities");
  }
};

class Emitter {
 public:
  Emitter(std::ostream& out, const std::string& dir) : out_(out), dir_(dir) {
    if (!dir_.empty()) fs::create_directories(dir_);
  }

  void emit(const std::string& name, json report, const std::string& text) {
    out_ << text;
    if (dir_.empty()) return;
    write(dir_ / (name + ".json"), report.dump(2) + "\n");
    write(dir_ / (name + ".txt"), text);
  }

  fs::path path(const std::string& file) const { return dir_ / file; }
  bool enabled() const { return !dir_.empty(); }

 private:
  static void write(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    f << s;
    if (!f) throw DataError("cannot write " + p.string());
  }

  std::ostream& out_;
  fs::path dir_;
};

std::set<TokenId> concept_set(const Session& s) {
  if (s.opt.concept_set == "arithmetic") return arithmetic_concepts(s.base.tokenizer);
  std::ifstream in(existing(s.opt.concept_set, "concept set"));
  std::set<TokenId> out;
  try {
    const auto j = json::parse(in);
    for (const auto& t : j.at("tokens")) {
      const auto id = s.base.tokenizer.find(t.get<std::string>());
      if (!id) throw ConfigError("concept token '" + t.get<std::string>() + "' is not in the vocabulary");
      out.insert(*id);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("concept set: ") + e.what());
  }
  return out;
}

json settings(const Session& s, std::initializer_list<std::pair<const char*, json>> extra) {
  json j = {{"model_config", to_json(s.base.config)}};
  for (const auto& [k, v] : extra) j[k] = v;
  return j;
}

int cmd_eval(Session& s, Emitter& e) {
  s.load(true);
  const auto cases = s.cases("1D+");
  InterventionPlan plan = s.plan;
  for (const auto& a : s.adapters) plan.lora.push_back(a);
  s.check(forward(s.base, s.base.tokenizer.tokenize(cases.front().prompt), plan));
  const auto r = evaluate(s.base, plan, cases, s.jobs);
  json report = {{"command", "eval"}, {"settings", settings(s, {{"cases", cases.size()}})}, {"result", to_json(r)}};
  e.emit("eval", report, eval_table(r));
  return 0;
}

int cmd_sweep(Session& s, Emitter& e) {
  s.load(false);
  const auto cases = s.cases("1D+");
  const auto r = sweep_heads(s.base, cases, s.jobs);
  json report = {{"command", "sweep-heads"}, {"settings", settings(s, {{"cases", cases.size()}})}, {"result", to_json(r)}};
  e.emit("sweep-heads", report, sweep_table(r, s.k(5)));
  return 0;
}

int cmd_cna(Session& s, Emitter& e) {
  s.load(true);
  const auto& cfg = s.base.config;
  const LayerRange scope = s.opt.scope.empty() ? LayerRange::all(cfg.n_layers) : parse_range(s.opt.scope, cfg.n_layers);

  if (!s.opt.cases.empty() || !s.opt.tasks.empty()) {
    // Mask/keep study over a case list.
    const auto cases = s.cases("");
    const auto r = mask_keep_experiment(s.base, s.head(), cases, s.ks({99, 50, 30, 20, 10}), s.deep(), s.jobs);
    json report = {{"command", "cna"}, {"settings", settings(s, {{"cases", cases.size()}})}, {"result", to_json(r)}};
    e.emit("cna", report, mask_keep_table(r));
    return 0;
  }

  const auto tokens = s.tokens(s.opt.prompt);
  InterventionPlan ref_plan = s.plan, var_plan = s.plan;
  std::vector<TokenId> var_tokens = tokens;
  std::string ref_tag = "ori", var_tag = "inv", mode;
  if (!s.opt.intervene_head.empty()) {
    var_plan = var_plan.merged(zero_head_plan(s.head()));
    mode = "model-vs-intervened";
  } else if (!s.adapters.empty()) {
    for (const auto& a : s.adapters) ref_plan.lora.push_back(a);
    ref_tag = "lora";
    var_tag = "ori";
    mode = "lora-vs-model";
  } else if (!s.opt.prompt2.empty()) {
    var_tokens = s.tokens(s.opt.prompt2);
    ref_tag = "p1";
    var_tag = "p2";
    mode = "prompt-vs-prompt";
  } else {
    throw ConfigError("cna needs --intervene-head, --adapter or --prompt2 to define the variant");
  }
  const auto ref = forward(s.base, tokens, ref_plan);
  const auto var = forward(s.base, var_tokens, var_plan);
  s.check(ref);
  s.check(var);
  const TokenId target = s.opt.target.empty() ? ref.argmax() : s.base.tokenizer.id(s.opt.target);
  const auto r = cna_compare(s.base, ref, s.base, var, target, scope);
  json report = {{"command", "cna"},
                 {"settings", settings(s, {{"mode", mode}, {"prompt", s.opt.prompt}})},
                 {"result", cna_report(s.base, r, s.k(10), s.opt.top_tokens)}};
  e.emit("cna", report, cna_table(report["result"], ref_tag, var_tag));
  return 0;
}

int cmd_project(Session& s, Emitter& e) {
  s.load(false);
  if (s.opt.neurons.empty()) throw ConfigError("project needs at least one --neuron");
  const auto& cfg = s.base.config;
  std::optional<HeadId> head;
  if (!s.opt.head_transform.empty()) {
    head = parse_head(s.opt.head_transform);
    check_head(cfg, *head);
  }
  json rows = json::array();
  TextTable t({"FFNv", "space", "top tokens"});
  t.left_align(2);
  for (const auto& text : s.opt.neurons) {
    NeuronId n;
    try {
      n = parse_neuron(text);
      check_neuron(cfg, n);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(ex.what());
    }
    const auto value = s.base.layers[n.layer].fc2.row(n.neuron);
    const auto plain = project_vocab(s.base, value, s.k(10));
    json row = {{"neuron", to_string(n)}, {"layer", n.layer}, {"top_tokens", to_json(plain)}};
    t.add({to_string(n), "ori", token_list(plain)});
    if (head) {
      const auto& w = s.base.layers[head->layer];
      const std::size_t c0 = head->head * cfg.d_head;
      const Vec v = vec_mat_rows(vec_mat_cols(value, w.wv, c0, cfg.d_head), w.wo, c0, cfg.d_head);
      const auto transformed = project_vocab(s.base, v, s.k(10));
      row["transformed_top_tokens"] = to_json(transformed);
      t.add({to_string(n), to_string(*head), token_list(transformed)});
    }
    rows.push_back(row);
  }
  json report = {{"command", "project"},
                 {"settings", settings(s, {{"head_transform", s.opt.head_transform}})},
                 {"result", {{"neurons", rows}}}};
  e.emit("project", report, t.render());
  return 0;
}

EdgeRule edge_rule(const Options& o) {
  EdgeRule r;
  if (o.edge_rule == "zscore")
    r.kind = EdgeRule::Kind::zscore;
  else if (o.edge_rule == "absolute")
    r.kind = EdgeRule::Kind::absolute;
  else
    throw ConfigError("--edge-rule must be zscore or absolute");
  r.threshold = o.edge_threshold;
  return r;
}

int cmd_pe_dag(Session& s, Emitter& e) {
  s.load(false);
  const auto tokens = s.tokens(s.opt.prompt);
  const InterventionPlan var_plan = s.plan.merged(zero_head_plan(s.head()));
  const auto ref = forward(s.base, tokens, s.plan);
  const auto var = forward(s.base, tokens, var_plan);
  const auto r = cna_compare(s.base, ref, s.base, var, ref.argmax(), s.deep());
  const auto dag = build_pe_dag(s.base, r, s.k(10), edge_rule(s.opt));
  json report = {{"command", "pe-dag"},
                 {"settings", settings(s, {{"prompt", s.opt.prompt}, {"edge_rule", s.opt.edge_rule},
                                           {"edge_threshold", s.opt.edge_threshold}})},
                 {"result", to_json(dag)}};
  e.emit("pe-dag", report, pe_dag_text(dag));
  return 0;
}

int cmd_detect_hidden(Session& s, Emitter& e) {
  s.load(false);
  const auto ranges = default_depth_ranges(s.base.config.n_layers);
  HiddenOptions opts;
  opts.shallow = ranges.shallow_ffn;
  opts.attention = ranges.attention;
  opts.jobs = s.jobs;
  if (s.opt.value_mode == "per-head")
    opts.mode = ValueOutputMode::per_head;
  else if (s.opt.value_mode == "whole-layer")
    opts.mode = ValueOutputMode::whole_layer;
  else
    throw ConfigError("--value-mode must be per-head or whole-layer");
  const auto ms = s.opt.m_threshold.empty() ? std::vector<std::size_t>{0, 1, 2, 3} : s.opt.m_threshold;
  const auto cases = s.cases("1D+,1D-");
  const auto r = hidden_experiment(s.base, concept_set(s), ms, opts, cases, s.opt.seed);
  json report = {{"command", "detect-hidden"},
                 {"settings", settings(s, {{"cases", cases.size()}, {"value_mode", s.opt.value_mode}})},
                 {"result", to_json(r)}};
  e.emit("detect-hidden", report, hidden_table(r));
  return 0;
}

int cmd_lowest(Session& s, Emitter& e) {
  s.load(false);
  const auto cases = s.opt.prompt.empty() ? s.cases("1D+,1D-") : std::vector<CaseSpec>{};
  std::vector<CaseSpec> run = cases;
  if (!s.opt.prompt.empty()) {
    CaseSpec c;
    c.prompt = s.opt.prompt;
    c.gold = s.base.tokenizer.token(forward(s.base, s.tokens(s.opt.prompt)).argmax());
    c.sentence = c.prompt;
    run.push_back(c);
  }
  const auto rows = lowest_experiment(s.base, s.head(), run, s.ks({99, 50, 30, 20, 10}), s.deep(), s.jobs);
  json report = {{"command", "lowest"}, {"settings", settings(s, {{"cases", run.size()}})}, {"result", to_json(rows)}};
  e.emit("lowest", report, lowest_table(rows));
  return 0;
}

int cmd_lora_coef(Session& s, Emitter& e) {
  s.load(true);
  std::vector<CaseSpec> cases;
  if (!s.opt.prompt.empty()) {
    CaseSpec c;
    c.prompt = s.opt.prompt;
    c.gold = s.base.tokenizer.token(forward(s.base, s.tokens(s.opt.prompt)).argmax());
    c.sentence = c.prompt;
    cases.push_back(c);
  } else {
    cases = s.cases("1D+,1D-");
  }
  const auto r = lora_coef_experiment(s.base, s.adapters, s.adapter_labels, cases, s.ks({50, 30, 20, 10}), s.deep(),
                                      3, s.jobs);
  json report = {{"command", "lora-coef"}, {"settings", settings(s, {{"cases", cases.size()}})}, {"result", to_json(r)}};
  e.emit("lora-coef", report, lora_coef_table(r));
  return 0;
}

int cmd_prune(Session& s, Emitter& e) {
  s.load(true);
  if (s.adapters.empty()) throw ConfigError("prune needs --adapter for the reference model");
  const auto cases = s.cases("1D+,1D-,1D*,1D/");
  InterventionPlan lora;
  for (const auto& a : s.adapters) lora.lora.push_back(a);
  const LayerRange deep = s.deep();
  const auto spec = build_prune_spec(s.base, s.base, lora, cases, deep, s.k(500), s.jobs);
  const auto random = random_prune_spec(s.base.config, deep, spec.keep.size(), s.opt.seed);
  const auto pruned = prune(s.base, spec);
  const auto rpruned = prune(s.base, random);

  const InterventionPlan none;
  TextTable t({"", "origin", "LoRA", "origin-p", "LoRA-p", "origin-r", "LoRA-r"});
  std::vector<double> acc{evaluate(s.base, none, cases, s.jobs).all.accuracy(),
                          evaluate(s.base, lora, cases, s.jobs).all.accuracy(),
                          evaluate(pruned, none, cases, s.jobs).all.accuracy(),
                          evaluate(pruned, lora, cases, s.jobs).all.accuracy(),
                          evaluate(rpruned, none, cases, s.jobs).all.accuracy(),
                          evaluate(rpruned, lora, cases, s.jobs).all.accuracy()};
  std::vector<std::string> row{"acc"};
  for (double a : acc) row.push_back(percent(a));
  t.add(row);
  const std::string summary = "keep " + std::to_string(spec.keep.size()) + " of " +
                              std::to_string(deep.count() * s.base.config.n_ffn) + " deep neurons (" +
                              percent(spec.keep_fraction(s.base.config)) + "%)\n";

  json report = {{"command", "prune"},
                 {"settings", settings(s, {{"cases", cases.size()}})},
                 {"result",
                  {{"spec", to_json(spec)},
                   {"keep_fraction", spec.keep_fraction(s.base.config)},
                   {"accuracy",
                    {{"origin", acc[0]}, {"lora", acc[1]}, {"pruned", acc[2]}, {"pruned_lora", acc[3]},
                     {"random", acc[4]}, {"random_lora", acc[5]}}}}}};
  if (e.enabled()) {
    save_bundle(e.path("pruned.cnaw"), pruned);
    save_bundle(e.path("random_pruned.cnaw"), rpruned);
    std::ofstream(e.path("prune_spec.json")) << to_json(spec).dump(2) << "\n";
  }
  e.emit("prune", report, summary + t.render());
  return 0;
}

int cmd_edit_bias(Session& s, Emitter& e) {
  s.load(false);
  BiasEditSpec spec = default_bias_spec();
  if (!s.opt.bias_spec.empty()) {
    std::ifstream in(existing(s.opt.bias_spec, "bias spec"));
    try {
      spec = bias_spec_from_json(json::parse(in));
    } catch (const json::parse_error& ex) {
      throw ConfigError(std::string("bias spec: ") + ex.what());
    }
  }
  spec.top_k = s.k(spec.top_k);
  ModelBundle edited;
  const auto r = edit_bias(s.base, spec, edited, s.jobs);
  json report = {{"command", "edit-bias"},
                 {"settings", settings(s, {{"spec", to_json(spec)}})},
                 {"result", to_json(r, s.base, s.opt.top_tokens)}};
  if (e.enabled()) save_bundle(e.path("edited.cnaw"), edited);
  e.emit("edit-bias", report, bias_table(r, s.base, s.opt.top_tokens));
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Comparative neuron analysis toolkit", "cna_lab"};
  app.require_subcommand(1);
  Session s;
  auto& o = s.opt;

  auto common = [&](CLI::App* c) {
    c->add_option("--model", o.model, "Model container, or 'fixture'");
    c->add_option("--plan", o.plan, "Intervention plan JSON");
    c->add_option("--seed", o.seed, "Seed for case sampling and random controls");
    c->add_option("--out", o.out, "Directory for JSON and text reports");
    c->add_option("--jobs", o.jobs, "Worker threads (default: CNA_LAB_THREADS or 1)");
  };
  auto case_opts = [&](CLI::App* c) {
    c->add_option("--cases", o.cases, "Case list JSON");
    c->add_option("--task", o.tasks, "Comma-separated tasks, e.g. 1D+,1D-");
    c->add_option("--pairs", o.pairs, "Operand pairs per template (task default when 0)");
  };

  auto* eval = app.add_subcommand("eval", "Accuracy on a case list");
  common(eval);
  case_opts(eval);
  eval->add_option("--adapter", o.adapters, "LoRA adapter file (or fixture:N)");

  auto* sweep = app.add_subcommand("sweep-heads", "Accuracy with each head zeroed in turn");
  common(sweep);
  case_opts(sweep);
  sweep->add_option("--top-k", o.top_k, "Heads shown in the table")->delimiter(',');

  auto* cna = app.add_subcommand("cna", "Comparative neuron analysis");
  common(cna);
  case_opts(cna);
  cna->add_option("--prompt", o.prompt, "Reference prompt");
  cna->add_option("--prompt2", o.prompt2, "Variant prompt for prompt-vs-prompt mode");
  cna->add_option("--target", o.target, "Target token (default: reference greedy prediction)");
  cna->add_option("--intervene-head", o.intervene_head, "Head zeroed in the variant, e.g. 3^1");
  cna->add_option("--adapter", o.adapters, "Adapter applied to the reference");
  cna->add_option("--top-k", o.top_k, "Neurons listed; K values for the mask/keep study")->delimiter(',');
  cna->add_option("--top-tokens", o.top_tokens, "Projected tokens shown per neuron");
  cna->add_option("--scope", o.scope, "Layer range first:last");
  cna->add_option("--deep", o.deep, "Deep layer range for the mask/keep study");

  auto* project = app.add_subcommand("project", "Project FFN values onto the vocabulary");
  common(project);
  project->add_option("--neuron", o.neurons, "Neuron id, e.g. 3_17");
  project->add_option("--head-transform", o.head_transform, "Also project through this head's value-output map");
  project->add_option("--top-k", o.top_k, "Tokens shown")->delimiter(',');

  auto* dag = app.add_subcommand("pe-dag", "Prediction-enhancing graph over top neurons");
  common(dag);
  dag->add_option("--prompt", o.prompt, "Prompt to analyse");
  dag->add_option("--intervene-head", o.intervene_head, "Head zeroed in the variant");
  dag->add_option("--top-k", o.top_k, "Graph size")->delimiter(',');
  dag->add_option("--deep", o.deep, "Layer range first:last");
  dag->add_option("--edge-rule", o.edge_rule, "zscore or absolute");
  dag->add_option("--edge-threshold", o.edge_threshold, "Cutoff for the edge rule");

  auto* hidden = app.add_subcommand("detect-hidden", "Hidden-interpretable shallow neurons");
  common(hidden);
  case_opts(hidden);
  hidden->add_option("--concept-set", o.concept_set, "'arithmetic' or a JSON file {\"tokens\": [...]}");
  hidden->add_option("--m-threshold", o.m_threshold, "Minimum concept tokens")->delimiter(',');
  hidden->add_option("--value-mode", o.value_mode, "per-head or whole-layer");

  auto* lowest = app.add_subcommand("lowest", "Mask the lowest important neuron");
  common(lowest);
  case_opts(lowest);
  lowest->add_option("--prompt", o.prompt, "Single prompt instead of cases");
  lowest->add_option("--intervene-head", o.intervene_head, "Head zeroed in the variant");
  lowest->add_option("--top-k", o.top_k, "Graph sizes")->delimiter(',');
  lowest->add_option("--deep", o.deep, "Layer range first:last");

  auto* lora = app.add_subcommand("lora-coef", "Coefficient gain of top neurons under adapters");
  common(lora);
  case_opts(lora);
  lora->add_option("--adapter", o.adapters, "Adapter file (or fixture:N), repeatable")->required();
  lora->add_option("--prompt", o.prompt, "Single prompt instead of cases");
  lora->add_option("--top-k", o.top_k, "Neuron counts")->delimiter(',');
  lora->add_option("--deep", o.deep, "Layer range first:last");

  auto* prune_cmd = app.add_subcommand("prune", "Keep only CNA-selected deep neurons");
  common(prune_cmd);
  case_opts(prune_cmd);
  prune_cmd->add_option("--adapter", o.adapters, "Adapter that defines the reference")->required();
  prune_cmd->add_option("--top-k", o.top_k, "Neurons kept per case")->delimiter(',');
  prune_cmd->add_option("--deep", o.deep, "Layer range first:last");

  auto* bias = app.add_subcommand("edit-bias", "Zero the neurons behind an attribute gap");
  common(bias);
  bias->add_option("--bias-spec", o.bias_spec, "Bias spec JSON (default: built-in professions)");
  bias->add_option("--top-k", o.top_k, "Neurons zeroed")->delimiter(',');
  bias->add_option("--top-tokens", o.top_tokens, "Projected tokens shown per neuron");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    Emitter emitter(out, o.out);
    if (eval->parsed()) return cmd_eval(s, emitter);
    if (sweep->parsed()) return cmd_sweep(s, emitter);
    if (cna->parsed()) return cmd_cna(s, emitter);
    if (project->parsed()) return cmd_project(s, emitter);
    if (dag->parsed()) return cmd_pe_dag(s, emitter);
    if (hidden->parsed()) return cmd_detect_hidden(s, emitter);
    if (lowest->parsed()) return cmd_lowest(s, emitter);
    if (lora->parsed()) return cmd_lora_coef(s, emitter);
    if (prune_cmd->parsed()) return cmd_prune(s, emitter);
    if (bias->parsed()) return cmd_edit_bias(s, emitter);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const InvariantError& e) {
    err << "invariant violation: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 3;
  }
  err << app.help();
  return 1;
}

}  // namespace cnalab
