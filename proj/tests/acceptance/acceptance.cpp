// Acceptance suite: one PASS/FAIL line per criterion. Trained-fixture checks
// print SKIP unless CNA_LAB_TRAINED_FIXTURE names a fixture directory.
//
//   acceptance                 run everything
//   acceptance --update-golden rewrite tests/golden from the committed fixture
//   acceptance --only NAME     run criteria whose name contains NAME

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cnalab/applications.hpp"
#include "cnalab/cli.hpp"
#include "cnalab/cna.hpp"
#include "cnalab/experiments.hpp"
#include "cnalab/tasks.hpp"
#include "helpers.hpp"

using namespace cnalab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum class Status { pass, fail, skip };
  Status status = Status::pass;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Status::pass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::Status::fail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::Status::skip, std::move(d)}; }
Outcome verdict(bool ok, std::string d) { return ok ? pass(std::move(d)) : fail(std::move(d)); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const ModelBundle& fixture() {
  static const ModelBundle b = load_bundle(fs::path(TEST_DATA_DIR) / "fixture" / "base.cnaw");
  return b;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 1e-30;
  for (double v : b) scale = std::max(scale, std::abs(v));
  return max_abs_diff(a, b) / scale;
}

std::vector<std::vector<TokenId>> random_prompts(const ModelBundle& b, std::size_t n, std::size_t max_len,
                                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<TokenId>> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(testing::random_tokens(rng, b.config.vocab_size, max_len));
  return out;
}

// ---------------------------------------------------------------------------
// Decomposition identities

Outcome decomposition() {
  const std::size_t layer_opts[] = {1, 2, 4, 8};
  const std::size_t head_opts[] = {1, 2, 4};
  double worst_head = 0.0, worst_ffn = 0.0, worst_prob = 0.0;
  std::size_t bundles = 0, residual_failures = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t layers = layer_opts[seed % 4];
    const std::size_t heads = head_opts[(seed / 4) % 3];
    const NormMode norm = seed % 2 == 0 ? NormMode::none : NormMode::rmsnorm;
    const auto b = testing::small_bundle(layers, heads, 1000 + seed, 8, 32, norm);
    for (const auto& tokens : random_prompts(b, 3, 16, seed)) {
      const auto c = check_trace(b, forward(b, tokens));
      residual_failures += c.residual_exact ? 0 : 1;
      worst_head = std::max(worst_head, c.max_head_sum_error);
      worst_ffn = std::max(worst_ffn, c.max_subvalue_sum_error);
      worst_prob = std::max(worst_prob, c.prob_sum_error);
    }
    ++bundles;
  }
  const bool ok = residual_failures == 0 && worst_head <= 1e-5 && worst_ffn <= 1e-5 && worst_prob <= 1e-6;
  return verdict(ok, std::to_string(bundles) + " bundles; residual exact, heads " + fmt("%.1e", worst_head) +
                         ", subvalues " + fmt("%.1e", worst_ffn) + ", prob sum " + fmt("%.1e", worst_prob));
}

// ---------------------------------------------------------------------------
// Importance oracle

double oracle_log_prob(const ModelBundle& b, const std::vector<double>& h, TokenId target) {
  std::vector<double> x = h;
  if (b.config.norm_mode == NormMode::rmsnorm) {
    double ss = 0.0;
    for (double v : h) ss += v * v;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(h.size()) + 1e-5);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = h[i] * inv * b.final_norm[i];
  }
  std::vector<double> logits(b.config.vocab_size, 0.0);
  for (std::size_t t = 0; t < logits.size(); ++t)
    for (std::size_t e = 0; e < x.size(); ++e) logits[t] += b.unembed(t, e) * x[e];
  double z = 0.0;
  for (double l : logits) z += std::exp(l);
  return std::log(std::exp(logits[target]) / z);
}

Outcome importance_oracle() {
  const auto& b = fixture();
  Rng rng(23);
  double worst = 0.0;
  std::size_t pairs = 0;
  for (const auto& tokens : random_prompts(b, 50, 12, 31)) {
    const auto tr = forward(b, tokens);
    const std::size_t last = tokens.size() - 1;
    for (int j = 0; j < 20; ++j) {
      const NeuronId n{rng.below(b.config.n_layers), rng.below(b.config.n_ffn)};
      const auto target = static_cast<TokenId>(rng.below(b.config.vocab_size));
      const auto& lt = tr.layers[n.layer];
      const double m = lt.coefficients(last, n.neuron);
      std::vector<double> base(b.config.d_model), with(b.config.d_model);
      for (std::size_t e = 0; e < base.size(); ++e) {
        base[e] = lt.residual(last, e);
        with[e] = base[e] + m * b.layers[n.layer].fc2(n.neuron, e);
      }
      const double want = oracle_log_prob(b, with, target) - oracle_log_prob(b, base, target);
      worst = std::max(worst, std::abs(importance_score(b, tr, n, target) - want));
      ++pairs;
    }
  }
  return verdict(pairs == 1000 && worst <= 1e-6, std::to_string(pairs) + " pairs, max error " + fmt("%.1e", worst));
}

// ---------------------------------------------------------------------------
// Intervention algebra

Outcome intervention_algebra() {
  const auto& b = fixture();
  const auto& cfg = b.config;
  const auto prompts = random_prompts(b, 6, 12, 41);

  double worst_head = 0.0;
  for (std::size_t l = 0; l < cfg.n_layers; ++l)
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      auto edited = b;
      for (std::size_t r = h * cfg.d_head; r < (h + 1) * cfg.d_head; ++r)
        for (float& v : edited.layers[l].wo.row(r)) v = 0.0f;
      const auto& tokens = prompts[(l * cfg.n_heads + h) % prompts.size()];
      worst_head = std::max(worst_head, rel_diff(forward(b, tokens, zero_head_plan({l, h})).logits,
                                                 forward(edited, tokens).logits));
    }

  bool duality = true;
  const auto deep = default_depth_ranges(cfg.n_layers).deep_ffn;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto spec = random_prune_spec(cfg, deep, 50 + 100 * seed, seed);
    std::vector<NeuronId> complement;
    for (std::size_t l = deep.first; l <= deep.last; ++l)
      for (std::size_t k = 0; k < cfg.n_ffn; ++k)
        if (!spec.keep.contains({l, k})) complement.push_back({l, k});
    const auto& tokens = prompts[seed];
    duality = duality && forward(b, tokens, prune_plan(spec)).logits == forward(b, tokens, mask_plan(complement)).logits;
  }

  bool compose = true;
  const auto heads = zero_head_plan({2, 1}).merged(zero_head_plan({5, 3}));
  const auto neurons = mask_plan({{1, 7}, {6, 100}});
  InterventionPlan lora;
  lora.lora.push_back(load_adapter(fs::path(TEST_DATA_DIR) / "fixture" / "lora_layer3.cnaw"));
  InterventionPlan direct;
  direct.zero_heads = {{2, 1}, {5, 3}};
  direct.neuron_scales = {{{1, 7}, 0.0f}, {{6, 100}, 0.0f}};
  direct.lora = lora.lora;
  for (const auto& tokens : prompts) {
    const auto want = forward(b, tokens, direct).logits;
    compose = compose && forward(b, tokens, heads.merged(neurons).merged(lora)).logits == want &&
              forward(b, tokens, lora.merged(neurons).merged(heads)).logits == want;
  }
  bool overlap_rejected = false;
  try {
    neurons.merged(mask_plan({{1, 7}}));
  } catch (const std::invalid_argument&) {
    overlap_rejected = true;
  }

  const bool ok = worst_head <= 1e-5 && duality && compose && overlap_rejected;
  return verdict(ok, "head zeroing " + fmt("%.1e", worst_head) + ", mask/keep " +
                         (duality ? "bit-identical" : "DIFFER") + ", composition " + (compose ? "exact" : "DIFFERS") +
                         (overlap_rejected ? "" : ", overlap NOT rejected"));
}

// ---------------------------------------------------------------------------
// CNA properties

bool acyclic(const PeDag& dag) {
  std::map<NeuronId, std::size_t> indeg;
  std::map<NeuronId, std::vector<NeuronId>> out;
  for (const auto& n : dag.nodes) indeg[n] = 0;
  for (const auto& e : dag.edges) {
    ++indeg[e.to];
    out[e.from].push_back(e.to);
  }
  std::queue<NeuronId> ready;
  for (const auto& [n, d] : indeg)
    if (d == 0) ready.push(n);
  std::size_t seen = 0;
  while (!ready.empty()) {
    const auto n = ready.front();
    ready.pop();
    ++seen;
    for (const auto& m : out[n])
      if (--indeg[m] == 0) ready.push(m);
  }
  return seen == dag.nodes.size();
}

Outcome cna_properties() {
  bool self_zero = true, antisym = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto b = testing::small_bundle(1 + seed % 4, 1 + seed % 3, 500 + seed, 8, 32,
                                         seed % 2 == 0 ? NormMode::none : NormMode::rmsnorm);
    const auto tokens = random_prompts(b, 1, 12, seed)[0];
    const InterventionPlan none;
    const auto variant = zero_head_plan({0, 0});
    const RunSpec ref{b, none, tokens}, var{b, variant, tokens};
    for (const auto& e : cna_compare(ref, ref, std::nullopt).ranking) self_zero = self_zero && e.delta == 0.0;
    const auto target = static_cast<TokenId>(seed);
    std::map<NeuronId, double> fwd;
    for (const auto& e : cna_compare(ref, var, target).ranking) fwd[e.id] = e.delta;
    for (const auto& e : cna_compare(var, ref, target).ranking) antisym = antisym && e.delta == -fwd.at(e.id);
  }

  const auto& b = fixture();
  const InterventionPlan none;
  bool dag_ok = true;
  for (const char* prompt : {"3+5=", "15+32=", "The sum of 15 and 37 is"}) {
    const auto tokens = b.tokenizer.tokenize(prompt);
    const auto r = cna_compare({b, none, tokens}, {b, zero_head_plan({4, 1}), tokens}, std::nullopt,
                               default_depth_ranges(b.config.n_layers).deep_ffn);
    for (std::size_t k : {1u, 10u, 50u})
      for (const auto& rule : {EdgeRule{}, EdgeRule{EdgeRule::Kind::absolute, 0.0}}) {
        const auto dag = build_pe_dag(b, r, k, rule);
        dag_ok = dag_ok && dag.nodes.size() == k && acyclic(dag);
      }
  }

  const auto ranges = default_depth_ranges(b.config.n_layers);
  HiddenOptions opts{ranges.shallow_ffn, ranges.attention};
  const auto counts = hidden_concept_counts(b, arithmetic_concepts(b.tokenizer), opts);
  std::vector<std::vector<NeuronId>> sets;
  for (std::size_t m = 0; m <= 3; ++m) sets.push_back(select_hidden(counts, m));
  bool monotone = sets[0].size() == ranges.shallow_ffn.count() * b.config.n_ffn;
  for (std::size_t m = 1; m <= 3; ++m)
    monotone = monotone && std::includes(sets[m - 1].begin(), sets[m - 1].end(), sets[m].begin(), sets[m].end());
  // A narrow concept set gives a non-trivial chain on random weights.
  std::set<TokenId> digits;
  for (int d = 0; d < 10; ++d) digits.insert(b.tokenizer.id(std::to_string(d)));
  auto narrow_opts = opts;
  narrow_opts.top_n = 10;
  const auto narrow = hidden_concept_counts(b, digits, narrow_opts);
  std::string sizes;
  for (std::size_t m = 0; m <= 3; ++m) {
    const auto hi = select_hidden(narrow, m);
    if (m > 0) {
      const auto lo = select_hidden(narrow, m - 1);
      monotone = monotone && std::includes(lo.begin(), lo.end(), hi.begin(), hi.end());
    }
    sizes += (m ? "/" : "") + std::to_string(hi.size());
  }
  monotone = monotone && select_hidden(narrow, 0).size() == sets[0].size() &&
             select_hidden(narrow, 3).size() < sets[0].size();

  const bool ok = self_zero && antisym && dag_ok && monotone;
  return verdict(ok, std::string("self-zero ") + (self_zero ? "ok" : "FAIL") + ", antisymmetry " +
                         (antisym ? "ok" : "FAIL") + ", PE-DAG acyclic " + (dag_ok ? "ok" : "FAIL") +
                         ", hidden sets nested (digits M=0..3: " + sizes + ")");
}

// ---------------------------------------------------------------------------
// classify_case oracle

// Column-by-column simulation on digit strings.
Category simulate(int a, int b, Operation op, std::size_t pos) {
  const int r = apply_operation(op, a, b);
  const std::string digits = std::to_string(std::abs(r));
  const bool neg = r < 0;
  const std::size_t len = digits.size() + (neg ? 1 : 0);
  if (op == Operation::mul || op == Operation::div) return pos + 1 == len ? Category::memorize : Category::change_one;
  if (neg && pos == 0) return Category::change_one;
  std::string x = std::to_string(op == Operation::sub ? std::max(a, b) : a);
  std::string y = std::to_string(op == Operation::sub ? std::min(a, b) : b);
  const std::size_t width = std::max({x.size(), y.size(), digits.size()}) + 1;
  x.insert(0, width - x.size(), '0');
  y.insert(0, width - y.size(), '0');
  std::vector<int> into(width + 1, 0);  // into[c]: transfer entering column c (units = 0)
  for (std::size_t c = 0; c < width; ++c) {
    const int dx = x[width - 1 - c] - '0', dy = y[width - 1 - c] - '0';
    const int v = op == Operation::add ? dx + dy + into[c] : dx - dy - into[c];
    into[c + 1] = op == Operation::add ? (v >= 10) : (v < 0);
  }
  const std::size_t column = len - 1 - pos;
  return into[column] || into[column + 1] ? Category::change_one : Category::memorize;
}

Outcome classify_oracle() {
  std::size_t checked = 0, wrong = 0;
  for (int digits : {1, 2}) {
    const int lo = digits == 1 ? 0 : 10, hi = digits == 1 ? 9 : 99;
    for (Operation op : {Operation::add, Operation::sub, Operation::mul, Operation::div})
      for (int a = lo; a <= hi; ++a)
        for (int b = lo; b <= hi; ++b) {
          if (op == Operation::div && (b == 0 || a % b != 0)) continue;
          const auto n = answer_symbols(apply_operation(op, a, b)).size();
          for (std::size_t p = 0; p < n; ++p) {
            ++checked;
            wrong += classify_case(a, b, op, p) == simulate(a, b, op, p) ? 0 : 1;
          }
        }
  }
  return verdict(wrong == 0, std::to_string(checked) + " answer tokens, " + std::to_string(wrong) + " mismatches");
}

// ---------------------------------------------------------------------------
// Pruning equivalence

Outcome prune_equivalence() {
  const auto& b = fixture();
  const auto deep = default_depth_ranges(b.config.n_layers).deep_ffn;
  const auto spec = random_prune_spec(b.config, deep, 300, 99);
  const auto pruned = prune(b, spec);
  const auto plan = prune_plan(spec);
  double worst = 0.0;
  for (const auto& tokens : random_prompts(b, 100, 16, 77))
    worst = std::max(worst, max_abs_diff(forward(pruned, tokens).logits, forward(b, tokens, plan).logits));

  const auto path = fs::temp_directory_path() / "cnalab_acceptance_pruned.cnaw";
  save_bundle(path, pruned);
  const auto back = load_bundle(path);
  bool round_trip = back.config == pruned.config && back.embed == pruned.embed;
  for (std::size_t l = 0; l < b.config.n_layers; ++l)
    round_trip = round_trip && back.layers[l].fc1 == pruned.layers[l].fc1 && back.layers[l].fc2 == pruned.layers[l].fc2 &&
                 back.layers[l].wq == pruned.layers[l].wq;
  const auto probe = b.tokenizer.tokenize("3+5=");
  round_trip = round_trip && forward(back, probe).logits == forward(pruned, probe).logits;
  fs::remove(path);
  return verdict(worst <= 1e-6 && round_trip, "100 prompts, max logit difference " + fmt("%.1e", worst) +
                                                  ", round trip " + (round_trip ? "exact" : "DIFFERS"));
}

// ---------------------------------------------------------------------------
// Golden files

struct GoldenCommand {
  std::string name;
  std::vector<std::string> args;
};

const std::vector<GoldenCommand>& golden_commands() {
  static const std::vector<GoldenCommand> cmds = {
      {"eval", {"eval", "--task", "1D+"}},
      {"sweep-heads", {"sweep-heads", "--task", "1D+", "--pairs", "10"}},
      {"cna-prompt", {"cna", "--prompt", "3+5=", "--intervene-head", "4^1", "--top-k", "3"}},
      {"cna-prompts", {"cna", "--prompt", "A woman works as a", "--prompt2", "A man works as a", "--target", " nurse",
                       "--top-k", "5"}},
      {"cna-task", {"cna", "--task", "1D+", "--pairs", "10", "--intervene-head", "4^1", "--top-k", "50,10"}},
      {"project", {"project", "--neuron", "6_241", "--head-transform", "3^1"}},
      {"pe-dag", {"pe-dag", "--prompt", "3+5=", "--intervene-head", "4^1", "--top-k", "50"}},
      {"detect-hidden", {"detect-hidden", "--task", "1D+", "--pairs", "10"}},
      {"lowest", {"lowest", "--task", "1D+", "--pairs", "10", "--intervene-head", "4^1", "--top-k", "10,2"}},
      {"lora-coef", {"lora-coef", "--adapter", "fixture:1", "--adapter", "fixture:6", "--task", "1D+", "--pairs",
                     "10"}},
      {"prune", {"prune", "--adapter", "fixture:2", "--task", "1D+", "--pairs", "10", "--top-k", "20"}},
      {"edit-bias", {"edit-bias", "--top-k", "6"}},
  };
  return cmds;
}

struct RunOutput {
  int code = 0;
  std::string stdout_text;
  std::string stderr_text;
  std::map<std::string, std::string> files;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

RunOutput run_command(const GoldenCommand& c, const std::string& jobs, const fs::path& dir) {
  fs::remove_all(dir);
  std::vector<std::string> args{"cna_lab"};
  args.insert(args.end(), c.args.begin(), c.args.end());
  for (const auto& extra : {std::string("--jobs"), jobs, std::string("--out"), dir.string()}) args.push_back(extra);
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  RunOutput r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.stdout_text = out.str();
  r.stderr_text = err.str();
  if (fs::exists(dir))
    for (const auto& e : fs::directory_iterator(dir)) r.files[e.path().filename().string()] = slurp(e.path());
  return r;
}

bool is_report(const std::string& file) { return file.ends_with(".json") || file.ends_with(".txt"); }

Outcome golden(bool update) {
  setenv("CNA_LAB_DATA", TEST_DATA_DIR, 1);
  unsetenv("CNA_LAB_THREADS");
  const fs::path golden_dir = GOLDEN_DIR;
  const fs::path scratch = fs::temp_directory_path() / "cnalab_acceptance_golden";
  std::vector<std::string> problems;
  std::size_t files = 0;
  for (const auto& c : golden_commands()) {
    const auto one = run_command(c, "1", scratch / (c.name + ".j1"));
    const auto four = run_command(c, "4", scratch / (c.name + ".j4"));
    if (one.code != 0 || four.code != 0) {
      problems.push_back(c.name + ": exit " + std::to_string(one.code) + "/" + std::to_string(four.code) + " " +
                         one.stderr_text);
      continue;
    }
    if (one.files != four.files || one.stdout_text != four.stdout_text)
      problems.push_back(c.name + ": output differs between --jobs 1 and --jobs 4");
    const fs::path want_dir = golden_dir / c.name;
    if (update) {
      fs::remove_all(want_dir);
      fs::create_directories(want_dir);
    }
    for (const auto& [file, bytes] : one.files) {
      if (!is_report(file)) continue;
      ++files;
      if (update) {
        std::ofstream(want_dir / file, std::ios::binary) << bytes;
        continue;
      }
      if (!fs::exists(want_dir / file))
        problems.push_back(c.name + "/" + file + ": no golden file");
      else if (slurp(want_dir / file) != bytes)
        problems.push_back(c.name + "/" + file + ": differs from golden");
    }
    if (!update && fs::exists(want_dir))
      for (const auto& e : fs::directory_iterator(want_dir))
        if (!one.files.contains(e.path().filename().string()))
          problems.push_back(c.name + "/" + e.path().filename().string() + ": golden file not produced");
  }
  fs::remove_all(scratch);
  std::string detail = std::to_string(golden_commands().size()) + " commands, " + std::to_string(files) +
                       " report files" + (update ? " written" : " matched") + " across --jobs 1 and 4";
  for (const auto& p : problems) detail += "\n      " + p;
  return verdict(problems.empty(), detail);
}

// ---------------------------------------------------------------------------
// Trained-fixture direction checks

const char* trained_dir() { return std::getenv("CNA_LAB_TRAINED_FIXTURE"); }

struct Trained {
  ModelBundle base;
  fs::path dir;
};

std::optional<Trained> trained() {
  const char* d = trained_dir();
  if (!d) return std::nullopt;
  return Trained{load_bundle(fs::path(d) / "base.cnaw"), d};
}

// Most damaging head on the given cases.
HeadId top_head(const ModelBundle& b, const std::vector<CaseSpec>& cases) {
  return sweep_heads(b, cases).heads.front().head;
}

std::vector<CaseSpec> held_out(const std::string& task, std::uint64_t seed, std::size_t pairs = 0) {
  auto cfg = task_config(task);
  cfg.seed = seed;
  if (pairs) cfg.pairs_per_template = pairs;
  return generate_cases(cfg);
}

Outcome trained_quality() {
  const auto t = trained();
  if (!t) return skip("CNA_LAB_TRAINED_FIXTURE not set");
  const auto cases = held_out("1D+", 17);
  const double base = evaluate(t->base, {}, cases).all.accuracy();
  bool adapters_better = true;
  std::size_t adapters = 0;
  for (std::size_t l = 0; l < t->base.config.n_layers; ++l) {
    const auto path = t->dir / ("lora_layer" + std::to_string(l) + ".cnaw");
    if (!fs::exists(path)) continue;
    InterventionPlan p;
    p.lora.push_back(load_adapter(path));
    adapters_better = adapters_better && evaluate(t->base, p, cases).all.accuracy() > base;
    ++adapters;
  }
  return verdict(base >= 0.9 && adapters > 0 && adapters_better,
                 "base 1D+ " + fmt("%.3f", base) + ", " + std::to_string(adapters) + " adapters");
}

Outcome trained_directions() {
  const auto t = trained();
  if (!t) return skip("CNA_LAB_TRAINED_FIXTURE not set");
  const auto& b = t->base;
  const auto deep = default_depth_ranges(b.config.n_layers).deep_ffn;
  std::vector<std::string> failed;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto cases = held_out("1D+", seed);
    const auto head = top_head(b, cases);
    // (a) masking top-K CNA neurons hurts more than random-K masks.
    const auto mk = mask_keep_experiment(b, head, cases, {10, 30, 99}, deep);
    for (std::size_t i = 0; i < mk.rows.size(); ++i) {
      const auto random = random_neurons(b.config, deep, mk.rows[i].k, seed);
      const double rnd = evaluate(b, mask_plan(random), cases).all.accuracy();
      if (!(mk.rows[i].mask_accuracy < rnd)) failed.push_back("mask-vs-random K=" + std::to_string(mk.rows[i].k));
    }
    // (b) masking the PE-DAG root lowers the remaining coefficients.
    const auto low = lowest_experiment(b, head, cases, {10}, deep);
    if (!(low[0].decrease_pct > 0.0)) failed.push_back("root masking seed " + std::to_string(seed));
    // (c) the M=2 hidden set hurts more than an equal-size random set.
    const auto ranges = default_depth_ranges(b.config.n_layers);
    HiddenOptions opts{ranges.shallow_ffn, ranges.attention};
    const auto h = hidden_experiment(b, arithmetic_concepts(b.tokenizer), {2}, opts, cases, seed);
    if (!(h.rows[0].masked_accuracy < h.rows[0].random_accuracy)) failed.push_back("hidden M=2 seed " + std::to_string(seed));
    // Single-prompt directions on 3+5=.
    const auto tokens = b.tokenizer.tokenize("3+5=");
    const InterventionPlan none;
    const auto r = cna_compare({b, none, tokens}, {b, zero_head_plan(head), tokens}, std::nullopt, deep);
    const auto& top = r.ranking.front();
    if (!(top.coef_var < top.coef_ref)) failed.push_back("top coefficient seed " + std::to_string(seed));
    const auto masked = forward(b, tokens, mask_plan({top.id}));
    if (!(log_softmax(masked.logits)[r.target] < log_softmax(forward(b, tokens).logits)[r.target]))
      failed.push_back("top-neuron mask seed " + std::to_string(seed));
  }
  // (d) shallow adapters amplify more than deep ones.
  std::vector<LoraAdapter> adapters;
  std::vector<std::string> labels;
  for (std::size_t l : {std::size_t{1}, b.config.n_layers - 2}) {
    const auto path = t->dir / ("lora_layer" + std::to_string(l) + ".cnaw");
    if (!fs::exists(path)) continue;
    adapters.push_back(load_adapter(path));
    labels.push_back(std::to_string(l));
  }
  if (adapters.size() == 2) {
    const auto lc = lora_coef_experiment(b, adapters, labels, held_out("1D+", 1), {10}, deep);
    if (!(lc.rows[0].increase_pct[0] > lc.rows[1].increase_pct[0])) failed.push_back("adapter amplification");
  } else {
    failed.push_back("adapters for layers 1 and L-2 missing");
  }
  std::string detail = failed.empty() ? "all directions hold on 3 seeds" : "failed:";
  for (const auto& f : failed) detail += " " + f;
  return verdict(failed.empty(), detail);
}

Outcome trained_finetune() {
  if (!trained_dir()) return skip("CNA_LAB_TRAINED_FIXTURE not set");
  return skip("post-pruning fine-tuning and the biased fixture come from the trainer");
}

}  // namespace

int main(int argc, char** argv) {
  bool update = false;
  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--update-golden") {
      update = true;
    } else if (a == "--only" && i + 1 < argc) {
      only = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--update-golden] [--only NAME]\n";
      return 2;
    }
  }

  struct Criterion {
    const char* tier;
    const char* name;
    double budget_s;  // 0: no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"PRIMARY", "decomposition-identities", 60, decomposition},
      {"PRIMARY", "importance-oracle", 60, importance_oracle},
      {"PRIMARY", "intervention-algebra", 60, intervention_algebra},
      {"PRIMARY", "cna-properties", 0, cna_properties},
      {"PRIMARY", "classify-oracle", 60, classify_oracle},
      {"PRIMARY", "prune-equivalence", 0, prune_equivalence},
      {"PRIMARY", "golden-determinism", 0, [update] { return golden(update); }},
      {"SECONDARY", "trained-fixture-quality", 0, trained_quality},
      {"SECONDARY", "trained-fixture-directions", 0, trained_directions},
      {"SECONDARY", "finetune-and-bias-directions", 0, trained_finetune},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::string(c.name).find(only) == std::string::npos) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.status != Outcome::Status::skip && c.budget_s > 0 && secs >= c.budget_s) {
      o.status = Outcome::Status::fail;
      o.detail += "; over the " + fmt("%.0f", c.budget_s) + " s budget";
    }
    const char* tag = o.status == Outcome::Status::pass ? "PASS" : o.status == Outcome::Status::fail ? "FAIL" : "SKIP";
    if (o.status == Outcome::Status::fail) ++failures;
    std::printf("%s [%s] %s: %s (%.1f s)\n", tag, c.tier, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
