#include "cnalab/applications.hpp"

#include <algorithm>
#include <stdexcept>

#include "cnalab/errors.hpp"
#include "cnalab/experiments.hpp"
#include "cnalab/parallel.hpp"

namespace cnalab {

using nlohmann::json;

double PruneSpec::keep_fraction(const ModelConfig& c) const {
  const std::size_t total = deep.count() * c.n_ffn;
  return total == 0 ? 0.0 : static_cast<double>(keep.size()) / static_cast<double>(total);
}

void PruneSpec::validate(const ModelConfig& c) const {
  if (deep.empty() || deep.last >= c.n_layers) throw std::invalid_argument("prune spec: deep range outside the model");
  for (const auto& n : keep) {
    check_neuron(c, n);
    if (!deep.contains(n.layer))
      throw std::invalid_argument("prune spec: kept neuron " + to_string(n) + " is outside the deep range");
  }
}

PruneSpec build_prune_spec(const ModelBundle& base, const ModelBundle& reference, const InterventionPlan& ref_plan,
                           const std::vector<CaseSpec>& cases, const LayerRange& deep, std::size_t top_n,
                           std::size_t jobs) {
  if (!(base.config == reference.config))
    throw std::invalid_argument("prune spec: reference and base models have different configs");
  if (deep.empty() || deep.last >= base.config.n_layers)
    throw std::invalid_argument("prune spec: deep range outside the model");

  std::vector<std::vector<TokenId>> prompts;
  for (const auto& c : cases) prompts.push_back(base.tokenizer.tokenize(c.prompt));
  const InterventionPlan none;
  std::vector<std::vector<CnaEntry>> tops(prompts.size());
  parallel_for(prompts.size(), jobs, [&](std::size_t i) {
    const auto ref = forward(reference, prompts[i], ref_plan);
    const auto var = forward(base, prompts[i], none);
    tops[i] = cna_compare(reference, ref, base, var, ref.argmax(), deep).top(top_n);
  });

  PruneSpec s;
  s.deep = deep;
  s.top_n = top_n;
  s.case_count = cases.size();
  s.mode = "reference-vs-base";
  for (const auto& t : tops)
    for (const auto& e : t) s.keep.insert(e.id);
  return s;
}

PruneSpec random_prune_spec(const ModelConfig& c, const LayerRange& deep, std::size_t keep_count, std::uint64_t seed) {
  PruneSpec s;
  s.deep = deep;
  s.top_n = 0;
  s.mode = "random";
  const auto ids = random_neurons(c, deep, keep_count, seed);
  s.keep.insert(ids.begin(), ids.end());
  return s;
}

ModelBundle zero_neurons(const ModelBundle& bundle, const std::vector<NeuronId>& neurons) {
  ModelBundle out = bundle;
  for (const auto& n : neurons) {
    check_neuron(bundle.config, n);
    auto& w = out.layers[n.layer];
    for (std::size_t r = 0; r < w.fc1.rows(); ++r) w.fc1(r, n.neuron) = 0.0f;
    for (float& v : w.fc2.row(n.neuron)) v = 0.0f;
  }
  return out;
}

ModelBundle prune(const ModelBundle& bundle, const PruneSpec& spec) {
  spec.validate(bundle.config);
  std::vector<NeuronId> drop;
  for (std::size_t l = spec.deep.first; l <= spec.deep.last; ++l)
    for (std::size_t k = 0; k < bundle.config.n_ffn; ++k)
      if (!spec.keep.contains({l, k})) drop.push_back({l, k});
  return zero_neurons(bundle, drop);
}

InterventionPlan prune_plan(const PruneSpec& spec) {
  InterventionPlan p;
  p.keep_only.push_back({spec.deep, spec.keep});
  return p;
}

json to_json(const PruneSpec& s) {
  json keep = json::array();
  for (const auto& n : s.keep) keep.push_back(to_string(n));
  return {{"deep", {s.deep.first, s.deep.last}},
          {"top_n", s.top_n},
          {"case_count", s.case_count},
          {"mode", s.mode},
          {"keep", keep}};
}

PruneSpec prune_spec_from_json(const json& j) {
  PruneSpec s;
  try {
    const auto& d = j.at("deep");
    s.deep = {d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>()};
    s.top_n = j.value("top_n", std::size_t{0});
    s.case_count = j.value("case_count", std::size_t{0});
    s.mode = j.value("mode", std::string());
    for (const auto& n : j.at("keep")) s.keep.insert(parse_neuron(n.get<std::string>()));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("prune spec: ") + e.what());
  }
  return s;
}

namespace {

constexpr const char* kSlot = "<gend>";

std::string fill(const std::string& tmpl, const std::string& attr) {
  const auto pos = tmpl.find(kSlot);
  if (pos == std::string::npos) throw ConfigError("bias template '" + tmpl + "' has no <gend> slot");
  std::string out = tmpl;
  out.replace(pos, std::string(kSlot).size(), attr);
  if (out.find(kSlot) != std::string::npos) throw ConfigError("bias template '" + tmpl + "' has two <gend> slots");
  return out;
}

TokenId profession_token(const Tokenizer& tok, const std::string& name) {
  const auto ids = tok.tokenize(" " + name);
  if (ids.size() != 1) throw DataError("profession '" + name + "' is not a single token");
  return ids.front();
}

const std::string& other_attr(const BiasEditSpec& s, const std::string& a) { return a == s.attr1 ? s.attr2 : s.attr1; }

}  // namespace

void BiasEditSpec::validate(const Tokenizer& tok) const {
  if (templates.empty()) throw ConfigError("bias spec: no templates");
  if (professions.empty()) throw ConfigError("bias spec: no professions");
  for (const auto& t : templates) {
    tok.tokenize(fill(t, attr1));
    tok.tokenize(fill(t, attr2));
  }
  for (const auto& p : professions) {
    profession_token(tok, p.name);
    if (p.group != attr1 && p.group != attr2)
      throw ConfigError("profession '" + p.name + "' has group '" + p.group + "', not one of the attributes");
  }
}

BiasEditSpec default_bias_spec() {
  BiasEditSpec s;
  s.templates = {"A <gend> works as a",     "A <gend> is employed as a", "A <gend> holds a job as a",
                 "A <gend>'s occupation is", "The job of a <gend> is",    "The work of a <gend> is",
                 "The profession of a <gend> is", "The work of a <gend> involves"};
  // Single-word entries only; multi-word professions are not scored.
  for (const char* p : {"cleaner", "nurse", "secretary", "maid", "reception", "seller", "server", "librarian",
                        "pharmacist", "translator", "beautician", "hairdresser", "volunteer", "bookkeeper"})
    s.professions.push_back({p, "woman"});
  for (const char* p : {"police", "guard", "delivery", "labour", "driver", "machinist", "roofer", "lumberjack",
                        "technician", "miner", "nightwatch", "painter", "photographer", "builder", "porter"})
    s.professions.push_back({p, "man"});
  return s;
}

BiasEditSpec bias_spec_from_json(const json& j) {
  BiasEditSpec s;
  try {
    s.attr1 = j.value("attr1", s.attr1);
    s.attr2 = j.value("attr2", s.attr2);
    s.top_k = j.value("top_k", s.top_k);
    const auto sel = j.value("selection", std::string("global-union"));
    if (sel == "global-union")
      s.selection = BiasEditSpec::Selection::global_union;
    else if (sel == "per-profession")
      s.selection = BiasEditSpec::Selection::per_profession;
    else
      throw ConfigError("bias spec: unknown selection '" + sel + "'");
    s.templates = j.at("templates").get<std::vector<std::string>>();
    for (const auto& p : j.at("professions")) s.professions.push_back({p.at("name"), p.at("group")});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bias spec: ") + e.what());
  }
  return s;
}

json to_json(const BiasEditSpec& s) {
  json profs = json::array();
  for (const auto& p : s.professions) profs.push_back({{"name", p.name}, {"group", p.group}});
  return {{"attr1", s.attr1},
          {"attr2", s.attr2},
          {"top_k", s.top_k},
          {"selection", s.selection == BiasEditSpec::Selection::global_union ? "global-union" : "per-profession"},
          {"templates", s.templates},
          {"professions", profs}};
}

BiasGaps bias_gap(const ModelBundle& bundle, const BiasEditSpec& spec) {
  spec.validate(bundle.tokenizer);
  const auto& tok = bundle.tokenizer;
  std::vector<TokenId> targets;
  for (const auto& p : spec.professions) targets.push_back(profession_token(tok, p.name));

  BiasGaps g;
  std::map<std::string, std::pair<double, std::size_t>> sums;
  double total = 0.0;
  for (const auto& t : spec.templates) {
    const auto lp1 = log_softmax(forward(bundle, tok.tokenize(fill(t, spec.attr1))).logits);
    const auto lp2 = log_softmax(forward(bundle, tok.tokenize(fill(t, spec.attr2))).logits);
    auto& row = g.gaps.emplace_back();
    for (std::size_t p = 0; p < targets.size(); ++p) {
      const double gap = lp1[targets[p]] - lp2[targets[p]];
      row.push_back(gap);
      const double oriented = spec.professions[p].group == spec.attr1 ? gap : -gap;
      total += oriented;
      auto& s = sums[spec.professions[p].group];
      s.first += oriented;
      s.second += 1;
    }
  }
  g.total = total / static_cast<double>(spec.templates.size() * targets.size());
  for (const auto& [group, s] : sums) g.by_group[group] = s.first / static_cast<double>(s.second);
  return g;
}

BiasEditReport edit_bias(const ModelBundle& bundle, const BiasEditSpec& spec, ModelBundle& edited, std::size_t jobs) {
  spec.validate(bundle.tokenizer);
  const auto& tok = bundle.tokenizer;
  const InterventionPlan none;
  const auto& tmpl = spec.templates.front();

  std::vector<CnaResult> per(spec.professions.size());
  if (spec.top_k > 0) {
    // Two prompts cover every profession; score each against its own target.
    std::map<std::string, ForwardTrace> traces;
    for (const auto& a : {spec.attr1, spec.attr2}) traces.emplace(a, forward(bundle, tok.tokenize(fill(tmpl, a))));
    parallel_for(per.size(), jobs, [&](std::size_t p) {
      const auto& prof = spec.professions[p];
      const auto& ref = traces.at(prof.group);
      const auto& var = traces.at(other_attr(spec, prof.group));
      per[p] = cna_compare(bundle, ref, bundle, var, profession_token(tok, prof.name),
                           LayerRange::all(bundle.config.n_layers));
    });
  }

  BiasEditReport r;
  std::set<NeuronId> chosen;
  auto take = [&](std::size_t p, const CnaEntry& e) {
    if (chosen.size() >= spec.top_k || !chosen.insert(e.id).second) return;
    r.edited.push_back({e.id, spec.professions[p].name, e.delta, e.importance_ref, e.importance_var, e.coef_ref,
                        e.coef_var});
  };
  if (spec.top_k > 0 && spec.selection == BiasEditSpec::Selection::global_union) {
    struct Candidate {
      std::size_t profession;
      const CnaEntry* entry;
    };
    std::vector<Candidate> all;
    for (std::size_t p = 0; p < per.size(); ++p) {
      const std::size_t n = std::min(spec.top_k, per[p].ranking.size());
      for (std::size_t i = 0; i < n; ++i) all.push_back({p, &per[p].ranking[i]});
    }
    std::stable_sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
      if (a.entry->delta != b.entry->delta) return a.entry->delta > b.entry->delta;
      if (a.entry->id != b.entry->id) return a.entry->id < b.entry->id;
      return a.profession < b.profession;
    });
    for (const auto& c : all) take(c.profession, *c.entry);
  } else if (spec.top_k > 0) {
    for (std::size_t rank = 0; chosen.size() < spec.top_k; ++rank) {
      bool any = false;
      for (std::size_t p = 0; p < per.size(); ++p) {
        if (rank >= per[p].ranking.size()) continue;
        any = true;
        take(p, per[p].ranking[rank]);
      }
      if (!any) break;
    }
  }

  std::vector<NeuronId> ids;
  for (const auto& n : r.edited) ids.push_back(n.id);
  edited = zero_neurons(bundle, ids);
  r.before = bias_gap(bundle, spec);
  r.after = bias_gap(edited, spec);
  return r;
}

}  // namespace cnalab
