#include "cnalab/report.hpp"

#include <algorithm>
#include <cstdio>

namespace cnalab {

using nlohmann::json;

std::string TextTable::render() const {
  std::vector<std::size_t> width(header_.size(), 0);
  auto measure = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
  };
  measure(header_);
  for (const auto& r : rows_) measure(r);

  auto line = [&](const std::vector<std::string>& row) {
    std::string out;
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string cell = c < row.size() ? row[c] : "";
      const std::string pad(width[c] - cell.size(), ' ');
      if (c > 0) out += "  ";
      const bool left = std::find(left_.begin(), left_.end(), c) != left_.end();
      out += left ? cell + pad : pad + cell;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(header_);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& r : rows_) out += line(r);
  return out;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.starts_with("-") && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);  // no "-0.00"
  return s;
}

std::string percent(double fraction) { return fixed(100.0 * fraction, 1); }

std::string token_list(const std::vector<TokenScore>& tokens) {
  std::string out = "[";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ", ";
    out += tokens[i].token;
  }
  return out + "]";
}

namespace {

json tally_json(const Tally& t) { return {{"correct", t.correct}, {"total", t.total}, {"accuracy", t.accuracy()}}; }

}  // namespace

json to_json(const EvalResult& r) {
  json ops = json::object(), cats = json::object();
  for (const auto& [k, t] : r.by_operation) ops[k] = tally_json(t);
  for (const auto& [k, t] : r.by_category) cats[k] = tally_json(t);
  return {{"all", tally_json(r.all)}, {"by_operation", ops}, {"by_category", cats}};
}

std::string eval_table(const EvalResult& r) {
  TextTable t({"subset", "correct", "total", "acc"});
  t.add({"all", std::to_string(r.all.correct), std::to_string(r.all.total), percent(r.all.accuracy())});
  for (const auto& [k, v] : r.by_operation)
    t.add({"op " + k, std::to_string(v.correct), std::to_string(v.total), percent(v.accuracy())});
  for (const auto& [k, v] : r.by_category)
    t.add({k, std::to_string(v.correct), std::to_string(v.total), percent(v.accuracy())});
  return t.render();
}

json to_json(const SweepResult& r) {
  json heads = json::array();
  for (const auto& h : r.heads) {
    json e = to_json(h.result);
    e["head"] = to_string(h.head);
    e["layer"] = h.head.layer;
    e["drop"] = h.drop;
    heads.push_back(e);
  }
  return {{"baseline", to_json(r.baseline)}, {"heads", heads}};
}

std::string sweep_table(const SweepResult& r, std::size_t top) {
  top = std::min(top, r.heads.size());
  std::vector<std::string> header{"", "ori"};
  for (std::size_t i = 0; i < top; ++i) header.push_back(to_string(r.heads[i].head));
  TextTable t(header);
  std::vector<std::string> all{"all", percent(r.baseline.all.accuracy())};
  for (std::size_t i = 0; i < top; ++i) all.push_back(percent(r.heads[i].result.all.accuracy()));
  t.add(all);
  for (const auto& [op, tally] : r.baseline.by_operation) {
    std::vector<std::string> row{op, percent(tally.accuracy())};
    for (std::size_t i = 0; i < top; ++i) {
      const auto& by = r.heads[i].result.by_operation;
      auto it = by.find(op);
      row.push_back(it == by.end() ? "-" : percent(it->second.accuracy()));
    }
    t.add(row);
  }
  return t.render();
}

json to_json(const std::vector<TokenScore>& tokens) {
  json arr = json::array();
  for (const auto& s : tokens) arr.push_back({{"id", s.id}, {"token", s.token}, {"prob", s.prob}});
  return arr;
}

json cna_report(const ModelBundle& bundle, const CnaResult& r, std::size_t k, std::size_t top_tokens) {
  json neurons = json::array();
  for (const auto& e : r.top(k)) {
    json toks = json::array();
    for (const auto& s : project_vocab(bundle, bundle.layers[e.id.layer].fc2.row(e.id.neuron), top_tokens))
      toks.push_back(s.token);
    neurons.push_back({{"neuron", to_string(e.id)},
                       {"layer", e.id.layer},
                       {"importance_ref", e.importance_ref},
                       {"importance_var", e.importance_var},
                       {"delta", e.delta},
                       {"coefficient", e.coef_ref},
                       {"coefficient_var", e.coef_var},
                       {"top_tokens", toks}});
  }
  return {{"target", r.target},
          {"target_token", bundle.tokenizer.token(r.target)},
          {"scope", {r.scope.first, r.scope.last}},
          {"scored", r.ranking.size()},
          {"neurons", neurons}};
}

std::string cna_table(const json& report, const std::string& ref_tag, const std::string& var_tag) {
  TextTable t({"FFNv", "mdl", "imp", "coef", "top tokens"});
  t.left_align(4);
  for (const auto& n : report.at("neurons")) {
    std::string toks = "[";
    for (std::size_t i = 0; i < n.at("top_tokens").size(); ++i)
      toks += (i ? ", " : "") + n.at("top_tokens")[i].get<std::string>();
    toks += "]";
    const auto id = n.at("neuron").get<std::string>();
    t.add({id, ref_tag, fixed(n.at("importance_ref").get<double>()), fixed(n.at("coefficient").get<double>()), toks});
    t.add({id, var_tag, fixed(n.at("importance_var").get<double>()), fixed(n.at("coefficient_var").get<double>()),
           ""});
  }
  return t.render();
}

json to_json(const PeDag& dag) {
  json nodes = json::array(), edges = json::array();
  for (const auto& n : dag.nodes) nodes.push_back(to_string(n));
  for (const auto& e : dag.edges)
    edges.push_back({{"from", to_string(e.from)}, {"to", to_string(e.to)}, {"weight", e.weight}, {"zscore", e.zscore}});
  return {{"nodes", nodes}, {"edges", edges}, {"root", to_string(dag.root)}};
}

std::string pe_dag_text(const PeDag& dag) {
  std::string out = "root " + to_string(dag.root) + "\n";
  TextTable t({"from", "to", "weight", "z"});
  for (const auto& e : dag.edges) t.add({to_string(e.from), to_string(e.to), fixed(e.weight, 4), fixed(e.zscore)});
  return out + t.render();
}

json to_json(const MaskKeepReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"k", row.k},
                    {"mask_accuracy", row.mask_accuracy},
                    {"keep_accuracy", row.keep_accuracy},
                    {"mask_drop_pct", row.mask_drop_pct},
                    {"keep_drop_pct", row.keep_drop_pct},
                    {"coef_drop_pct", row.coef_drop_pct}});
  return {{"head", to_string(r.head)},
          {"deep", {r.deep.first, r.deep.last}},
          {"base_accuracy", r.base_accuracy},
          {"rows", rows}};
}

std::string mask_keep_table(const MaskKeepReport& r) {
  std::vector<std::string> header{""};
  for (const auto& row : r.rows) header.push_back("top" + std::to_string(row.k));
  TextTable t(header);
  std::vector<std::string> mask{"mask"}, keep{"keep"}, coef{"coef"};
  for (const auto& row : r.rows) {
    mask.push_back(fixed(row.mask_drop_pct, 1));
    keep.push_back(fixed(row.keep_drop_pct, 1));
    coef.push_back(fixed(row.coef_drop_pct, 1));
  }
  t.add(mask);
  t.add(keep);
  t.add(coef);
  return t.render();
}

json to_json(const std::vector<LowestRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) arr.push_back({{"k", r.k}, {"decrease_pct", r.decrease_pct}});
  return {{"rows", arr}};
}

std::string lowest_table(const std::vector<LowestRow>& rows) {
  std::vector<std::string> header{""}, coef{"coef"};
  for (const auto& r : rows) {
    header.push_back("top" + std::to_string(r.k));
    coef.push_back(fixed(r.decrease_pct, 1));
  }
  TextTable t(header);
  t.add(coef);
  return t.render();
}

json to_json(const HiddenReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json ids = json::array();
    for (const auto& n : row.neurons) ids.push_back(to_string(n));
    rows.push_back({{"m", row.m},
                    {"count", row.neurons.size()},
                    {"masked_accuracy", row.masked_accuracy},
                    {"drop_pct", row.drop_pct},
                    {"random_accuracy", row.random_accuracy},
                    {"random_drop_pct", row.random_drop_pct},
                    {"neurons", ids}});
  }
  return {{"base_accuracy", r.base_accuracy}, {"rows", rows}};
}

std::string hidden_table(const HiddenReport& r) {
  std::vector<std::string> header{""}, number{"number"}, acc{"acc"}, random{"random"};
  for (const auto& row : r.rows) {
    header.push_back("M=" + std::to_string(row.m));
    number.push_back(std::to_string(row.neurons.size()));
    acc.push_back(fixed(row.drop_pct, 1));
    random.push_back(fixed(row.random_drop_pct, 1));
  }
  TextTable t(header);
  t.add(number);
  t.add(acc);
  t.add(random);
  return t.render();
}

json to_json(const LoraCoefReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) rows.push_back({{"label", row.label}, {"layer", row.layer}, {"increase_pct", row.increase_pct}});
  json probe = json::array();
  for (std::size_t i = 0; i < r.probe_neurons.size(); ++i) {
    json adapted = json::array();
    for (const auto& a : r.probe_adapted) adapted.push_back(a[i]);
    probe.push_back({{"neuron", to_string(r.probe_neurons[i])},
                     {"layer", r.probe_neurons[i].layer},
                     {"coefficient", r.probe_base[i]},
                     {"coefficient_adapted", adapted}});
  }
  return {{"ks", r.ks}, {"rows", rows}, {"probe", probe}};
}

std::string lora_coef_table(const LoraCoefReport& r) {
  std::vector<std::string> header{"", "ori"};
  for (const auto& row : r.rows) header.push_back(row.label);
  TextTable probe(header);
  for (std::size_t i = 0; i < r.probe_neurons.size(); ++i) {
    std::vector<std::string> line{to_string(r.probe_neurons[i]), fixed(r.probe_base[i], 1)};
    for (const auto& a : r.probe_adapted) line.push_back(fixed(a[i], 1));
    probe.add(line);
  }

  std::vector<std::string> head2{"LoRA layer"};
  for (std::size_t k : r.ks) head2.push_back("top" + std::to_string(k));
  TextTable inc(head2);
  for (const auto& row : r.rows) {
    std::vector<std::string> line{row.label};
    for (double v : row.increase_pct) line.push_back(fixed(v, 1) + "%");
    inc.add(line);
  }
  return probe.render() + "\n" + inc.render();
}

json to_json(const BiasGaps& g) {
  return {{"total", g.total}, {"by_group", g.by_group}, {"gaps", g.gaps}};
}

json to_json(const BiasEditReport& r, const ModelBundle& bundle, std::size_t top_tokens) {
  json neurons = json::array();
  for (const auto& n : r.edited) {
    json toks = json::array();
    for (const auto& s : project_vocab(bundle, bundle.layers[n.id.layer].fc2.row(n.id.neuron), top_tokens))
      toks.push_back(s.token);
    neurons.push_back({{"neuron", to_string(n.id)},
                       {"layer", n.id.layer},
                       {"profession", n.profession},
                       {"delta", n.delta},
                       {"importance_ref", n.importance_attr},
                       {"importance_var", n.importance_other},
                       {"coefficient", n.coef_attr},
                       {"coefficient_var", n.coef_other},
                       {"top_tokens", toks}});
  }
  return {{"edited", neurons}, {"before", to_json(r.before)}, {"after", to_json(r.after)}};
}

std::string bias_table(const BiasEditReport& r, const ModelBundle& bundle, std::size_t top_tokens) {
  TextTable neurons({"FFNv", "prof", "imp", "coef", "imp'", "coef'", "top tokens"});
  neurons.left_align(1);
  neurons.left_align(6);
  for (const auto& n : r.edited)
    neurons.add({to_string(n.id), n.profession, fixed(n.importance_attr), fixed(n.coef_attr),
                 fixed(n.importance_other), fixed(n.coef_other),
                 token_list(project_vocab(bundle, bundle.layers[n.id.layer].fc2.row(n.id.neuron), top_tokens))});

  std::vector<std::string> header{"", "total bias"};
  for (const auto& [g, v] : r.before.by_group) header.push_back(g + " bias");
  TextTable gaps(header);
  auto row = [&](const char* name, const BiasGaps& g) {
    std::vector<std::string> line{name, fixed(g.total)};
    for (const auto& [k, v] : g.by_group) line.push_back(fixed(v));
    gaps.add(line);
  };
  row("origin", r.before);
  row("edited", r.after);
  return neurons.render() + "\n" + gaps.render();
}

}  // namespace cnalab
