#include "cnalab/cna.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cnalab/parallel.hpp"

namespace cnalab {

namespace {

double log_prob(const ModelBundle& bundle, std::span<const float> hidden, TokenId target) {
  const auto logits = vocab_logits(bundle, hidden);
  return log_softmax(logits)[target];
}

void check_target(const ModelBundle& bundle, TokenId target) {
  if (target >= bundle.config.vocab_size) throw std::invalid_argument("target token id out of range");
}

float effective_coefficient(const LayerTrace& lt, std::size_t position, std::size_t k) {
  const float s = lt.scales[k];
  return s == 0.0f ? 0.0f : s * lt.coefficients(position, k);
}

double importance_with_base(const ModelBundle& bundle, const ForwardTrace& trace, const NeuronId& n, TokenId target,
                            double base_lp) {
  const auto& lt = trace.layers[n.layer];
  const std::size_t last = trace.length() - 1;
  const auto residual = lt.residual.row(last);
  const float m = effective_coefficient(lt, last, n.neuron);
  const Vec with = add(residual, scaled(bundle.layers[n.layer].fc2.row(n.neuron), m));
  return log_prob(bundle, with, target) - base_lp;
}

std::vector<std::size_t> ranked_ids(std::span<const double> logits, std::size_t k) {
  std::vector<std::size_t> ids(logits.size());
  std::iota(ids.begin(), ids.end(), 0);
  k = std::min(k, ids.size());
  auto before = [&](std::size_t a, std::size_t b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), before);
  ids.resize(k);
  return ids;
}

std::vector<double> raw_logits(const ModelBundle& bundle, std::span<const float> v) {
  if (v.size() != bundle.config.d_model) throw std::invalid_argument("projection vector has wrong dimension");
  std::vector<double> logits(bundle.unembed.rows());
  for (std::size_t t = 0; t < logits.size(); ++t) logits[t] = dot(bundle.unembed.row(t), v);
  return logits;
}

}  // namespace

double importance_score(const ModelBundle& bundle, const ForwardTrace& trace, const NeuronId& neuron, TokenId target) {
  check_neuron(bundle.config, neuron);
  check_target(bundle, target);
  const std::size_t last = trace.length() - 1;
  const double base = log_prob(bundle, trace.layers[neuron.layer].residual.row(last), target);
  return importance_with_base(bundle, trace, neuron, target, base);
}

double importance_score(const ModelBundle& bundle, std::span<const TokenId> tokens, const NeuronId& neuron,
                        TokenId target) {
  return importance_score(bundle, forward(bundle, tokens), neuron, target);
}

std::vector<double> layer_importance(const ModelBundle& bundle, const ForwardTrace& trace, std::size_t layer,
                                     TokenId target) {
  if (layer >= bundle.config.n_layers) throw std::invalid_argument("layer out of range");
  check_target(bundle, target);
  const std::size_t last = trace.length() - 1;
  const auto& lt = trace.layers[layer];
  const double base = log_prob(bundle, lt.residual.row(last), target);
  std::vector<double> out(bundle.config.n_ffn, 0.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    // A zero subvalue leaves the residual untouched.
    if (effective_coefficient(lt, last, k) == 0.0f) continue;
    out[k] = importance_with_base(bundle, trace, {layer, k}, target, base);
  }
  return out;
}

std::vector<TokenId> top_token_ids(const ModelBundle& bundle, std::span<const float> v, std::size_t k) {
  const auto ids = ranked_ids(raw_logits(bundle, v), k);
  return {ids.begin(), ids.end()};
}

std::vector<TokenScore> project_vocab(const ModelBundle& bundle, std::span<const float> v, std::size_t k) {
  const auto logits = raw_logits(bundle, v);
  const auto probs = softmax(logits);
  std::vector<TokenScore> out;
  for (std::size_t id : ranked_ids(logits, k))
    out.push_back({static_cast<TokenId>(id), bundle.tokenizer.token(static_cast<TokenId>(id)), probs[id]});
  return out;
}

std::vector<CnaEntry> CnaResult::top(std::size_t k) const {
  k = std::min(k, ranking.size());
  return {ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(k)};
}

CnaResult cna_compare(const ModelBundle& ref_bundle, const ForwardTrace& ref_trace, const ModelBundle& var_bundle,
                      const ForwardTrace& var_trace, TokenId target, LayerRange scope) {
  if (!(ref_bundle.config == var_bundle.config))
    throw std::invalid_argument("cna: reference and variant models have different configs");
  if (scope.empty() || scope.last >= ref_bundle.config.n_layers) throw std::invalid_argument("cna: scope outside model");
  check_target(ref_bundle, target);

  CnaResult r;
  r.target = target;
  r.scope = scope;
  const std::size_t ref_last = ref_trace.length() - 1, var_last = var_trace.length() - 1;
  for (std::size_t l = scope.first; l <= scope.last; ++l) {
    const auto imp_ref = layer_importance(ref_bundle, ref_trace, l, target);
    const auto imp_var = layer_importance(var_bundle, var_trace, l, target);
    for (std::size_t k = 0; k < imp_ref.size(); ++k) {
      CnaEntry e;
      e.id = {l, k};
      e.importance_ref = imp_ref[k];
      e.importance_var = imp_var[k];
      e.delta = imp_ref[k] - imp_var[k];
      e.coef_ref = ref_trace.layers[l].coefficients(ref_last, k);
      e.coef_var = var_trace.layers[l].coefficients(var_last, k);
      r.ranking.push_back(e);
    }
  }
  std::stable_sort(r.ranking.begin(), r.ranking.end(), [](const CnaEntry& a, const CnaEntry& b) {
    if (a.delta != b.delta) return a.delta > b.delta;
    return a.id < b.id;
  });
  return r;
}

CnaResult cna_compare(const RunSpec& reference, const RunSpec& variant, std::optional<TokenId> target,
                      std::optional<LayerRange> scope) {
  if (!(reference.bundle.config == variant.bundle.config))
    throw std::invalid_argument("cna: reference and variant models have different configs");
  const auto ref_trace = forward(reference.bundle, reference.tokens, reference.plan);
  const auto var_trace = forward(variant.bundle, variant.tokens, variant.plan);
  return cna_compare(reference.bundle, ref_trace, variant.bundle, var_trace, target.value_or(ref_trace.argmax()),
                     scope.value_or(LayerRange::all(reference.bundle.config.n_layers)));
}

const CnaEntry& lowest_entry(std::span<const CnaEntry> entries) {
  if (entries.empty()) throw std::invalid_argument("no entries to choose from");
  const CnaEntry* best = &entries[0];
  for (const auto& e : entries) {
    if (e.id.layer != best->id.layer) {
      if (e.id.layer < best->id.layer) best = &e;
      continue;
    }
    if (e.importance_ref > best->importance_ref ||
        (e.importance_ref == best->importance_ref && e.id.neuron < best->id.neuron))
      best = &e;
  }
  return *best;
}

PeDag build_pe_dag(const ModelBundle& bundle, const CnaResult& ranking, std::size_t k, const EdgeRule& rule) {
  if (k == 0) throw std::invalid_argument("pe-dag: K must be positive");
  if (k > ranking.ranking.size()) throw std::invalid_argument("pe-dag: K exceeds the number of scored neurons");
  const auto nodes = ranking.top(k);

  PeDag dag;
  for (const auto& e : nodes) dag.nodes.push_back(e.id);
  dag.root = lowest_entry(nodes).id;

  for (const auto& from : nodes) {
    const auto value = bundle.layers[from.id.layer].fc2.row(from.id.neuron);
    for (const auto& to : nodes) {
      if (from.id.layer >= to.id.layer) continue;
      const auto& fc1 = bundle.layers[to.id.layer].fc1;
      // fc2_from · every key of the target layer.
      const Vec scores = vec_mat(value, fc1);
      double mean = 0.0;
      for (float s : scores) mean += s;
      mean /= static_cast<double>(scores.size());
      double var = 0.0;
      for (float s : scores) var += (s - mean) * (s - mean);
      const double sd = std::sqrt(var / static_cast<double>(scores.size()));

      const double w = dot(value, fc1.column(to.id.neuron));
      const double z = sd > 0.0 ? (w - mean) / sd : 0.0;
      const bool keep = rule.kind == EdgeRule::Kind::zscore ? (sd > 0.0 && z >= rule.threshold) : w >= rule.threshold;
      if (keep) dag.edges.push_back({from.id, to.id, w, z});
    }
  }
  return dag;
}

LowestResult intervene_lowest(const RunSpec& reference, const CnaResult& ranking, std::size_t k) {
  if (k < 2) throw std::invalid_argument("lowest: K must be at least 2");
  if (k > ranking.ranking.size()) throw std::invalid_argument("lowest: K exceeds the number of scored neurons");
  const auto nodes = ranking.top(k);
  const NeuronId masked = lowest_entry(nodes).id;

  LowestResult r;
  r.masked = masked;
  for (const auto& e : nodes)
    if (e.id != masked) r.remaining.push_back(e.id);

  InterventionPlan plan = reference.plan;
  plan.neuron_scales[masked] = 0.0f;
  const auto before = forward(reference.bundle, reference.tokens, reference.plan);
  const auto after = forward(reference.bundle, reference.tokens, plan);
  const std::size_t last = before.length() - 1;
  r.coef_before = coefficients_at(before, r.remaining, last);
  r.coef_after = coefficients_at(after, r.remaining, last);

  double mb = 0.0, ma = 0.0;
  for (std::size_t i = 0; i < r.remaining.size(); ++i) {
    mb += r.coef_before[i];
    ma += r.coef_after[i];
  }
  mb /= static_cast<double>(r.remaining.size());
  ma /= static_cast<double>(r.remaining.size());
  r.decrease_pct = mb == 0.0 ? 0.0 : 100.0 * (mb - ma) / std::abs(mb);
  return r;
}

std::vector<float> coefficients_at(const ForwardTrace& trace, std::span<const NeuronId> neurons, std::size_t position) {
  std::vector<float> out;
  out.reserve(neurons.size());
  for (const auto& n : neurons) out.push_back(trace.layers.at(n.layer).coefficients(position, n.neuron));
  return out;
}

std::set<TokenId> arithmetic_concepts(const Tokenizer& tok) {
  std::vector<std::string> words;
  for (int d = 0; d < 10; ++d) words.push_back(std::to_string(d));
  for (int n = 0; n < 20; ++n) words.push_back(number_word(n));
  for (int t = 2; t < 10; ++t) words.push_back(number_word(t * 10));
  words.push_back("hundred");
  for (const char* w : {"+", "-", "*", "/", "=", "plus", "minus", "times", "divides", "sum", "difference", "product",
                        "ratio"})
    words.push_back(w);
  std::set<TokenId> out;
  for (const auto& w : words)
    for (const auto& form : {w, " " + w})
      if (auto id = tok.find(form)) out.insert(*id);
  return out;
}

ConceptCounts hidden_concept_counts(const ModelBundle& bundle, const std::set<TokenId>& concepts,
                                    const HiddenOptions& opts) {
  const auto& cfg = bundle.config;
  if (opts.shallow.empty() || opts.shallow.last >= cfg.n_layers || opts.attention.empty() ||
      opts.attention.last >= cfg.n_layers)
    throw std::invalid_argument("detect-hidden: layer ranges outside the model");

  // Dense value-output transforms, one per head (or per layer).
  std::vector<Matrix> transforms;
  const std::size_t dh = cfg.d_head;
  for (std::size_t l = opts.attention.first; l <= opts.attention.last; ++l) {
    const auto& w = bundle.layers[l];
    if (opts.mode == ValueOutputMode::whole_layer) {
      transforms.push_back(matmul(w.wv, w.wo));
      continue;
    }
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      Matrix vo(cfg.d_model, cfg.d_model);
      for (std::size_t r = 0; r < cfg.d_model; ++r) {
        const auto slice = w.wv.row(r).subspan(h * dh, dh);
        const Vec row = vec_mat_rows(slice, w.wo, h * dh, dh);
        std::copy(row.begin(), row.end(), vo.row(r).begin());
      }
      transforms.push_back(std::move(vo));
    }
  }

  ConceptCounts out;
  for (std::size_t l = opts.shallow.first; l <= opts.shallow.last; ++l)
    for (std::size_t k = 0; k < cfg.n_ffn; ++k) out.neurons.push_back({l, k});
  out.best_count.assign(out.neurons.size(), 0);

  parallel_for(out.neurons.size(), opts.jobs, [&](std::size_t i) {
    const auto& n = out.neurons[i];
    const auto value = bundle.layers[n.layer].fc2.row(n.neuron);
    std::size_t best = 0;
    for (const auto& t : transforms) {
      const Vec v = vec_mat(value, t);
      std::size_t count = 0;
      for (TokenId id : top_token_ids(bundle, v, opts.top_n)) count += concepts.contains(id) ? 1 : 0;
      best = std::max(best, count);
    }
    out.best_count[i] = best;
  });
  return out;
}

std::vector<NeuronId> select_hidden(const ConceptCounts& counts, std::size_t m) {
  std::vector<NeuronId> out;
  for (std::size_t i = 0; i < counts.neurons.size(); ++i)
    if (counts.best_count[i] >= m) out.push_back(counts.neurons[i]);
  return out;
}

std::vector<NeuronId> detect_hidden_interpretable(const ModelBundle& bundle, const std::set<TokenId>& concepts,
                                                  std::size_t m, const HiddenOptions& opts) {
  if (concepts.empty() && m > 0) throw std::invalid_argument("detect-hidden: empty concept set with M > 0");
  return select_hidden(hidden_concept_counts(bundle, concepts, opts), m);
}

}  // namespace cnalab
