#include "cnalab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cnalab/errors.hpp"
#include "cnalab/parallel.hpp"

namespace cnalab {

double decrease_pct(double before, double after) {
  return before == 0.0 ? 0.0 : 100.0 * (before - after) / std::abs(before);
}

namespace {

struct Prepared {
  std::vector<TokenId> tokens;
  TokenId gold = 0;
};

std::vector<Prepared> prepare(const ModelBundle& bundle, const std::vector<CaseSpec>& cases) {
  if (cases.empty()) throw ConfigError("no cases to run");
  std::vector<Prepared> out;
  for (const auto& c : cases) {
    const auto gold = bundle.tokenizer.find(c.gold);
    if (!gold) throw DataError("gold token '" + c.gold + "' is not in the vocabulary");
    out.push_back({bundle.tokenizer.tokenize(c.prompt), *gold});
  }
  return out;
}

std::vector<NeuronId> ids_of(const std::vector<CnaEntry>& entries) {
  std::vector<NeuronId> out;
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

double mean_coef(const std::vector<CnaEntry>& entries, bool reference) {
  double s = 0.0;
  for (const auto& e : entries) s += reference ? e.coef_ref : e.coef_var;
  return entries.empty() ? 0.0 : s / static_cast<double>(entries.size());
}

void check_ks(const std::vector<std::size_t>& ks, std::size_t available, std::size_t minimum) {
  if (ks.empty()) throw ConfigError("no K values given");
  for (std::size_t k : ks)
    if (k < minimum || k > available)
      throw ConfigError("K=" + std::to_string(k) + " outside [" + std::to_string(minimum) + ", " +
                        std::to_string(available) + "]");
}

std::size_t scope_size(const ModelConfig& c, const LayerRange& r) {
  if (r.empty() || r.last >= c.n_layers) throw ConfigError("layer range outside the model");
  return r.count() * c.n_ffn;
}

}  // namespace

MaskKeepReport mask_keep_experiment(const ModelBundle& bundle, const HeadId& head, const std::vector<CaseSpec>& cases,
                                    const std::vector<std::size_t>& ks, const LayerRange& deep, std::size_t jobs) {
  check_head(bundle.config, head);
  check_ks(ks, scope_size(bundle.config, deep), 1);
  const auto prepared = prepare(bundle, cases);
  const InterventionPlan none;
  const InterventionPlan zeroed = zero_head_plan(head);

  struct PerCase {
    bool base = false;
    std::vector<char> mask, keep;
    std::vector<double> coef;
  };
  std::vector<PerCase> per(prepared.size());
  parallel_for(prepared.size(), jobs, [&](std::size_t i) {
    const auto& p = prepared[i];
    const auto ref = forward(bundle, p.tokens, none);
    const auto var = forward(bundle, p.tokens, zeroed);
    const auto cna = cna_compare(bundle, ref, bundle, var, ref.argmax(), deep);
    auto& out = per[i];
    out.base = ref.argmax() == p.gold;
    for (std::size_t k : ks) {
      const auto top = cna.top(k);
      const auto ids = ids_of(top);
      out.mask.push_back(forward(bundle, p.tokens, mask_plan(ids)).argmax() == p.gold);
      InterventionPlan keep;
      keep.keep_only.push_back({deep, {ids.begin(), ids.end()}});
      out.keep.push_back(forward(bundle, p.tokens, keep).argmax() == p.gold);
      out.coef.push_back(decrease_pct(mean_coef(top, true), mean_coef(top, false)));
    }
  });

  MaskKeepReport r;
  r.head = head;
  r.deep = deep;
  const double n = static_cast<double>(per.size());
  for (const auto& c : per) r.base_accuracy += c.base;
  r.base_accuracy /= n;
  for (std::size_t j = 0; j < ks.size(); ++j) {
    MaskKeepRow row;
    row.k = ks[j];
    for (const auto& c : per) {
      row.mask_accuracy += c.mask[j];
      row.keep_accuracy += c.keep[j];
      row.coef_drop_pct += c.coef[j];
    }
    row.mask_accuracy /= n;
    row.keep_accuracy /= n;
    row.coef_drop_pct /= n;
    row.mask_drop_pct = decrease_pct(r.base_accuracy, row.mask_accuracy);
    row.keep_drop_pct = decrease_pct(r.base_accuracy, row.keep_accuracy);
    r.rows.push_back(row);
  }
  return r;
}

std::vector<LowestRow> lowest_experiment(const ModelBundle& bundle, const HeadId& head,
                                         const std::vector<CaseSpec>& cases, const std::vector<std::size_t>& ks,
                                         const LayerRange& deep, std::size_t jobs) {
  check_head(bundle.config, head);
  check_ks(ks, scope_size(bundle.config, deep), 2);
  const auto prepared = prepare(bundle, cases);
  const InterventionPlan none;
  const InterventionPlan zeroed = zero_head_plan(head);

  std::vector<std::vector<double>> per(prepared.size());
  parallel_for(prepared.size(), jobs, [&](std::size_t i) {
    const auto& p = prepared[i];
    const auto ref = forward(bundle, p.tokens, none);
    const auto var = forward(bundle, p.tokens, zeroed);
    const auto cna = cna_compare(bundle, ref, bundle, var, ref.argmax(), deep);
    const RunSpec spec{bundle, none, p.tokens};
    for (std::size_t k : ks) per[i].push_back(intervene_lowest(spec, cna, k).decrease_pct);
  });

  std::vector<LowestRow> rows;
  for (std::size_t j = 0; j < ks.size(); ++j) {
    LowestRow row{ks[j], 0.0};
    for (const auto& c : per) row.decrease_pct += c[j];
    row.decrease_pct /= static_cast<double>(per.size());
    rows.push_back(row);
  }
  return rows;
}

std::vector<NeuronId> random_neurons(const ModelConfig& config, const LayerRange& range, std::size_t count,
                                     std::uint64_t seed) {
  const std::size_t total = scope_size(config, range);
  if (count > total) throw std::invalid_argument("random_neurons: more neurons requested than the range holds");
  std::vector<std::size_t> pool(total);
  for (std::size_t i = 0; i < total; ++i) pool[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + rng.below(total - i)]);
  std::vector<NeuronId> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back({range.first + pool[i] / config.n_ffn, pool[i] % config.n_ffn});
  std::sort(out.begin(), out.end());
  return out;
}

HiddenReport hidden_experiment(const ModelBundle& bundle, const std::set<TokenId>& concepts,
                               const std::vector<std::size_t>& ms, const HiddenOptions& opts,
                               const std::vector<CaseSpec>& cases, std::uint64_t seed) {
  if (cases.empty()) throw ConfigError("no cases to run");
  const auto counts = hidden_concept_counts(bundle, concepts, opts);
  HiddenReport r;
  r.base_accuracy = evaluate(bundle, {}, cases, opts.jobs).all.accuracy();
  for (std::size_t m : ms) {
    if (concepts.empty() && m > 0) throw std::invalid_argument("detect-hidden: empty concept set with M > 0");
    HiddenRow row;
    row.m = m;
    row.neurons = select_hidden(counts, m);
    row.masked_accuracy = evaluate(bundle, mask_plan(row.neurons), cases, opts.jobs).all.accuracy();
    row.drop_pct = decrease_pct(r.base_accuracy, row.masked_accuracy);
    const auto control = random_neurons(bundle.config, opts.shallow, row.neurons.size(), seed + m);
    row.random_accuracy = evaluate(bundle, mask_plan(control), cases, opts.jobs).all.accuracy();
    row.random_drop_pct = decrease_pct(r.base_accuracy, row.random_accuracy);
    r.rows.push_back(std::move(row));
  }
  return r;
}

LoraCoefReport lora_coef_experiment(const ModelBundle& base, const std::vector<LoraAdapter>& adapters,
                                    const std::vector<std::string>& labels, const std::vector<CaseSpec>& cases,
                                    const std::vector<std::size_t>& ks, const LayerRange& deep,
                                    std::size_t probe_count, std::size_t jobs) {
  if (adapters.empty()) throw ConfigError("lora-coef needs at least one adapter");
  if (labels.size() != adapters.size()) throw std::invalid_argument("one label per adapter expected");
  check_ks(ks, scope_size(base.config, deep), 1);
  const auto prepared = prepare(base, cases);
  std::vector<InterventionPlan> plans(adapters.size());
  for (std::size_t a = 0; a < adapters.size(); ++a) {
    adapters[a].validate(base.config);
    plans[a].lora.push_back(adapters[a]);
  }
  const InterventionPlan none;

  // per[a][case][k]
  std::vector<std::vector<std::vector<double>>> per(adapters.size(),
                                                    std::vector<std::vector<double>>(prepared.size()));
  parallel_for(adapters.size() * prepared.size(), jobs, [&](std::size_t job) {
    const std::size_t a = job / prepared.size(), i = job % prepared.size();
    const auto& p = prepared[i];
    const auto ref = forward(base, p.tokens, plans[a]);
    const auto var = forward(base, p.tokens, none);
    const auto cna = cna_compare(base, ref, base, var, ref.argmax(), deep);
    for (std::size_t k : ks) {
      const auto top = cna.top(k);
      // An increase is a negative decrease, measured against the base model.
      per[a][i].push_back(-decrease_pct(mean_coef(top, false), mean_coef(top, true)));
    }
  });

  LoraCoefReport r;
  r.ks = ks;
  for (std::size_t a = 0; a < adapters.size(); ++a) {
    LoraCoefRow row{labels[a], adapters[a].layer, std::vector<double>(ks.size(), 0.0)};
    for (std::size_t j = 0; j < ks.size(); ++j) {
      for (const auto& c : per[a]) row.increase_pct[j] += c[j];
      row.increase_pct[j] /= static_cast<double>(prepared.size());
    }
    r.rows.push_back(std::move(row));
  }

  const auto& first = prepared.front();
  const auto base_trace = forward(base, first.tokens, none);
  const auto first_ref = forward(base, first.tokens, plans.front());
  const auto probe = cna_compare(base, first_ref, base, base_trace, first_ref.argmax(), deep);
  r.probe_neurons = ids_of(probe.top(std::min(probe_count, probe.ranking.size())));
  const std::size_t last = first.tokens.size() - 1;
  r.probe_base = coefficients_at(base_trace, r.probe_neurons, last);
  for (const auto& plan : plans)
    r.probe_adapted.push_back(coefficients_at(forward(base, first.tokens, plan), r.probe_neurons, last));
  return r;
}

}  // namespace cnalab
