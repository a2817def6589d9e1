#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cnalab/cna.hpp"
#include "cnalab/tasks.hpp"

namespace cnalab {

struct PruneSpec {
  LayerRange deep;
  std::size_t top_n = 500;
  std::set<NeuronId> keep;
  std::size_t case_count = 0;
  std::string mode;  // how the per-case rankings were produced

  double keep_fraction(const ModelConfig& c) const;
  void validate(const ModelConfig& c) const;
};

// Per case, CNA between `reference` (ref_plan applied, usually a LoRA) and
// `base`, restricted to `deep`, targeting the reference's greedy prediction.
// The keep-set is the union of the per-case top-N.
PruneSpec build_prune_spec(const ModelBundle& base, const ModelBundle& reference, const InterventionPlan& ref_plan,
                           const std::vector<CaseSpec>& cases, const LayerRange& deep, std::size_t top_n,
                           std::size_t jobs = 1);

// Same keep-set size, drawn uniformly from the deep range.
PruneSpec random_prune_spec(const ModelConfig& c, const LayerRange& deep, std::size_t keep_count, std::uint64_t seed);

// New bundle with fc1 column and fc2 row zeroed for every deep neuron outside
// the keep-set.
ModelBundle prune(const ModelBundle& bundle, const PruneSpec& spec);
// Plan that runs the unpruned bundle as if pruned.
InterventionPlan prune_plan(const PruneSpec& spec);

nlohmann::json to_json(const PruneSpec& s);
PruneSpec prune_spec_from_json(const nlohmann::json& j);

// Zeroes fc1 column and fc2 row of each neuron.
ModelBundle zero_neurons(const ModelBundle& bundle, const std::vector<NeuronId>& neurons);

struct Profession {
  std::string name;
  std::string group;  // attribute the profession is stereotyped with
};

struct BiasEditSpec {
  std::string attr1 = "woman";
  std::string attr2 = "man";
  std::vector<Profession> professions;
  std::vector<std::string> templates;  // "<gend>" marks the attribute slot
  std::size_t top_k = 18;
  enum class Selection { global_union, per_profession };
  Selection selection = Selection::global_union;

  void validate(const Tokenizer& tok) const;
};

BiasEditSpec default_bias_spec();
BiasEditSpec bias_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BiasEditSpec& s);

struct BiasGaps {
  // gaps[t][p] = log p(prof_p | template_t(attr1)) - log p(prof_p | template_t(attr2))
  std::vector<std::vector<double>> gaps;
  // Gaps oriented so that a positive value follows the stereotype, averaged
  // over templates and professions of each group and overall.
  double total = 0.0;
  std::map<std::string, double> by_group;
};

BiasGaps bias_gap(const ModelBundle& bundle, const BiasEditSpec& spec);

struct BiasNeuron {
  NeuronId id;
  std::string profession;
  double delta = 0.0;
  double importance_attr = 0.0;   // stereotyped-attribute prompt
  double importance_other = 0.0;  // other-attribute prompt
  float coef_attr = 0.0f;
  float coef_other = 0.0f;
};

struct BiasEditReport {
  std::vector<BiasNeuron> edited;
  BiasGaps before;
  BiasGaps after;
};

// CNA per profession on the first template, reference = the profession's
// stereotyped attribute prompt, variant = the other one.
BiasEditReport edit_bias(const ModelBundle& bundle, const BiasEditSpec& spec, ModelBundle& edited,
                         std::size_t jobs = 1);

}  // namespace cnalab
