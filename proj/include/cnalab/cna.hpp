#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cnalab/forward.hpp"
#include "cnalab/interventions.hpp"

namespace cnalab {

// One side of a comparison: a model, the interventions applied to it and the
// input it reads.
struct RunSpec {
  const ModelBundle& bundle;
  const InterventionPlan& plan;
  std::span<const TokenId> tokens;
};

// Increase in log p(target) at the last position when the neuron's subvalue
// is added to its layer's residual output. Uses the plan-scaled subvalue
// recorded in the trace, so a masked neuron scores 0.
double importance_score(const ModelBundle& bundle, const ForwardTrace& trace, const NeuronId& neuron, TokenId target);
double importance_score(const ModelBundle& bundle, std::span<const TokenId> tokens, const NeuronId& neuron,
                        TokenId target);
// Scores for every neuron of one layer.
std::vector<double> layer_importance(const ModelBundle& bundle, const ForwardTrace& trace, std::size_t layer,
                                     TokenId target);

struct TokenScore {
  TokenId id = 0;
  std::string token;
  double prob = 0.0;
};

// Top-k of softmax(E_u · v), descending probability, ties by ascending id.
std::vector<TokenScore> project_vocab(const ModelBundle& bundle, std::span<const float> v, std::size_t k);
// Ids of the k highest logits of E_u · v (same order as project_vocab).
std::vector<TokenId> top_token_ids(const ModelBundle& bundle, std::span<const float> v, std::size_t k);

struct CnaEntry {
  NeuronId id;
  double importance_ref = 0.0;
  double importance_var = 0.0;
  double delta = 0.0;  // importance_ref - importance_var
  float coef_ref = 0.0f;
  float coef_var = 0.0f;
};

struct CnaResult {
  TokenId target = 0;
  LayerRange scope;
  std::vector<CnaEntry> ranking;  // descending delta, ties by neuron id

  std::vector<CnaEntry> top(std::size_t k) const;
};

CnaResult cna_compare(const RunSpec& reference, const RunSpec& variant, std::optional<TokenId> target,
                      std::optional<LayerRange> scope = std::nullopt);
// Same, reusing traces already computed for both sides.
CnaResult cna_compare(const ModelBundle& ref_bundle, const ForwardTrace& ref_trace, const ModelBundle& var_bundle,
                      const ForwardTrace& var_trace, TokenId target, LayerRange scope);

struct EdgeRule {
  enum class Kind { zscore, absolute };
  Kind kind = Kind::zscore;
  double threshold = 3.0;
};

struct PeEdge {
  NeuronId from;
  NeuronId to;
  double weight = 0.0;  // fc2_from · fc1_to
  double zscore = 0.0;  // against fc2_from · every key of to's layer
};

struct PeDag {
  std::vector<NeuronId> nodes;
  std::vector<PeEdge> edges;
  NeuronId root;
};

PeDag build_pe_dag(const ModelBundle& bundle, const CnaResult& ranking, std::size_t k, const EdgeRule& rule = {});

// Lowest-layer entry among `entries`, ties resolved by the larger reference
// importance, then by the smaller neuron index.
const CnaEntry& lowest_entry(std::span<const CnaEntry> entries);

struct LowestResult {
  NeuronId masked;
  std::vector<NeuronId> remaining;
  std::vector<float> coef_before;
  std::vector<float> coef_after;
  double decrease_pct = 0.0;  // relative decrease of the mean coefficient
};

LowestResult intervene_lowest(const RunSpec& reference, const CnaResult& ranking, std::size_t k);

enum class ValueOutputMode { per_head, whole_layer };

struct HiddenOptions {
  LayerRange shallow;
  LayerRange attention;
  ValueOutputMode mode = ValueOutputMode::per_head;
  std::size_t top_n = 50;
  std::size_t jobs = 1;
};

// For every shallow neuron, the largest number of concept tokens among the
// top_n projected tokens of any value-output transform of its FFN value.
struct ConceptCounts {
  std::vector<NeuronId> neurons;
  std::vector<std::size_t> best_count;
};

ConceptCounts hidden_concept_counts(const ModelBundle& bundle, const std::set<TokenId>& concepts,
                                    const HiddenOptions& opts);
std::vector<NeuronId> select_hidden(const ConceptCounts& counts, std::size_t m);
std::vector<NeuronId> detect_hidden_interpretable(const ModelBundle& bundle, const std::set<TokenId>& concepts,
                                                  std::size_t m, const HiddenOptions& opts);

// Digit, number-word and operator tokens (bare and space-prefixed).
std::set<TokenId> arithmetic_concepts(const Tokenizer& tok);

std::vector<float> coefficients_at(const ForwardTrace& trace, std::span<const NeuronId> neurons, std::size_t position);

}  // namespace cnalab
