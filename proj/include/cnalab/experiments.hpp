#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cnalab/cna.hpp"
#include "cnalab/tasks.hpp"

namespace cnalab {

// Relative decrease in percent; 0 when the reference is 0.
double decrease_pct(double before, double after);

// Head-zeroing study over a case list: per case, CNA between the model and
// the model with `head` zeroed, scored in the deep range.
struct MaskKeepRow {
  std::size_t k = 0;
  double mask_accuracy = 0.0;
  double keep_accuracy = 0.0;
  double mask_drop_pct = 0.0;
  double keep_drop_pct = 0.0;
  double coef_drop_pct = 0.0;  // top-k coefficients, intervened vs original, mean over cases
};

struct MaskKeepReport {
  HeadId head;
  LayerRange deep;
  double base_accuracy = 0.0;
  std::vector<MaskKeepRow> rows;
};

MaskKeepReport mask_keep_experiment(const ModelBundle& bundle, const HeadId& head, const std::vector<CaseSpec>& cases,
                                    const std::vector<std::size_t>& ks, const LayerRange& deep, std::size_t jobs = 1);

struct LowestRow {
  std::size_t k = 0;
  double decrease_pct = 0.0;  // mean over cases
};

std::vector<LowestRow> lowest_experiment(const ModelBundle& bundle, const HeadId& head,
                                         const std::vector<CaseSpec>& cases, const std::vector<std::size_t>& ks,
                                         const LayerRange& deep, std::size_t jobs = 1);

struct HiddenRow {
  std::size_t m = 0;
  std::vector<NeuronId> neurons;
  double masked_accuracy = 0.0;
  double drop_pct = 0.0;
  double random_accuracy = 0.0;  // equal-size seeded random shallow set
  double random_drop_pct = 0.0;
};

struct HiddenReport {
  double base_accuracy = 0.0;
  std::vector<HiddenRow> rows;
};

HiddenReport hidden_experiment(const ModelBundle& bundle, const std::set<TokenId>& concepts,
                               const std::vector<std::size_t>& ms, const HiddenOptions& opts,
                               const std::vector<CaseSpec>& cases, std::uint64_t seed);

// `count` distinct neurons drawn uniformly from `range`, sorted.
std::vector<NeuronId> random_neurons(const ModelConfig& config, const LayerRange& range, std::size_t count,
                                     std::uint64_t seed);

struct LoraCoefRow {
  std::string label;
  std::size_t layer = 0;
  std::vector<double> increase_pct;  // one per k
};

struct LoraCoefReport {
  std::vector<std::size_t> ks;
  std::vector<LoraCoefRow> rows;
  // Coefficients of a few neurons on the first case under the base model
  // and each adapter.
  std::vector<NeuronId> probe_neurons;
  std::vector<float> probe_base;
  std::vector<std::vector<float>> probe_adapted;
};

// Per case, CNA between base+adapter (reference) and base (variant) in the
// deep range; reports how much the adapter raises the mean coefficient of
// the top-k neurons.
LoraCoefReport lora_coef_experiment(const ModelBundle& base, const std::vector<LoraAdapter>& adapters,
                                    const std::vector<std::string>& labels, const std::vector<CaseSpec>& cases,
                                    const std::vector<std::size_t>& ks, const LayerRange& deep,
                                    std::size_t probe_count = 3, std::size_t jobs = 1);

}  // namespace cnalab
