#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cnalab/config.hpp"
#include "cnalab/model.hpp"
#include "cnalab/tensor.hpp"

namespace cnalab {

// Attention head l^h.
struct HeadId {
  std::size_t layer = 0;
  std::size_t head = 0;
  auto operator<=>(const HeadId&) const = default;
};

// FFN neuron l_k.
struct NeuronId {
  std::size_t layer = 0;
  std::size_t neuron = 0;
  auto operator<=>(const NeuronId&) const = default;
};

std::string to_string(const HeadId& h);    // "17^22"
std::string to_string(const NeuronId& n);  // "28_3696"
HeadId parse_head(const std::string& s);   // accepts "17^22" or "17:22"
NeuronId parse_neuron(const std::string& s);

void check_head(const ModelConfig& c, const HeadId& h);
void check_neuron(const ModelConfig& c, const NeuronId& n);

enum class LoraTarget { wq, wv, both };

std::string to_string(LoraTarget t);
LoraTarget lora_target_from_string(const std::string& s);

// Low-rank update W_eff = W + (alpha / rank) · B · A on the targeted matrices
// of one layer. A is rank×d, B is d×rank.
struct LoraAdapter {
  std::size_t layer = 0;
  LoraTarget target = LoraTarget::both;
  std::size_t rank = 0;
  float alpha = 0.0f;
  // Per-target factors; a single-target adapter leaves the other pair empty.
  Matrix a_q, b_q;
  Matrix a_v, b_v;

  bool targets_q() const { return target != LoraTarget::wv; }
  bool targets_v() const { return target != LoraTarget::wq; }
  void validate(const ModelConfig& c) const;
};

// Default alpha is 2·rank.
LoraAdapter random_adapter(const ModelConfig& c, std::size_t layer, std::size_t rank, std::uint64_t seed,
                           float b_scale = 0.05f, LoraTarget target = LoraTarget::both);

LoraAdapter load_adapter(const std::filesystem::path& path);
void save_adapter(const std::filesystem::path& path, const LoraAdapter& a);

// Dense (alpha/rank)·B·A, the weight delta an adapter contributes.
Matrix lora_delta(const Matrix& a, const Matrix& b, std::size_t rank, float alpha);

// Every FFN neuron in `layers` that is not in `keep` is masked.
struct KeepOnly {
  LayerRange layers;
  std::set<NeuronId> keep;
};

// Declarative description of the knock-outs applied during one forward pass.
// Interventions act on contributions, never on stored weights.
struct InterventionPlan {
  std::set<HeadId> zero_heads;
  std::map<NeuronId, float> neuron_scales;  // 0 masks
  std::vector<KeepOnly> keep_only;
  std::vector<LoraAdapter> lora;

  bool empty() const { return zero_heads.empty() && neuron_scales.empty() && keep_only.empty() && lora.empty(); }

  // Throws std::invalid_argument on any violated invariant.
  void validate(const ModelConfig& c) const;

  // Union of two plans with disjoint targets; overlapping neuron targets throw.
  InterventionPlan merged(const InterventionPlan& other) const;

  // Scale applied to a neuron's subvalue (1 when untouched).
  float neuron_scale(std::size_t layer, std::size_t neuron) const;
  bool layer_has_neuron_edits(std::size_t layer) const;
};

InterventionPlan zero_head_plan(const HeadId& h);
InterventionPlan mask_plan(const std::vector<NeuronId>& neurons);

// Effective attention weights of one layer after LoRA updates; pointers
// refer either to the base bundle or to owned overrides.
class AttentionWeights {
 public:
  AttentionWeights(const LayerWeights& base, std::size_t layer, const std::vector<LoraAdapter>& adapters);
  const Matrix& wq() const { return wq_override_ ? *wq_override_ : *base_wq_; }
  const Matrix& wv() const { return wv_override_ ? *wv_override_ : *base_wv_; }

 private:
  const Matrix* base_wq_;
  const Matrix* base_wv_;
  std::optional<Matrix> wq_override_;
  std::optional<Matrix> wv_override_;
};

// Bundle copy whose targeted matrices include the adapter update.
ModelBundle apply_lora(const ModelBundle& base, const LoraAdapter& adapter);

nlohmann::json plan_to_json(const InterventionPlan& p);
// LoRA entries in plan files are adapter paths, resolved relative to `base_dir`.
InterventionPlan plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

}  // namespace cnalab
