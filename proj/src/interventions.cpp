#include "cnalab/interventions.hpp"

#include <charconv>
#include <cmath>

#include "cnalab/container.hpp"
#include "cnalab/errors.hpp"

namespace cnalab {

namespace {

std::pair<std::size_t, std::size_t> parse_pair(const std::string& s, const char* seps, const char* what) {
  const auto pos = s.find_first_of(seps);
  if (pos == std::string::npos || pos == 0 || pos + 1 >= s.size())
    throw std::invalid_argument(std::string("cannot parse ") + what + " '" + s + "'");
  auto num = [&](std::string_view part) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size())
      throw std::invalid_argument(std::string("cannot parse ") + what + " '" + s + "'");
    return v;
  };
  std::string_view view(s);
  return {num(view.substr(0, pos)), num(view.substr(pos + 1))};
}

std::string lora_name(std::size_t layer, const char* mat, const char* part) {
  return "lora." + std::to_string(layer) + "." + mat + "." + part;
}

StoredTensor stored(const Matrix& m) { return {{m.rows(), m.cols()}, {m.flat().begin(), m.flat().end()}}; }

Matrix take(const Container& c, const std::string& name) {
  auto it = c.tensors.find(name);
  if (it == c.tensors.end()) throw DataError("adapter: missing tensor '" + name + "'");
  const auto& t = it->second;
  if (t.shape.size() != 2) throw DataError("adapter: tensor '" + name + "' is not a matrix");
  return Matrix(t.shape[0], t.shape[1], t.data);
}

Matrix with_delta(const Matrix& w, const Matrix& a, const Matrix& b, std::size_t rank, float alpha) {
  const Matrix delta = lora_delta(a, b, rank, alpha);
  Matrix out = w;
  auto dst = out.flat();
  auto src = delta.flat();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return out;
}

}  // namespace

std::string to_string(const HeadId& h) { return std::to_string(h.layer) + "^" + std::to_string(h.head); }
std::string to_string(const NeuronId& n) { return std::to_string(n.layer) + "_" + std::to_string(n.neuron); }

HeadId parse_head(const std::string& s) {
  auto [l, h] = parse_pair(s, "^:", "head id");
  return {l, h};
}

NeuronId parse_neuron(const std::string& s) {
  auto [l, k] = parse_pair(s, "_:", "neuron id");
  return {l, k};
}

void check_head(const ModelConfig& c, const HeadId& h) {
  if (h.layer >= c.n_layers || h.head >= c.n_heads)
    throw std::invalid_argument("head " + to_string(h) + " is outside the model");
}

void check_neuron(const ModelConfig& c, const NeuronId& n) {
  if (n.layer >= c.n_layers || n.neuron >= c.n_ffn)
    throw std::invalid_argument("neuron " + to_string(n) + " is outside the model");
}

std::string to_string(LoraTarget t) {
  switch (t) {
    case LoraTarget::wq: return "Wq";
    case LoraTarget::wv: return "Wv";
    case LoraTarget::both: return "both";
  }
  return "both";
}

LoraTarget lora_target_from_string(const std::string& s) {
  if (s == "Wq") return LoraTarget::wq;
  if (s == "Wv") return LoraTarget::wv;
  if (s == "both" || s == "Wq+Wv") return LoraTarget::both;
  throw DataError("adapter: unknown target '" + s + "'");
}

void LoraAdapter::validate(const ModelConfig& c) const {
  if (layer >= c.n_layers) throw std::invalid_argument("adapter layer outside the model");
  if (rank == 0 || rank > c.d_model) throw std::invalid_argument("adapter rank must be in [1, d_model]");
  auto check = [&](const Matrix& a, const Matrix& b, const char* which) {
    if (a.rows() != rank || a.cols() != c.d_model || b.rows() != c.d_model || b.cols() != rank)
      throw std::invalid_argument(std::string("adapter ") + which + " factors have wrong shape");
  };
  if (targets_q()) check(a_q, b_q, "Wq");
  if (targets_v()) check(a_v, b_v, "Wv");
}

Matrix lora_delta(const Matrix& a, const Matrix& b, std::size_t rank, float alpha) {
  Matrix delta = matmul(b, a);
  const float s = alpha / static_cast<float>(rank);
  for (float& f : delta.flat()) f *= s;
  return delta;
}

LoraAdapter random_adapter(const ModelConfig& c, std::size_t layer, std::size_t rank, std::uint64_t seed,
                           float b_scale, LoraTarget target) {
  Rng rng(seed);
  auto fill = [&](std::size_t r, std::size_t k, float amp) {
    Matrix m(r, k);
    for (float& f : m.flat()) f = rng.uniform(-amp, amp);
    return m;
  };
  LoraAdapter a;
  a.layer = layer;
  a.target = target;
  a.rank = rank;
  a.alpha = 2.0f * static_cast<float>(rank);
  const float amp = 1.0f / std::sqrt(static_cast<float>(c.d_model));
  if (a.targets_q()) {
    a.a_q = fill(rank, c.d_model, amp);
    a.b_q = fill(c.d_model, rank, b_scale);
  }
  if (a.targets_v()) {
    a.a_v = fill(rank, c.d_model, amp);
    a.b_v = fill(c.d_model, rank, b_scale);
  }
  a.validate(c);
  return a;
}

LoraAdapter load_adapter(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (!c.meta.contains("adapter")) throw DataError(path.string() + ": adapter header missing");
  LoraAdapter a;
  try {
    const auto& h = c.meta.at("adapter");
    a.layer = h.at("layer").get<std::size_t>();
    a.rank = h.at("rank").get<std::size_t>();
    a.alpha = h.at("alpha").get<float>();
    a.target = lora_target_from_string(h.at("target").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed adapter header: " + e.what());
  }
  if (a.targets_q()) {
    a.a_q = take(c, lora_name(a.layer, "Wq", "A"));
    a.b_q = take(c, lora_name(a.layer, "Wq", "B"));
  }
  if (a.targets_v()) {
    a.a_v = take(c, lora_name(a.layer, "Wv", "A"));
    a.b_v = take(c, lora_name(a.layer, "Wv", "B"));
  }
  const std::size_t expected = a.target == LoraTarget::both ? 4 : 2;
  if (c.tensors.size() != expected) throw DataError(path.string() + ": adapter has unexpected tensors");
  for (const auto& [name, t] : c.tensors)
    if (!all_finite(t.data)) throw DataError(path.string() + ": tensor '" + name + "' contains non-finite values");
  return a;
}

void save_adapter(const std::filesystem::path& path, const LoraAdapter& a) {
  Container c;
  c.meta["adapter"] = {{"layer", a.layer}, {"rank", a.rank}, {"alpha", a.alpha}, {"target", to_string(a.target)}};
  if (a.targets_q()) {
    c.tensors[lora_name(a.layer, "Wq", "A")] = stored(a.a_q);
    c.tensors[lora_name(a.layer, "Wq", "B")] = stored(a.b_q);
  }
  if (a.targets_v()) {
    c.tensors[lora_name(a.layer, "Wv", "A")] = stored(a.a_v);
    c.tensors[lora_name(a.layer, "Wv", "B")] = stored(a.b_v);
  }
  write_container(path, c);
}

void InterventionPlan::validate(const ModelConfig& c) const {
  for (const auto& h : zero_heads) check_head(c, h);
  for (const auto& [n, s] : neuron_scales) {
    check_neuron(c, n);
    if (!(s >= 0.0f) || !std::isfinite(s)) throw std::invalid_argument("neuron " + to_string(n) + ": scale must be finite and >= 0");
  }
  std::set<NeuronId> seen;
  for (const auto& k : keep_only) {
    if (k.layers.empty() || k.layers.last >= c.n_layers) throw std::invalid_argument("keep_only layer range outside the model");
    for (const auto& n : k.keep) {
      check_neuron(c, n);
      if (!k.layers.contains(n.layer))
        throw std::invalid_argument("keep_only lists neuron " + to_string(n) + " outside its layer range");
      if (neuron_scales.contains(n) || !seen.insert(n).second)
        throw std::invalid_argument("neuron " + to_string(n) + " appears more than once in the plan");
    }
  }
  for (std::size_t i = 0; i < keep_only.size(); ++i)
    for (std::size_t j = i + 1; j < keep_only.size(); ++j) {
      const auto& a = keep_only[i].layers;
      const auto& b = keep_only[j].layers;
      if (a.first <= b.last && b.first <= a.last) throw std::invalid_argument("keep_only layer ranges overlap");
    }
  for (const auto& a : lora) a.validate(c);
}

InterventionPlan InterventionPlan::merged(const InterventionPlan& other) const {
  InterventionPlan out = *this;
  out.zero_heads.insert(other.zero_heads.begin(), other.zero_heads.end());
  for (const auto& [n, s] : other.neuron_scales)
    if (!out.neuron_scales.emplace(n, s).second)
      throw std::invalid_argument("plans both scale neuron " + to_string(n));
  out.keep_only.insert(out.keep_only.end(), other.keep_only.begin(), other.keep_only.end());
  out.lora.insert(out.lora.end(), other.lora.begin(), other.lora.end());
  return out;
}

float InterventionPlan::neuron_scale(std::size_t layer, std::size_t neuron) const {
  const NeuronId id{layer, neuron};
  for (const auto& k : keep_only)
    if (k.layers.contains(layer) && !k.keep.contains(id)) return 0.0f;
  auto it = neuron_scales.find(id);
  return it == neuron_scales.end() ? 1.0f : it->second;
}

bool InterventionPlan::layer_has_neuron_edits(std::size_t layer) const {
  for (const auto& k : keep_only)
    if (k.layers.contains(layer)) return true;
  auto it = neuron_scales.lower_bound(NeuronId{layer, 0});
  return it != neuron_scales.end() && it->first.layer == layer;
}

InterventionPlan zero_head_plan(const HeadId& h) {
  InterventionPlan p;
  p.zero_heads.insert(h);
  return p;
}

InterventionPlan mask_plan(const std::vector<NeuronId>& neurons) {
  InterventionPlan p;
  for (const auto& n : neurons) p.neuron_scales[n] = 0.0f;
  return p;
}

AttentionWeights::AttentionWeights(const LayerWeights& base, std::size_t layer, const std::vector<LoraAdapter>& adapters)
    : base_wq_(&base.wq), base_wv_(&base.wv) {
  for (const auto& a : adapters) {
    if (a.layer != layer) continue;
    if (a.targets_q()) wq_override_ = with_delta(wq(), a.a_q, a.b_q, a.rank, a.alpha);
    if (a.targets_v()) wv_override_ = with_delta(wv(), a.a_v, a.b_v, a.rank, a.alpha);
  }
}

ModelBundle apply_lora(const ModelBundle& base, const LoraAdapter& adapter) {
  adapter.validate(base.config);
  ModelBundle out = base;
  auto& w = out.layers[adapter.layer];
  if (adapter.targets_q()) w.wq = with_delta(w.wq, adapter.a_q, adapter.b_q, adapter.rank, adapter.alpha);
  if (adapter.targets_v()) w.wv = with_delta(w.wv, adapter.a_v, adapter.b_v, adapter.rank, adapter.alpha);
  return out;
}

nlohmann::json plan_to_json(const InterventionPlan& p) {
  nlohmann::json j = nlohmann::json::object();
  j["zero_heads"] = nlohmann::json::array();
  for (const auto& h : p.zero_heads) j["zero_heads"].push_back(to_string(h));
  j["neuron_scales"] = nlohmann::json::array();
  for (const auto& [n, s] : p.neuron_scales) j["neuron_scales"].push_back({{"neuron", to_string(n)}, {"scale", s}});
  j["keep_only"] = nlohmann::json::array();
  for (const auto& k : p.keep_only) {
    nlohmann::json keep = nlohmann::json::array();
    for (const auto& n : k.keep) keep.push_back(to_string(n));
    j["keep_only"].push_back({{"layers", {k.layers.first, k.layers.last}}, {"keep", keep}});
  }
  j["lora"] = nlohmann::json::array();
  for (const auto& a : p.lora)
    j["lora"].push_back({{"layer", a.layer}, {"target", to_string(a.target)}, {"rank", a.rank}, {"alpha", a.alpha}});
  return j;
}

InterventionPlan plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  InterventionPlan p;
  try {
    for (const auto& h : j.value("zero_heads", nlohmann::json::array())) p.zero_heads.insert(parse_head(h.get<std::string>()));
    for (const auto& e : j.value("neuron_scales", nlohmann::json::array())) {
      const auto id = parse_neuron(e.at("neuron").get<std::string>());
      if (!p.neuron_scales.emplace(id, e.at("scale").get<float>()).second)
        throw ConfigError("plan: neuron " + to_string(id) + " listed twice");
    }
    for (const auto& k : j.value("keep_only", nlohmann::json::array())) {
      KeepOnly ko;
      const auto layers = k.at("layers").get<std::vector<std::size_t>>();
      if (layers.size() != 2) throw ConfigError("plan: keep_only.layers must be [first, last]");
      ko.layers = {layers[0], layers[1]};
      for (const auto& n : k.at("keep")) ko.keep.insert(parse_neuron(n.get<std::string>()));
      p.keep_only.push_back(std::move(ko));
    }
    for (const auto& a : j.value("lora", nlohmann::json::array())) {
      std::filesystem::path path = a.get<std::string>();
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      p.lora.push_back(load_adapter(path));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("plan: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("plan: ") + e.what());
  }
  return p;
}

}  // namespace cnalab
