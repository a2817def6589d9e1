#include "cnalab/config.hpp"

#include <cmath>

#include "cnalab/errors.hpp"

namespace cnalab {

void ModelConfig::validate() const {
  if (n_layers == 0 || n_heads == 0 || d_model == 0 || n_ffn == 0 || vocab_size == 0 || max_seq == 0)
    throw DataError("config: all dimensions must be positive");
  if (d_head * n_heads != d_model) throw DataError("config: d_model must equal n_heads * d_head");
}

std::string to_string(NormMode m) { return m == NormMode::none ? "none" : "rmsnorm"; }

NormMode norm_mode_from_string(const std::string& s) {
  if (s == "none") return NormMode::none;
  if (s == "rmsnorm") return NormMode::rmsnorm;
  throw DataError("config: unknown norm_mode '" + s + "'");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
      {"d_model", c.d_model},       {"d_head", c.d_head},
      {"n_ffn", c.n_ffn},           {"vocab_size", c.vocab_size},
      {"max_seq", c.max_seq},       {"nonlinearity", "gelu"},
      {"norm_mode", to_string(c.norm_mode)}, {"positional", "learned-absolute"},
  };
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.d_head = j.contains("d_head") ? j.at("d_head").get<std::size_t>() : (c.n_heads ? c.d_model / c.n_heads : 0);
    c.n_ffn = j.at("n_ffn").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_seq = j.at("max_seq").get<std::size_t>();
    if (j.contains("nonlinearity") && j.at("nonlinearity").get<std::string>() != "gelu")
      throw DataError("config: only gelu nonlinearity is supported");
    if (j.contains("positional") && j.at("positional").get<std::string>() != "learned-absolute")
      throw DataError("config: only learned-absolute positions are supported");
    c.norm_mode = norm_mode_from_string(j.value("norm_mode", std::string("none")));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

DepthRanges default_depth_ranges(std::size_t n_layers) {
  if (n_layers == 0) return {{1, 0}, {1, 0}, {1, 0}};
  const std::size_t last = n_layers - 1;
  const std::size_t half = (n_layers + 1) / 2;
  DepthRanges r;
  r.shallow_ffn = half == 0 ? LayerRange{1, 0} : LayerRange{0, std::min(half - 1, last)};
  r.attention = {0, std::min(half, last)};
  r.deep_ffn = half + 1 <= last ? LayerRange{half + 1, last} : LayerRange{last, last};
  return r;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace cnalab
