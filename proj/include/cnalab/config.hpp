#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

namespace cnalab {

enum class NormMode { none, rmsnorm };
enum class Nonlinearity { gelu };
enum class Positional { learned_absolute };

struct ModelConfig {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t d_model = 0;
  std::size_t d_head = 0;
  std::size_t n_ffn = 0;
  std::size_t vocab_size = 0;
  std::size_t max_seq = 0;
  Nonlinearity nonlinearity = Nonlinearity::gelu;
  NormMode norm_mode = NormMode::none;
  Positional positional = Positional::learned_absolute;

  // Throws DataError when the shape invariants do not hold.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

std::string to_string(NormMode m);
NormMode norm_mode_from_string(const std::string& s);

// Inclusive layer range [first, last]. An empty range has first > last.
struct LayerRange {
  std::size_t first = 0;
  std::size_t last = 0;

  bool contains(std::size_t l) const { return l >= first && l <= last; }
  bool empty() const { return first > last; }
  std::size_t count() const { return empty() ? 0 : last - first + 1; }
  bool operator==(const LayerRange&) const = default;

  static LayerRange all(std::size_t n_layers) { return n_layers == 0 ? LayerRange{1, 0} : LayerRange{0, n_layers - 1}; }
};

// Proportional versions of the 32-layer split: shallow FFN [0, half-1],
// attention transform [0, half], deep FFN [half+1, n-1], half = ceil(n/2).
struct DepthRanges {
  LayerRange shallow_ffn;
  LayerRange attention;
  LayerRange deep_ffn;
};
DepthRanges default_depth_ranges(std::size_t n_layers);

// Erf-based GELU, evaluated in double.
double gelu(double x);

}  // namespace cnalab
