#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cnalab/config.hpp"
#include "cnalab/container.hpp"
#include "cnalab/tensor.hpp"
#include "cnalab/tokenizer.hpp"

namespace cnalab {

// Weights of one transformer layer. Row-vector convention: q = x · wq.
// Head h owns columns [h*d_head, (h+1)*d_head) of wq/wk/wv and the same rows
// of wo. fc1 is d×N (column k is the FFN key), fc2 is N×d (row k is the value).
struct LayerWeights {
  Matrix wq, wk, wv, wo;
  Matrix fc1, fc2;
  // RMSNorm gains; only read when norm_mode is rmsnorm. Default to ones.
  Vec attn_norm, ffn_norm;
};

struct ModelBundle {
  ModelConfig config;
  Tokenizer tokenizer;
  Matrix embed;    // B×d
  Matrix unembed;  // B×d
  Matrix pos;      // T_max×d
  std::vector<LayerWeights> layers;
  Vec final_norm;  // d, rmsnorm only

  // Throws DataError if any shape or finiteness invariant fails.
  void validate() const;
};

ModelBundle bundle_from_container(const Container& c);
Container bundle_to_container(const ModelBundle& b);

ModelBundle load_bundle(const std::filesystem::path& path);
void save_bundle(const std::filesystem::path& path, const ModelBundle& b);

// Uniform-random weights from a portable generator (identical bytes on every
// platform for a given seed).
struct RandomInit {
  float embed_scale = 1.0f;
  float attn_scale = 1.0f;  // multiplies 1/sqrt(d)
  float ffn_scale = 1.0f;   // multiplies 1/sqrt(fan_in)
};
ModelBundle random_bundle(const ModelConfig& config, std::vector<std::string> vocab, std::uint64_t seed,
                          const RandomInit& init = {});

// Seeded randomness. The standard engine's output sequence is fully
// specified; the conversions below are done by hand because the standard
// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next();
  double uniform();                      // [0, 1)
  float uniform(float lo, float hi);
  std::size_t below(std::size_t n);      // [0, n)

 private:
  std::mt19937_64 engine_;
};

}  // namespace cnalab
