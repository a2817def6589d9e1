#pragma once

#include <cstdint>
#include <vector>

#include "cnalab/model.hpp"

namespace cnalab::testing {

inline ModelConfig small_config(std::size_t layers, std::size_t heads, std::size_t d_head = 8, std::size_t ffn = 32,
                                NormMode norm = NormMode::none) {
  ModelConfig c;
  c.n_layers = layers;
  c.n_heads = heads;
  c.d_head = d_head;
  c.d_model = heads * d_head;
  c.n_ffn = ffn;
  c.max_seq = 24;
  c.norm_mode = norm;
  c.vocab_size = default_vocabulary().size();
  return c;
}

inline ModelBundle small_bundle(std::size_t layers, std::size_t heads, std::uint64_t seed, std::size_t d_head = 8,
                                std::size_t ffn = 32, NormMode norm = NormMode::none) {
  RandomInit init;
  init.embed_scale = 0.5f;
  return random_bundle(small_config(layers, heads, d_head, ffn, norm), default_vocabulary(), seed, init);
}

inline std::vector<TokenId> random_tokens(Rng& rng, std::size_t vocab, std::size_t max_len) {
  const std::size_t len = 1 + rng.below(max_len);
  std::vector<TokenId> t(len);
  for (auto& id : t) id = static_cast<TokenId>(rng.below(vocab));
  return t;
}

}  // namespace cnalab::testing
