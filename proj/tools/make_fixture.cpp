// Writes the seeded random-weight fixture: a base model and one LoRA adapter
// per layer.
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "cnalab/interventions.hpp"
#include "cnalab/model.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the random-weight fixture", "make_fixture"};
  std::string out = "data/fixture";
  std::uint64_t seed = 17;
  std::size_t rank = 4;
  app.add_option("--out", out);
  app.add_option("--seed", seed);
  app.add_option("--rank", rank);
  CLI11_PARSE(app, argc, argv);

  cnalab::ModelConfig cfg;
  cfg.n_layers = 8;
  cfg.n_heads = 4;
  cfg.d_model = 128;
  cfg.d_head = 32;
  cfg.n_ffn = 512;
  cfg.max_seq = 32;
  // Pre-norm keeps an untrained stack's logits in a usable range.
  cfg.norm_mode = cnalab::NormMode::rmsnorm;
  const auto vocab = cnalab::default_vocabulary();
  cfg.vocab_size = vocab.size();

  try {
    std::filesystem::create_directories(out);
    cnalab::RandomInit init;
    init.embed_scale = 0.3f;
    const auto base = cnalab::random_bundle(cfg, vocab, seed, init);
    cnalab::save_bundle(std::filesystem::path(out) / "base.cnaw", base);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      const auto a = cnalab::random_adapter(cfg, l, rank, seed * 100 + l + 1, 0.5f);
      cnalab::save_adapter(std::filesystem::path(out) / ("lora_layer" + std::to_string(l) + ".cnaw"), a);
    }
  } catch (const std::exception& e) {
    std::cerr << "make_fixture: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
