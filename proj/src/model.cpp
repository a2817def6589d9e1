#include "cnalab/model.hpp"

#include <cmath>
#include <random>
#include <set>

#include "cnalab/errors.hpp"

namespace cnalab {

namespace {

std::string layer_name(std::size_t l, const std::string& suffix) { return "layer." + std::to_string(l) + "." + suffix; }

Matrix take_matrix(const Container& c, const std::string& name, std::size_t rows, std::size_t cols,
                   std::set<std::string>& used) {
  auto it = c.tensors.find(name);
  if (it == c.tensors.end()) throw DataError("bundle: missing tensor '" + name + "' (shape/name mismatch)");
  const auto& t = it->second;
  if (t.shape != std::vector<std::size_t>{rows, cols})
    throw DataError("bundle: tensor '" + name + "' has wrong shape (shape/name mismatch)");
  used.insert(name);
  return Matrix(rows, cols, t.data);
}

Vec take_gain(const Container& c, const std::string& name, std::size_t d, std::set<std::string>& used) {
  auto it = c.tensors.find(name);
  if (it == c.tensors.end()) return Vec(d, 1.0f);
  if (it->second.shape != std::vector<std::size_t>{d})
    throw DataError("bundle: tensor '" + name + "' has wrong shape (shape/name mismatch)");
  used.insert(name);
  return it->second.data;
}

void check_finite(const std::string& name, std::span<const float> v) {
  if (!all_finite(v)) throw DataError("bundle: tensor '" + name + "' contains non-finite values");
}

void check_shape(const std::string& name, const Matrix& m, std::size_t rows, std::size_t cols) {
  if (m.rows() != rows || m.cols() != cols) throw DataError("bundle: tensor '" + name + "' has wrong shape");
}

StoredTensor stored(const Matrix& m) { return {{m.rows(), m.cols()}, {m.flat().begin(), m.flat().end()}}; }

bool all_ones(const Vec& v) {
  for (float f : v)
    if (f != 1.0f) return false;
  return true;
}

}  // namespace

void ModelBundle::validate() const {
  config.validate();
  const auto& c = config;
  if (tokenizer.size() != c.vocab_size) throw DataError("bundle: vocab_size does not match vocabulary length");
  check_shape("embed.E", embed, c.vocab_size, c.d_model);
  check_shape("unembed.Eu", unembed, c.vocab_size, c.d_model);
  check_shape("pos.P", pos, c.max_seq, c.d_model);
  check_finite("embed.E", embed.flat());
  check_finite("unembed.Eu", unembed.flat());
  check_finite("pos.P", pos.flat());
  if (layers.size() != c.n_layers) throw DataError("bundle: layer count does not match n_layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l];
    const std::pair<const char*, const Matrix*> square[] = {{"attn.Wq", &w.wq}, {"attn.Wk", &w.wk},
                                                             {"attn.Wv", &w.wv}, {"attn.Wo", &w.wo}};
    for (const auto& [n, m] : square) {
      check_shape(layer_name(l, n), *m, c.d_model, c.d_model);
      check_finite(layer_name(l, n), m->flat());
    }
    check_shape(layer_name(l, "ffn.fc1"), w.fc1, c.d_model, c.n_ffn);
    check_shape(layer_name(l, "ffn.fc2"), w.fc2, c.n_ffn, c.d_model);
    check_finite(layer_name(l, "ffn.fc1"), w.fc1.flat());
    check_finite(layer_name(l, "ffn.fc2"), w.fc2.flat());
    if (w.attn_norm.size() != c.d_model || w.ffn_norm.size() != c.d_model)
      throw DataError("bundle: norm gain length mismatch in layer " + std::to_string(l));
    check_finite(layer_name(l, "norm"), w.attn_norm);
    check_finite(layer_name(l, "norm"), w.ffn_norm);
  }
  if (final_norm.size() != c.d_model) throw DataError("bundle: final norm gain length mismatch");
  check_finite("norm.final", final_norm);
}

ModelBundle bundle_from_container(const Container& c) {
  if (!c.meta.contains("config")) throw DataError("bundle: header has no config object");
  if (!c.meta.contains("vocab") || !c.meta.at("vocab").is_array()) throw DataError("bundle: header has no vocab array");

  ModelBundle b;
  b.config = config_from_json(c.meta.at("config"));
  try {
    b.tokenizer = Tokenizer(c.meta.at("vocab").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bundle: malformed vocab: ") + e.what());
  }
  const auto& cfg = b.config;
  if (b.tokenizer.size() != cfg.vocab_size) throw DataError("bundle: vocab_size does not match vocabulary length");

  std::set<std::string> used;
  b.embed = take_matrix(c, "embed.E", cfg.vocab_size, cfg.d_model, used);
  b.unembed = take_matrix(c, "unembed.Eu", cfg.vocab_size, cfg.d_model, used);
  b.pos = take_matrix(c, "pos.P", cfg.max_seq, cfg.d_model, used);
  b.layers.resize(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    auto& w = b.layers[l];
    w.wq = take_matrix(c, layer_name(l, "attn.Wq"), cfg.d_model, cfg.d_model, used);
    w.wk = take_matrix(c, layer_name(l, "attn.Wk"), cfg.d_model, cfg.d_model, used);
    w.wv = take_matrix(c, layer_name(l, "attn.Wv"), cfg.d_model, cfg.d_model, used);
    w.wo = take_matrix(c, layer_name(l, "attn.Wo"), cfg.d_model, cfg.d_model, used);
    w.fc1 = take_matrix(c, layer_name(l, "ffn.fc1"), cfg.d_model, cfg.n_ffn, used);
    w.fc2 = take_matrix(c, layer_name(l, "ffn.fc2"), cfg.n_ffn, cfg.d_model, used);
    w.attn_norm = take_gain(c, layer_name(l, "norm.attn"), cfg.d_model, used);
    w.ffn_norm = take_gain(c, layer_name(l, "norm.ffn"), cfg.d_model, used);
  }
  b.final_norm = take_gain(c, "norm.final", cfg.d_model, used);
  for (const auto& [name, t] : c.tensors)
    if (!used.contains(name)) throw DataError("bundle: unexpected tensor '" + name + "' (shape/name mismatch)");

  b.validate();
  return b;
}

Container bundle_to_container(const ModelBundle& b) {
  Container c;
  c.meta["config"] = to_json(b.config);
  c.meta["vocab"] = b.tokenizer.vocab();
  c.tensors["embed.E"] = stored(b.embed);
  c.tensors["unembed.Eu"] = stored(b.unembed);
  c.tensors["pos.P"] = stored(b.pos);
  for (std::size_t l = 0; l < b.layers.size(); ++l) {
    const auto& w = b.layers[l];
    c.tensors[layer_name(l, "attn.Wq")] = stored(w.wq);
    c.tensors[layer_name(l, "attn.Wk")] = stored(w.wk);
    c.tensors[layer_name(l, "attn.Wv")] = stored(w.wv);
    c.tensors[layer_name(l, "attn.Wo")] = stored(w.wo);
    c.tensors[layer_name(l, "ffn.fc1")] = stored(w.fc1);
    c.tensors[layer_name(l, "ffn.fc2")] = stored(w.fc2);
    if (!all_ones(w.attn_norm)) c.tensors[layer_name(l, "norm.attn")] = {{w.attn_norm.size()}, w.attn_norm};
    if (!all_ones(w.ffn_norm)) c.tensors[layer_name(l, "norm.ffn")] = {{w.ffn_norm.size()}, w.ffn_norm};
  }
  if (!all_ones(b.final_norm)) c.tensors["norm.final"] = {{b.final_norm.size()}, b.final_norm};
  return c;
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  try {
    return bundle_from_container(read_container(path));
  } catch (const DataError& e) {
    const std::string what = e.what();
    if (what.rfind(path.string(), 0) == 0) throw;
    throw DataError(path.string() + ": " + what);
  }
}

void save_bundle(const std::filesystem::path& path, const ModelBundle& b) {
  b.validate();
  write_container(path, bundle_to_container(b));
}

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

float Rng::uniform(float lo, float hi) { return lo + static_cast<float>(uniform() * (static_cast<double>(hi) - lo)); }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: empty range");
  return static_cast<std::size_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
}

ModelBundle random_bundle(const ModelConfig& config, std::vector<std::string> vocab, std::uint64_t seed,
                          const RandomInit& init) {
  ModelConfig cfg = config;
  cfg.vocab_size = vocab.size();
  cfg.validate();
  Rng rng(seed);
  auto fill = [&](std::size_t rows, std::size_t cols, float a) {
    Matrix m(rows, cols);
    for (float& f : m.flat()) f = rng.uniform(-a, a);
    return m;
  };
  const float d = static_cast<float>(cfg.d_model);
  const float attn_a = init.attn_scale * std::sqrt(3.0f / d);
  ModelBundle b;
  b.config = cfg;
  b.tokenizer = Tokenizer(std::move(vocab));
  b.embed = fill(cfg.vocab_size, cfg.d_model, init.embed_scale);
  b.unembed = fill(cfg.vocab_size, cfg.d_model, init.embed_scale);
  b.pos = fill(cfg.max_seq, cfg.d_model, 0.5f * init.embed_scale);
  b.layers.resize(cfg.n_layers);
  for (auto& w : b.layers) {
    w.wq = fill(cfg.d_model, cfg.d_model, attn_a);
    w.wk = fill(cfg.d_model, cfg.d_model, attn_a);
    w.wv = fill(cfg.d_model, cfg.d_model, attn_a);
    w.wo = fill(cfg.d_model, cfg.d_model, attn_a);
    w.fc1 = fill(cfg.d_model, cfg.n_ffn, init.ffn_scale * std::sqrt(3.0f / d));
    w.fc2 = fill(cfg.n_ffn, cfg.d_model, init.ffn_scale * std::sqrt(3.0f / static_cast<float>(cfg.n_ffn)));
    w.attn_norm = Vec(cfg.d_model, 1.0f);
    w.ffn_norm = Vec(cfg.d_model, 1.0f);
  }
  b.final_norm = Vec(cfg.d_model, 1.0f);
  return b;
}

}  // namespace cnalab
