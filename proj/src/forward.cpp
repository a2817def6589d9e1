#include "cnalab/forward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cnalab {

namespace {

constexpr double kNormEps = 1e-5;

Vec rms_normalized(std::span<const float> x, std::span<const float> gain) {
  double ss = 0.0;
  for (float v : x) ss += static_cast<double>(v) * v;
  const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + kNormEps);
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(static_cast<double>(x[i]) * inv * gain[i]);
  return out;
}

// Rows of `x` normalized (or copied when norm is off).
Matrix layer_input(const Matrix& x, NormMode mode, std::span<const float> gain) {
  if (mode == NormMode::none) return x;
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    Vec r = rms_normalized(x.row(i), gain);
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

void attention(const ModelBundle& bundle, std::size_t l, const InterventionPlan& plan, LayerTrace& lt) {
  const auto& cfg = bundle.config;
  const auto& w = bundle.layers[l];
  const std::size_t T = lt.input.rows(), d = cfg.d_model, dh = cfg.d_head;
  const AttentionWeights eff(w, l, plan.lora);

  const Matrix h = layer_input(lt.input, cfg.norm_mode, w.attn_norm);
  const Matrix q = matmul(h, eff.wq());
  const Matrix k = matmul(h, w.wk);
  const Matrix v = matmul(h, eff.wv());
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  lt.heads.assign(cfg.n_heads, Matrix(T, d));
  std::vector<double> scores(T);
  Vec z(dh);
  for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
    if (plan.zero_heads.contains(HeadId{l, hd})) continue;
    const std::size_t c0 = hd * dh;
    for (std::size_t i = 0; i < T; ++i) {
      const auto qi = q.row(i).subspan(c0, dh);
      double mx = -INFINITY;
      for (std::size_t j = 0; j <= i; ++j) {
        scores[j] = dot(qi, k.row(j).subspan(c0, dh)) * inv_sqrt;
        mx = std::max(mx, scores[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        denom += scores[j];
      }
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= i; ++j) acc += scores[j] / denom * v(j, c0 + c);
        z[c] = static_cast<float>(acc);
      }
      Vec contrib = vec_mat_rows(z, w.wo, c0, dh);
      std::copy(contrib.begin(), contrib.end(), lt.heads[hd].row(i).begin());
    }
  }

  lt.attn = Matrix(T, d);
  lt.residual = Matrix(T, d);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) acc += lt.heads[hd](i, c);
      lt.attn(i, c) = static_cast<float>(acc);
      lt.residual(i, c) = lt.input(i, c) + lt.attn(i, c);
    }
  }
}

void feed_forward(const ModelBundle& bundle, std::size_t l, const InterventionPlan& plan, LayerTrace& lt) {
  const auto& cfg = bundle.config;
  const auto& w = bundle.layers[l];
  const std::size_t T = lt.input.rows(), N = cfg.n_ffn;

  lt.scales.assign(N, 1.0f);
  if (plan.layer_has_neuron_edits(l))
    for (std::size_t kk = 0; kk < N; ++kk) lt.scales[kk] = plan.neuron_scale(l, kk);

  const Matrix u = layer_input(lt.residual, cfg.norm_mode, w.ffn_norm);
  lt.coefficients = Matrix(T, N);
  lt.ffn = Matrix(T, cfg.d_model);
  lt.output = Matrix(T, cfg.d_model);
  Vec effective(N);
  for (std::size_t i = 0; i < T; ++i) {
    const Vec pre = vec_mat(u.row(i), w.fc1);
    for (std::size_t kk = 0; kk < N; ++kk) {
      const float m = static_cast<float>(gelu(pre[kk]));
      lt.coefficients(i, kk) = m;
      effective[kk] = lt.scales[kk] == 0.0f ? 0.0f : lt.scales[kk] * m;
    }
    const Vec f = vec_mat(effective, w.fc2);
    std::copy(f.begin(), f.end(), lt.ffn.row(i).begin());
    for (std::size_t c = 0; c < cfg.d_model; ++c) lt.output(i, c) = lt.residual(i, c) + lt.ffn(i, c);
  }
}

}  // namespace

TokenId ForwardTrace::argmax() const { return static_cast<TokenId>(cnalab::argmax(probs)); }

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += (out[i] = std::exp(logits[i] - mx));
  for (double& p : out) p /= sum;
  return out;
}

std::vector<double> vocab_logits(const ModelBundle& bundle, std::span<const float> hidden) {
  if (hidden.size() != bundle.config.d_model) throw std::invalid_argument("hidden vector has wrong dimension");
  Vec normed;
  if (bundle.config.norm_mode == NormMode::rmsnorm) {
    normed = rms_normalized(hidden, bundle.final_norm);
    hidden = normed;
  }
  std::vector<double> logits(bundle.unembed.rows());
  for (std::size_t t = 0; t < logits.size(); ++t) logits[t] = dot(bundle.unembed.row(t), hidden);
  return logits;
}

std::vector<double> predict_distribution(const ModelBundle& bundle, std::span<const float> hidden) {
  return softmax(vocab_logits(bundle, hidden));
}

ForwardTrace forward(const ModelBundle& bundle, std::span<const TokenId> tokens, const InterventionPlan& plan) {
  const auto& cfg = bundle.config;
  if (tokens.empty()) throw std::invalid_argument("forward: empty token sequence");
  if (tokens.size() > cfg.max_seq) throw std::invalid_argument("forward: sequence longer than max_seq");
  for (TokenId t : tokens)
    if (t >= cfg.vocab_size) throw std::invalid_argument("forward: token id " + std::to_string(t) + " out of range");
  plan.validate(cfg);

  ForwardTrace trace;
  trace.tokens.assign(tokens.begin(), tokens.end());
  trace.layers.resize(cfg.n_layers);
  const std::size_t T = tokens.size();

  Matrix x(T, cfg.d_model);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t c = 0; c < cfg.d_model; ++c) x(i, c) = bundle.embed(tokens[i], c) + bundle.pos(i, c);

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    auto& lt = trace.layers[l];
    lt.input = l == 0 ? x : trace.layers[l - 1].output;
    attention(bundle, l, plan, lt);
    feed_forward(bundle, l, plan, lt);
  }
  trace.logits = vocab_logits(bundle, trace.final_hidden(T - 1));
  trace.probs = softmax(trace.logits);
  return trace;
}

std::vector<NeuronTerm> ffn_decompose(const ModelBundle& bundle, const ForwardTrace& trace, std::size_t layer,
                                      std::size_t position) {
  if (layer >= trace.layers.size()) throw std::out_of_range("ffn_decompose: layer out of range");
  if (position >= trace.length()) throw std::out_of_range("ffn_decompose: position out of range");
  const auto& lt = trace.layers[layer];
  const auto& fc2 = bundle.layers[layer].fc2;
  std::vector<NeuronTerm> out(bundle.config.n_ffn);
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto& term = out[k];
    term.neuron = k;
    term.coefficient = lt.coefficients(position, k);
    term.scale = lt.scales[k];
    const float eff = term.scale == 0.0f ? 0.0f : term.scale * term.coefficient;
    term.subvalue = scaled(fc2.row(k), eff);
  }
  return out;
}

double relative_error(std::span<const float> a, std::span<const float> b) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = static_cast<double>(a[i]) - b[i];
    diff += e * e;
    ref += static_cast<double>(b[i]) * b[i];
  }
  if (diff == 0.0) return 0.0;
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-30);
}

TraceCheck check_trace(const ModelBundle& bundle, const ForwardTrace& trace) {
  TraceCheck r;
  const std::size_t d = bundle.config.d_model;
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    const auto& lt = trace.layers[l];
    for (std::size_t i = 0; i < trace.length(); ++i) {
      for (std::size_t c = 0; c < d; ++c)
        if ((lt.input(i, c) + lt.attn(i, c)) + lt.ffn(i, c) != lt.output(i, c)) r.residual_exact = false;

      std::vector<double> head_sum(d, 0.0);
      for (const auto& h : lt.heads)
        for (std::size_t c = 0; c < d; ++c) head_sum[c] += h(i, c);
      Vec hs(d);
      for (std::size_t c = 0; c < d; ++c) hs[c] = static_cast<float>(head_sum[c]);
      r.max_head_sum_error = std::max(r.max_head_sum_error, relative_error(hs, lt.attn.row(i)));

      std::vector<double> sub_sum(d, 0.0);
      for (const auto& term : ffn_decompose(bundle, trace, l, i))
        for (std::size_t c = 0; c < d; ++c) sub_sum[c] += term.subvalue[c];
      Vec ss(d);
      for (std::size_t c = 0; c < d; ++c) ss[c] = static_cast<float>(sub_sum[c]);
      r.max_subvalue_sum_error = std::max(r.max_subvalue_sum_error, relative_error(ss, lt.ffn.row(i)));
    }
  }
  double total = 0.0;
  for (double p : trace.probs) total += p;
  r.prob_sum_error = std::abs(total - 1.0);
  return r;
}

}  // namespace cnalab
