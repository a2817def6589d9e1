#pragma once

#include <span>
#include <vector>

#include "cnalab/interventions.hpp"
#include "cnalab/model.hpp"

namespace cnalab {

// Activations of one layer over all positions (rows are positions).
struct LayerTrace {
  Matrix input;               // x^{l-1}
  std::vector<Matrix> heads;  // ATTN_h^l, one T×d matrix per head
  Matrix attn;                // A^l
  Matrix residual;            // x^{l-1} + A^l
  Matrix coefficients;        // m^l, T×N, before any plan scaling
  Vec scales;                 // per-neuron subvalue scale applied by the plan (N)
  Matrix ffn;                 // F^l
  Matrix output;              // x^l
};

struct ForwardTrace {
  std::vector<TokenId> tokens;
  std::vector<LayerTrace> layers;
  std::vector<double> logits;  // last position
  std::vector<double> probs;   // Y

  std::size_t length() const { return tokens.size(); }
  TokenId argmax() const;
  std::span<const float> final_hidden(std::size_t position) const { return layers.back().output.row(position); }
};

// Runs the model with every activation captured. Deterministic and reentrant.
// Throws std::invalid_argument for bad token ids, overlong input or an
// invalid plan.
ForwardTrace forward(const ModelBundle& bundle, std::span<const TokenId> tokens, const InterventionPlan& plan = {});

// Logits of E_u · hidden', with hidden' = final-norm(hidden) under rmsnorm.
std::vector<double> vocab_logits(const ModelBundle& bundle, std::span<const float> hidden);
std::vector<double> predict_distribution(const ModelBundle& bundle, std::span<const float> hidden);
std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);
std::size_t argmax(std::span<const double> v);  // lowest index on ties

struct NeuronTerm {
  std::size_t neuron = 0;
  float coefficient = 0.0f;  // m_k
  float scale = 1.0f;        // plan scale applied to the subvalue
  Vec subvalue;              // scale · m_k · fc2_k
};

std::vector<NeuronTerm> ffn_decompose(const ModelBundle& bundle, const ForwardTrace& trace, std::size_t layer,
                                      std::size_t position);

// ||a - b||_2 / ||b||_2, zero when both vanish.
double relative_error(std::span<const float> a, std::span<const float> b);

struct TraceCheck {
  bool residual_exact = true;
  double max_head_sum_error = 0.0;
  double max_subvalue_sum_error = 0.0;
  double prob_sum_error = 0.0;

  bool ok(double rel_tol = 1e-5, double prob_tol = 1e-6) const {
    return residual_exact && max_head_sum_error <= rel_tol && max_subvalue_sum_error <= rel_tol &&
           prob_sum_error <= prob_tol;
  }
};

// Recomputes the decomposition identities from the stored activations.
TraceCheck check_trace(const ModelBundle& bundle, const ForwardTrace& trace);

}  // namespace cnalab
