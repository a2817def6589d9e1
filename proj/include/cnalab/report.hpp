#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cnalab/applications.hpp"
#include "cnalab/experiments.hpp"

namespace cnalab {

// Plain aligned text table; the first column is left-aligned.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
  void left_align(std::size_t column) { left_.push_back(column); }
  std::string render() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> left_{0};
};

std::string fixed(double v, int decimals = 2);
std::string percent(double fraction);  // 0.748 -> "74.8"
std::string token_list(const std::vector<TokenScore>& tokens);

nlohmann::json to_json(const EvalResult& r);
nlohmann::json to_json(const SweepResult& r);
std::string sweep_table(const SweepResult& r, std::size_t top);
std::string eval_table(const EvalResult& r);

// Neuron reports for the top-k of a ranking, each with the projection of its
// fc2 row onto the vocabulary.
nlohmann::json cna_report(const ModelBundle& bundle, const CnaResult& r, std::size_t k, std::size_t top_tokens);
std::string cna_table(const nlohmann::json& report, const std::string& ref_tag, const std::string& var_tag);

nlohmann::json to_json(const std::vector<TokenScore>& tokens);
nlohmann::json to_json(const PeDag& dag);
std::string pe_dag_text(const PeDag& dag);

nlohmann::json to_json(const MaskKeepReport& r);
std::string mask_keep_table(const MaskKeepReport& r);
nlohmann::json to_json(const std::vector<LowestRow>& rows);
std::string lowest_table(const std::vector<LowestRow>& rows);
nlohmann::json to_json(const HiddenReport& r);
std::string hidden_table(const HiddenReport& r);
nlohmann::json to_json(const LoraCoefReport& r);
std::string lora_coef_table(const LoraCoefReport& r);

nlohmann::json to_json(const BiasGaps& g);
nlohmann::json to_json(const BiasEditReport& r, const ModelBundle& bundle, std::size_t top_tokens);
std::string bias_table(const BiasEditReport& r, const ModelBundle& bundle, std::size_t top_tokens);

}  // namespace cnalab
