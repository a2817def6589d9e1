#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cnalab {

using TokenId = std::uint32_t;

// Closed word-level vocabulary. Entries may carry a leading space
// (" eight"), so detokenization is plain concatenation and tokenization is
// greedy longest-match over the table.
class Tokenizer {
 public:
  Tokenizer() = default;
  explicit Tokenizer(std::vector<std::string> vocab);

  std::size_t size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }

  // Throws DataError when some span of the text matches no entry.
  std::vector<TokenId> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> ids) const;

  std::optional<TokenId> find(std::string_view token) const;
  TokenId id(std::string_view token) const;  // throws DataError if absent
  const std::string& token(TokenId id) const;

  bool can_tokenize(std::string_view text) const;

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t max_len_ = 0;
};

// Vocabulary shipped with the fixture: digits, number words, operator
// symbols and words, and every word of the arithmetic and profession prompt
// templates, each in bare and space-prefixed form.
std::vector<std::string> default_vocabulary();

// Spelled-out form of 0..99 ("seven", "forty-two").
std::string number_word(int n);

}  // namespace cnalab
