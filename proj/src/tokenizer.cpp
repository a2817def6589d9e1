#include "cnalab/tokenizer.hpp"

#include <array>
#include <unordered_set>

#include "cnalab/errors.hpp"

namespace cnalab {

Tokenizer::Tokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    const auto& t = vocab_[i];
    if (t.empty()) throw DataError("tokenizer: empty vocabulary entry at " + std::to_string(i));
    if (!index_.emplace(t, static_cast<TokenId>(i)).second)
      throw DataError("tokenizer: duplicate vocabulary entry '" + t + "'");
    max_len_ = std::max(max_len_, t.size());
  }
}

std::vector<TokenId> Tokenizer::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t len = std::min(max_len_, text.size() - pos);
    for (; len > 0; --len) {
      auto it = index_.find(std::string(text.substr(pos, len)));
      if (it != index_.end()) {
        out.push_back(it->second);
        break;
      }
    }
    if (len == 0)
      throw DataError("tokenizer: no vocabulary entry matches at offset " + std::to_string(pos) + " of '" +
                      std::string(text) + "'");
    pos += len;
  }
  return out;
}

bool Tokenizer::can_tokenize(std::string_view text) const {
  try {
    tokenize(text);
    return true;
  } catch (const DataError&) {
    return false;
  }
}

std::string Tokenizer::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += token(id);
  return out;
}

std::optional<TokenId> Tokenizer::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Tokenizer::id(std::string_view token) const {
  auto found = find(token);
  if (!found) throw DataError("tokenizer: token '" + std::string(token) + "' not in vocabulary");
  return *found;
}

const std::string& Tokenizer::token(TokenId id) const {
  if (id >= vocab_.size()) throw DataError("tokenizer: token id " + std::to_string(id) + " out of range");
  return vocab_[id];
}

namespace {

constexpr std::array<const char*, 20> kUnits = {
    "zero",    "one",     "two",       "three",    "four",     "five",    "six",
    "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",  "thirteen",
    "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen"};
constexpr std::array<const char*, 10> kTens = {"",      "",      "twenty",  "thirty", "forty",
                                               "fifty", "sixty", "seventy", "eighty", "ninety"};

}  // namespace

std::string number_word(int n) {
  if (n < 0 || n > 99) throw std::out_of_range("number_word: only 0..99 are spelled out");
  if (n < 20) return kUnits[n];
  std::string w = kTens[n / 10];
  if (n % 10 != 0) w += std::string("-") + kUnits[n % 10];
  return w;
}

std::vector<std::string> default_vocabulary() {
  std::vector<std::string> vocab;
  std::unordered_set<std::string> seen;
  auto push = [&](const std::string& t) {
    if (seen.insert(t).second) vocab.push_back(t);
  };
  auto both = [&](const std::string& w) {
    push(w);
    push(" " + w);
  };

  push("<eos>");
  for (int d = 0; d < 10; ++d) both(std::to_string(d));
  for (const char* op : {"+", "-", "*", "/", "="}) both(op);
  for (const char* p : {"?", ":", "'s", ".", ","}) push(p);
  for (const char* w : kUnits) both(w);
  for (std::size_t t = 2; t < kTens.size(); ++t) both(kTens[t]);
  both("hundred");
  for (const char* w : {"plus", "minus", "times", "divides", "sum", "difference", "product", "ratio"}) both(w);

  // Arithmetic prompt templates.
  for (const char* w : {"The", "the", "of", "and", "is", "Q", "What", "A", "between"}) both(w);
  // Profession prompt templates.
  for (const char* w : {"a", "woman", "man", "works", "as", "employed", "holds", "job", "occupation", "work",
                        "profession", "involves"})
    both(w);
  // Profession lists; multi-word entries contribute each word.
  for (const char* w : {"cleaner",    "nurse",      "secretary",  "domestic",     "helper",    "maid",
                        "reception",  "seller",     "server",     "librarian",    "pharmacist", "translator",
                        "beautician", "dental",     "assistant",  "hairdresser",  "volunteer", "bookkeeper",
                        "police",     "guard",      "delivery",   "labour",       "driver",    "machinist",
                        "roofer",     "machine",    "operator",   "lumberjack",   "technician", "miner",
                        "nightwatch", "painter",    "photographer", "builder",    "porter"})
    both(w);
  return vocab;
}

}  // namespace cnalab
