#include "mctt/vocab.h"

#include <fstream>
#include <sstream>

#include "mctt/errors.h"

namespace mctt {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3 || tokens_[0] != kBlankToken || tokens_[1] != kSosToken) {
    throw VocabularyError("vocabulary must start with " + std::string(kBlankToken) + ", " +
                          std::string(kSosToken) + " and hold at least one token");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw VocabularyError("empty token at id " + std::to_string(i));
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw VocabularyError("duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

Vocabulary Vocabulary::letters(std::size_t count) {
  if (count == 0 || count > 26) throw VocabularyError("letter vocabulary needs 1..26 tokens");
  std::vector<std::string> tokens{std::string(kBlankToken), std::string(kSosToken)};
  for (std::size_t i = 0; i < count; ++i) tokens.emplace_back(1, static_cast<char>('a' + i));
  return Vocabulary(std::move(tokens));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) throw VocabularyError("unknown token '" + std::string(token) + "'");
  return it->second;
}

TokenSequence Vocabulary::encode(std::string_view text) const {
  std::istringstream is{std::string(text)};
  TokenSequence ids;
  std::string word;
  while (is >> word) ids.push_back(id(word));
  check_labels(ids, size());
  return ids;
}

std::string Vocabulary::decode(const TokenSequence& ids) const {
  std::string out;
  for (auto id : ids) {
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

void check_labels(const TokenSequence& y, std::size_t vocab_size) {
  for (std::size_t u = 0; u < y.size(); ++u) {
    if (y[u] == kBlank || y[u] == kSos || y[u] < 0 ||
        static_cast<std::size_t>(y[u]) >= vocab_size) {
      throw VocabularyError("label " + std::to_string(y[u]) + " at position " +
                            std::to_string(u) + " is not an output token of a " +
                            std::to_string(vocab_size) + "-entry vocabulary");
    }
  }
}

}  // namespace mctt
