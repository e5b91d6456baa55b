#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mctt {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr TokenId kBlank = 0;
inline constexpr TokenId kSos = 1;

// id -> token table. Id 0 is the blank, id 1 the start-of-sentence marker;
// every other id is an ordinary output token.
class Vocabulary {
 public:
  static constexpr std::string_view kBlankToken = "<blank>";
  static constexpr std::string_view kSosToken = "<sos>";

  Vocabulary() = default;
  // tokens[0] and tokens[1] must be the blank and sos markers.
  explicit Vocabulary(std::vector<std::string> tokens);

  // One token per line; the line number is the id.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Blank, sos, then the lowercase letters a, b, ... (count of them).
  static Vocabulary letters(std::size_t count);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Whitespace-separated tokens. Unknown tokens and markers throw.
  TokenSequence encode(std::string_view text) const;
  std::string decode(const TokenSequence& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Throws VocabularyError unless every id is a real token (not blank, not
// sos) below vocab_size.
void check_labels(const TokenSequence& y, std::size_t vocab_size);

}  // namespace mctt
