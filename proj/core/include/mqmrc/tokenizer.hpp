#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace mqmrc {

using TokenId = std::uint32_t;

/// Whitespace-level vocabulary with fixed reserved ids.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kCls = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kEnt = 4;
  static constexpr std::size_t kReserved = 5;

  explicit Vocab(bool lowercase = false);

  bool lowercase() const { return lowercase_; }
  std::size_t size() const { return id_to_token_.size(); }

  TokenId id(const std::string& token) const;  // kUnk for unknown
  const std::string& token(TokenId id) const;

  /// Registers a token (after casing policy); returns its id.
  TokenId add(const std::string& token);

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  bool lowercase_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Splits on Unicode whitespace; token order preserved, no empty tokens.
std::vector<std::string> tokenize(const std::string& text);

/// Frequency >= min_count tokens get ids ordered by (frequency desc, token asc).
Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_count, bool lowercase);

std::vector<TokenId> encode(const std::vector<std::string>& tokens, const Vocab& vocab);

/// Joins tokens[start..end] (inclusive) with single spaces.
std::string decode_span(const std::vector<std::string>& tokens, std::size_t start, std::size_t end);

std::string lowercase_ascii(const std::string& s);

}  // namespace mqmrc
