#include "mqmrc/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "mqmrc/errors.hpp"

namespace mqmrc {

namespace {

const char* kReservedNames[Vocab::kReserved] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[ENT]"};

bool is_space_codepoint(std::uint32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680:
    case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Decodes one UTF-8 codepoint at s[i]; advances i. Invalid bytes pass through
// as single non-space characters.
std::uint32_t next_codepoint(const std::string& s, std::size_t& i, std::size_t& len) {
  const auto byte = static_cast<unsigned char>(s[i]);
  std::size_t n = 1;
  std::uint32_t cp = byte;
  if (byte >= 0xF0) n = 4;
  else if (byte >= 0xE0) n = 3;
  else if (byte >= 0xC0) n = 2;
  if (n > 1) {
    if (i + n > s.size()) n = 1;
    else {
      cp = byte & (0xFFu >> (n + 1));
      for (std::size_t k = 1; k < n; ++k) {
        const auto cont = static_cast<unsigned char>(s[i + k]);
        if ((cont & 0xC0) != 0x80) { n = 1; cp = byte; break; }
        cp = (cp << 6) | (cont & 0x3Fu);
      }
    }
  }
  len = n;
  i += n;
  return cp;
}

}  // namespace

Vocab::Vocab(bool lowercase) : lowercase_(lowercase) {
  for (std::size_t i = 0; i < kReserved; ++i) {
    id_to_token_.emplace_back(kReservedNames[i]);
    token_to_id_[kReservedNames[i]] = static_cast<TokenId>(i);
  }
}

TokenId Vocab::id(const std::string& token) const {
  const std::string key = lowercase_ ? lowercase_ascii(token) : token;
  auto it = token_to_id_.find(key);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= id_to_token_.size()) throw IndexError("vocab: id " + std::to_string(id) + " out of range");
  return id_to_token_[id];
}

TokenId Vocab::add(const std::string& token) {
  const std::string key = lowercase_ ? lowercase_ascii(token) : token;
  auto it = token_to_id_.find(key);
  if (it != token_to_id_.end()) return it->second;
  const auto id = static_cast<TokenId>(id_to_token_.size());
  id_to_token_.push_back(key);
  token_to_id_[key] = id;
  return id;
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("vocab: cannot write " + path);
  f << "#lowercase=" << (lowercase_ ? 1 : 0) << "\n";
  for (std::size_t i = kReserved; i < id_to_token_.size(); ++i) f << id_to_token_[i] << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("vocab: cannot read " + path);
  std::string header;
  if (!std::getline(f, header) || header.rfind("#lowercase=", 0) != 0) {
    throw DataError("vocab: missing casing header in " + path);
  }
  Vocab vocab(header.back() == '1');
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty()) vocab.add(line);
  }
  return vocab;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t at = i;
    std::size_t len = 0;
    const std::uint32_t cp = next_codepoint(text, i, len);
    if (is_space_codepoint(cp)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.append(text, at, len);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_count, bool lowercase) {
  if (min_count < 1) throw ContractError("build_vocab: min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const std::string& text : corpus) {
    for (std::string& tok : tokenize(text)) {
      counts[lowercase ? lowercase_ascii(tok) : tok] += 1;
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab vocab(lowercase);
  for (const auto& [tok, n] : ranked) vocab.add(tok);
  return vocab;
}

std::vector<TokenId> encode(const std::vector<std::string>& tokens, const Vocab& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const std::string& tok : tokens) ids.push_back(vocab.id(tok));
  return ids;
}

std::string decode_span(const std::vector<std::string>& tokens, std::size_t start, std::size_t end) {
  if (start > end || end >= tokens.size()) {
    throw IndexError("decode_span: span [" + std::to_string(start) + "," + std::to_string(end) +
                     "] out of range for " + std::to_string(tokens.size()) + " tokens");
  }
  std::string out = tokens[start];
  for (std::size_t i = start + 1; i <= end; ++i) {
    out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string lowercase_ascii(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace mqmrc
