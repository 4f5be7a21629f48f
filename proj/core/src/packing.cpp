#include "mqmrc/packing.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "mqmrc/errors.hpp"

namespace mqmrc {

void validate_sample(const Sample& sample) {
  std::set<std::string> seen;
  for (const EntitySpans& e : sample.entities) {
    if (!seen.insert(e.name).second) throw DataError("sample: duplicate entity " + e.name);
    std::vector<Span> sorted = e.spans;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const Span& s = sorted[i];
      if (s.start > s.end || s.end >= sample.context_tokens.size()) {
        throw DataError("sample: span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                        "] of entity " + e.name + " out of bounds for " +
                        std::to_string(sample.context_tokens.size()) + " tokens");
      }
      if (i > 0 && sorted[i - 1].end >= s.start) {
        throw DataError("sample: overlapping spans for entity " + e.name);
      }
    }
  }
}

void QueryMap::set(const std::string& entity, const std::string& query) {
  for (auto& [name, q] : entries_) {
    if (name == entity) {
      q = query;
      return;
    }
  }
  entries_.emplace_back(entity, query);
}

std::optional<std::string> QueryMap::query(const std::string& entity) const {
  for (const auto& [name, q] : entries_) {
    if (name == entity) return q;
  }
  return std::nullopt;
}

QueryMap QueryMap::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("query map: cannot read " + path);
  QueryMap qm;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("query map: missing tab on line " + std::to_string(lineno));
    }
    qm.set(line.substr(0, tab), line.substr(tab + 1));
  }
  return qm;
}

void QueryMap::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("query map: cannot write " + path);
  for (const auto& [name, q] : entries_) f << name << '\t' << q << '\n';
}

namespace {

std::vector<TokenId> query_ids(const std::string& entity, const Vocab& vocab,
                               const QueryMap* query_map) {
  std::string text = entity;
  if (query_map) {
    if (auto q = query_map->query(entity)) text = *q;
  }
  return encode(tokenize(text), vocab);
}

PackedSequence assemble(const Sample& sample, const Vocab& vocab, std::size_t max_seq_len,
                        const std::vector<std::vector<TokenId>>& questions, bool with_ent,
                        const std::vector<std::string>& order) {
  // [CLS] + first [SEP] + final [SEP] plus the question region.
  std::size_t question_region = 3;
  for (const auto& q : questions) question_region += q.size() + (with_ent ? 1 : 0);
  if (question_region > max_seq_len) {
    throw CapacityError("packing: question region needs " + std::to_string(question_region) +
                        " tokens but max_seq_len is " + std::to_string(max_seq_len));
  }
  const std::size_t ctx_budget = max_seq_len - question_region;
  const std::size_t ctx_len = std::min(sample.context_tokens.size(), ctx_budget);

  PackedSequence packed;
  packed.ids.push_back(Vocab::kCls);
  for (std::size_t i = 0; i < ctx_len; ++i) {
    packed.ids.push_back(vocab.id(sample.context_tokens[i]));
  }
  packed.ids.push_back(Vocab::kSep);
  packed.segment_ids.assign(packed.ids.size(), Segment::A);
  for (const auto& q : questions) {
    packed.ids.insert(packed.ids.end(), q.begin(), q.end());
    if (with_ent) {
      packed.ids.push_back(Vocab::kEnt);
      packed.ent_positions.push_back(packed.ids.size() - 1);
    }
  }
  packed.ids.push_back(Vocab::kSep);
  packed.segment_ids.resize(packed.ids.size(), Segment::B);
  packed.cls_index = 0;
  packed.context_first = 1;
  packed.context_last = ctx_len;  // ctx_len == 0 leaves the range empty
  packed.entity_order = order;
  return packed;
}

}  // namespace

PackedSequence pack_mqmrc(const Sample& sample, const Vocab& vocab, const QueryMap* query_map,
                          std::size_t max_seq_len) {
  if (sample.entities.empty()) throw ContractError("pack_mqmrc: sample has no entities");
  std::vector<std::vector<TokenId>> questions;
  std::vector<std::string> order;
  for (const EntitySpans& e : sample.entities) {
    questions.push_back(query_ids(e.name, vocab, query_map));
    order.push_back(e.name);
  }
  return assemble(sample, vocab, max_seq_len, questions, /*with_ent=*/true, order);
}

PackedSequence pack_sqmrc(const Sample& sample, const std::string& entity, const Vocab& vocab,
                          const QueryMap* query_map, std::size_t max_seq_len) {
  // Layout keeps two [SEP]s, so the question region arithmetic matches MQMRC
  // with zero [ENT] tokens.
  std::vector<std::vector<TokenId>> questions{query_ids(entity, vocab, query_map)};
  return assemble(sample, vocab, max_seq_len, questions, /*with_ent=*/false, {entity});
}

Sample permute_entities(const Sample& sample, const std::vector<std::size_t>& permutation) {
  const std::size_t k = sample.entities.size();
  if (permutation.size() != k) {
    throw ContractError("permute_entities: permutation size " +
                        std::to_string(permutation.size()) + " for " + std::to_string(k) +
                        " entities");
  }
  std::vector<bool> used(k, false);
  Sample out;
  out.context_tokens = sample.context_tokens;
  for (std::size_t idx : permutation) {
    if (idx >= k || used[idx]) throw ContractError("permute_entities: not a permutation");
    used[idx] = true;
    out.entities.push_back(sample.entities[idx]);
  }
  return out;
}

}  // namespace mqmrc
