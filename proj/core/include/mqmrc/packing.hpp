#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mqmrc/tokenizer.hpp"

namespace mqmrc {

/// Inclusive token span [start, end].
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  auto operator<=>(const Span&) const = default;
};

struct EntitySpans {
  std::string name;
  std::vector<Span> spans;  // empty means no answer
  bool operator==(const EntitySpans&) const = default;
};

/// One context with its gold entity -> spans annotations, in question order.
struct Sample {
  std::vector<std::string> context_tokens;
  std::vector<EntitySpans> entities;

  std::size_t entity_count() const { return entities.size(); }
  bool operator==(const Sample&) const = default;
};

/// Throws DataError if any span is out of bounds, entities repeat, or spans
/// for one entity overlap.
void validate_sample(const Sample& sample);

enum class Segment : std::uint8_t { A = 0, B = 1 };

/// Encoder-ready sequence. MQMRC layout:
///   [CLS] context [SEP] q1 [ENT] q2 [ENT] ... qk [ENT] [SEP]
/// ent_positions[i] is the index of the [ENT] that follows entity i's query.
struct PackedSequence {
  std::vector<TokenId> ids;
  std::vector<Segment> segment_ids;
  std::vector<std::size_t> ent_positions;
  std::size_t context_first = 1;  // context_last < context_first when empty
  std::size_t context_last = 0;
  std::size_t cls_index = 0;
  std::vector<std::string> entity_order;

  std::size_t length() const { return ids.size(); }
  std::size_t context_len() const {
    return context_last < context_first ? 0 : context_last - context_first + 1;
  }
};

/// entity name -> natural-language query text.
class QueryMap {
 public:
  void set(const std::string& entity, const std::string& query);
  std::optional<std::string> query(const std::string& entity) const;

  /// Tab-separated file: entity<TAB>query per line.
  static QueryMap load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

PackedSequence pack_mqmrc(const Sample& sample, const Vocab& vocab, const QueryMap* query_map,
                          std::size_t max_seq_len);

/// SQMRC layout: [CLS] context [SEP] question [SEP]; no [ENT] tokens.
PackedSequence pack_sqmrc(const Sample& sample, const std::string& entity, const Vocab& vocab,
                          const QueryMap* query_map, std::size_t max_seq_len);

/// Reorders the entity list; permutation[i] is the index into sample.entities
/// of the entity placed at position i.
Sample permute_entities(const Sample& sample, const std::vector<std::size_t>& permutation);

}  // namespace mqmrc
