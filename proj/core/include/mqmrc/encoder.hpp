#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "mqmrc/checkpoint.hpp"
#include "mqmrc/ops.hpp"
#include "mqmrc/packing.hpp"

namespace mqmrc {

struct EncoderConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t hidden_dim = 32;
  std::size_t ffn_dim = 64;
  std::size_t max_seq_len = 128;
  std::size_t vocab_size = 0;
  double dropout_rate = 0.1;
  double layer_norm_eps = 1e-12;

  void validate() const;

  /// key=value text round-trip, one field per line.
  std::string to_kv() const;
  static EncoderConfig from_kv(const std::string& text);
  void save(const std::string& path) const;
  static EncoderConfig load(const std::string& path);
};

struct EncoderOutput {
  Tensor token_embeddings;   // [seq_len, d], every position
  Tensor entity_embeddings;  // [k, d], rows gathered at ent_positions
  Tensor cls_embedding;      // [d]
};

/// Fresh encoder parameters: weights ~ Normal(0, 0.02), biases 0, layer-norm
/// gamma 1 / beta 0. Deterministic per seed.
ModelParams init_params(const EncoderConfig& config, std::uint64_t seed);

/// Closed-form parameter value count for init_params(config, ...).
std::size_t encoder_param_count(const EncoderConfig& config);

/// Transformer pass over explicit inputs. attend_mask[i]==false marks a
/// padding position that no query may attend to. Returns [seq_len, d].
Tensor encode_tokens(const std::vector<TokenId>& ids, const std::vector<Segment>& segments,
                     const std::vector<bool>& attend_mask, const ModelParams& params,
                     const EncoderConfig& config, bool train_mode = false,
                     std::mt19937_64* rng = nullptr);

/// Full-sequence pass over a PackedSequence; ids equal to [PAD] are masked.
EncoderOutput encode(const PackedSequence& packed, const ModelParams& params,
                     const EncoderConfig& config, bool train_mode = false,
                     std::mt19937_64* rng = nullptr);

}  // namespace mqmrc
