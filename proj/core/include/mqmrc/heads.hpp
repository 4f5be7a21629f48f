#pragma once

#include <string>
#include <vector>

#include "mqmrc/encoder.hpp"

namespace mqmrc {

// BIO label indices; argmax ties break toward the lowest index.
inline constexpr std::size_t kLabelO = 0;
inline constexpr std::size_t kLabelB = 1;
inline constexpr std::size_t kLabelI = 2;
inline constexpr std::size_t kNumBioLabels = 3;

enum class InteractionKind {
  LayerSum,          // W1(T) + W2(ent)
  Difference,        // T - ent
  LayerProductRelu,  // relu(W1(T)) * relu(W2(ent))
  LayerProductTanh,  // tanh(W1(T)) * tanh(W2(ent))
  Max,               // max(T, ent)
  ElementwiseProduct,  // T * ent
  LayerProduct,      // W1(T) * W2(ent)
};

bool interaction_uses_weights(InteractionKind kind);
InteractionKind interaction_from_string(const std::string& name);
std::string to_string(InteractionKind kind);
const std::vector<InteractionKind>& all_interaction_kinds();

/// Entity-conditioned transform of shared token representations.
struct InteractionOp {
  InteractionKind kind = InteractionKind::ElementwiseProduct;
  Tensor w1, w2;  // [d,d]; defined iff the kind uses weights
};

/// Adds iop.w1/iop.w2 to params when the kind needs them (Normal(0,0.02)
/// per seed) and returns the wired op. For weightless kinds, no
/// parameters are created.
InteractionOp init_interaction(InteractionKind kind, ModelParams& params, std::size_t hidden_dim,
                               std::uint64_t seed);

/// Rebinds an InteractionOp to weights already present in params.
InteractionOp interaction_from_params(InteractionKind kind, const ModelParams& params);

/// P_i rows: one entity-specific representation per token row of T.
Tensor entity_specific(const Tensor& T, const Tensor& ent, const InteractionOp& op);

struct BioHead {
  Tensor w;  // [d, 3]
  Tensor b;  // [3]
};
BioHead init_bio_head(ModelParams& params, std::size_t hidden_dim, std::uint64_t seed);
BioHead bio_head_from_params(const ModelParams& params);

struct SpanIndexHead {
  Tensor w_start;  // [d, 1]
  Tensor w_end;    // [d, 1]
};
SpanIndexHead init_span_head(ModelParams& params, std::size_t hidden_dim, std::uint64_t seed);
SpanIndexHead span_head_from_params(const ModelParams& params);

Tensor bio_forward(const Tensor& P, const BioHead& head);  // [n, 3] logits
std::vector<std::size_t> bio_predict(const Tensor& logits);

/// Rows of token_embeddings at [CLS] plus the context positions: the label-
/// bearing slots. Shape [n_ctx+1, d].
Tensor label_positions(const EncoderOutput& enc, const PackedSequence& packed);

/// Per-entity BIO logits over [CLS]+context. Shape [k, n_ctx+1, 3].
Tensor mqmrc_logits(const EncoderOutput& enc, const PackedSequence& packed,
                    const InteractionOp& op, const BioHead& head);

/// Argmax labels per entity; shape [k][n_ctx+1], column 0 is the [CLS] slot.
std::vector<std::vector<std::size_t>> mqmrc_forward(const EncoderOutput& enc,
                                                    const PackedSequence& packed,
                                                    const InteractionOp& op, const BioHead& head);

/// Equal-weight mean of cross-entropies over all (entity, position) pairs.
Tensor mqmrc_loss(const Tensor& logits, const std::vector<std::vector<std::size_t>>& gold);

struct SpanPrediction {
  bool no_answer = true;
  std::size_t start = 0;  // context-relative, inclusive
  std::size_t end = 0;
};

/// Start/end logits over [CLS]+context rows; each [n_ctx+1].
std::pair<Tensor, Tensor> span_logits(const Tensor& P, const SpanIndexHead& head);

/// Argmax span; no-answer when start hits the [CLS] slot or end < start.
SpanPrediction span_forward(const Tensor& P, const SpanIndexHead& head);
SpanPrediction span_predict(const Tensor& start_logits, const Tensor& end_logits);

/// Mean over entities of (start CE + end CE)/2; gold indices address the
/// [CLS]+context rows (0 = no answer).
Tensor span_loss(const std::vector<std::pair<Tensor, Tensor>>& logits,
                 const std::vector<std::pair<std::size_t, std::size_t>>& gold);

}  // namespace mqmrc
