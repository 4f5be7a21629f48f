#include "mqmrc/heads.hpp"

#include <algorithm>

#include "mqmrc/errors.hpp"

namespace mqmrc {

bool interaction_uses_weights(InteractionKind kind) {
  switch (kind) {
    case InteractionKind::LayerSum:
    case InteractionKind::LayerProductRelu:
    case InteractionKind::LayerProductTanh:
    case InteractionKind::LayerProduct:
      return true;
    default:
      return false;
  }
}

InteractionKind interaction_from_string(const std::string& name) {
  if (name == "layer_sum") return InteractionKind::LayerSum;
  if (name == "difference") return InteractionKind::Difference;
  if (name == "layer_product_relu") return InteractionKind::LayerProductRelu;
  if (name == "layer_product_tanh") return InteractionKind::LayerProductTanh;
  if (name == "max") return InteractionKind::Max;
  if (name == "product") return InteractionKind::ElementwiseProduct;
  if (name == "layer_product") return InteractionKind::LayerProduct;
  throw ConfigError("unknown interaction op: " + name);
}

std::string to_string(InteractionKind kind) {
  switch (kind) {
    case InteractionKind::LayerSum: return "layer_sum";
    case InteractionKind::Difference: return "difference";
    case InteractionKind::LayerProductRelu: return "layer_product_relu";
    case InteractionKind::LayerProductTanh: return "layer_product_tanh";
    case InteractionKind::Max: return "max";
    case InteractionKind::ElementwiseProduct: return "product";
    case InteractionKind::LayerProduct: return "layer_product";
  }
  throw ConfigError("unknown interaction kind");
}

const std::vector<InteractionKind>& all_interaction_kinds() {
  static const std::vector<InteractionKind> kinds = {
      InteractionKind::LayerSum,          InteractionKind::Difference,
      InteractionKind::LayerProductRelu,  InteractionKind::LayerProductTanh,
      InteractionKind::Max,               InteractionKind::ElementwiseProduct,
      InteractionKind::LayerProduct,
  };
  return kinds;
}

InteractionOp init_interaction(InteractionKind kind, ModelParams& params, std::size_t hidden_dim,
                               std::uint64_t seed) {
  InteractionOp op;
  op.kind = kind;
  if (interaction_uses_weights(kind)) {
    std::mt19937_64 rng(seed);
    op.w1 = params.add("iop.w1", randn({hidden_dim, hidden_dim}, rng, 0.02));
    op.w2 = params.add("iop.w2", randn({hidden_dim, hidden_dim}, rng, 0.02));
    op.w1.set_requires_grad(true);
    op.w2.set_requires_grad(true);
  }
  return op;
}

InteractionOp interaction_from_params(InteractionKind kind, const ModelParams& params) {
  InteractionOp op;
  op.kind = kind;
  if (interaction_uses_weights(kind)) {
    op.w1 = params.get("iop.w1");
    op.w2 = params.get("iop.w2");
  }
  return op;
}

Tensor entity_specific(const Tensor& T, const Tensor& ent, const InteractionOp& op) {
  if (T.rank() != 2 || ent.rank() != 1 || T.dim(1) != ent.dim(0)) {
    throw ShapeError("entity_specific: T " + shape_str(T.shape()) + " vs ent " +
                     shape_str(ent.shape()));
  }
  if (interaction_uses_weights(op.kind) && (!op.w1.defined() || !op.w2.defined())) {
    throw ConfigError("entity_specific: " + to_string(op.kind) + " needs W1/W2 weights");
  }
  const std::size_t d = ent.dim(0);
  auto project_ent = [&](const Tensor& w) {
    return reshape(matmul(reshape(ent, {1, d}), w), {d});
  };
  switch (op.kind) {
    case InteractionKind::LayerSum:
      return add(matmul(T, op.w1), project_ent(op.w2));
    case InteractionKind::Difference:
      return sub(T, ent);
    case InteractionKind::LayerProductRelu:
      return mul(relu(matmul(T, op.w1)), relu(project_ent(op.w2)));
    case InteractionKind::LayerProductTanh:
      return mul(tanh(matmul(T, op.w1)), tanh(project_ent(op.w2)));
    case InteractionKind::Max:
      return emax(T, ent);
    case InteractionKind::ElementwiseProduct:
      return mul(T, ent);
    case InteractionKind::LayerProduct:
      return mul(matmul(T, op.w1), project_ent(op.w2));
  }
  throw ConfigError("entity_specific: unknown kind");
}

BioHead init_bio_head(ModelParams& params, std::size_t hidden_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BioHead head;
  head.w = params.add("head.bio.w", randn({hidden_dim, kNumBioLabels}, rng, 0.02));
  head.b = params.add("head.bio.b", Tensor({kNumBioLabels}, 0.0));
  head.w.set_requires_grad(true);
  head.b.set_requires_grad(true);
  return head;
}

BioHead bio_head_from_params(const ModelParams& params) {
  return BioHead{params.get("head.bio.w"), params.get("head.bio.b")};
}

SpanIndexHead init_span_head(ModelParams& params, std::size_t hidden_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SpanIndexHead head;
  head.w_start = params.add("head.span.ws", randn({hidden_dim, 1}, rng, 0.02));
  head.w_end = params.add("head.span.we", randn({hidden_dim, 1}, rng, 0.02));
  head.w_start.set_requires_grad(true);
  head.w_end.set_requires_grad(true);
  return head;
}

SpanIndexHead span_head_from_params(const ModelParams& params) {
  return SpanIndexHead{params.get("head.span.ws"), params.get("head.span.we")};
}

Tensor bio_forward(const Tensor& P, const BioHead& head) {
  return linear(P, head.w, head.b);
}

namespace {

std::size_t argmax_row(const double* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j) {
    if (row[j] > row[best]) best = j;  // ties keep the lowest index
  }
  return best;
}

}  // namespace

std::vector<std::size_t> bio_predict(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) != kNumBioLabels) {
    throw ShapeError("bio_predict: want [n,3] logits, got " + shape_str(logits.shape()));
  }
  std::vector<std::size_t> labels(logits.dim(0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = argmax_row(logits.data().data() + i * kNumBioLabels, kNumBioLabels);
  }
  return labels;
}

Tensor label_positions(const EncoderOutput& enc, const PackedSequence& packed) {
  if (!enc.token_embeddings.defined() || enc.token_embeddings.dim(0) != packed.length()) {
    throw ContractError("label_positions: encoder output does not match packed sequence");
  }
  std::vector<std::size_t> rows;
  rows.push_back(packed.cls_index);
  for (std::size_t i = packed.context_first; i <= packed.context_last && packed.context_len() > 0;
       ++i) {
    rows.push_back(i);
  }
  return gather_rows(enc.token_embeddings, rows);
}

Tensor mqmrc_logits(const EncoderOutput& enc, const PackedSequence& packed,
                    const InteractionOp& op, const BioHead& head) {
  const std::size_t k = packed.ent_positions.size();
  if (k == 0) throw ContractError("mqmrc_logits: packed sequence has no [ENT] positions");
  if (!enc.entity_embeddings.defined() || enc.entity_embeddings.dim(0) != k) {
    throw ContractError("mqmrc_logits: encoder output does not match packed sequence");
  }
  const std::size_t d = enc.entity_embeddings.dim(1);
  Tensor T = label_positions(enc, packed);
  std::vector<Tensor> per_entity;
  per_entity.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    Tensor ent = reshape(gather_rows(enc.entity_embeddings, {i}), {d});
    per_entity.push_back(bio_forward(entity_specific(T, ent, op), head));
  }
  return stack_rows(per_entity);
}

std::vector<std::vector<std::size_t>> mqmrc_forward(const EncoderOutput& enc,
                                                    const PackedSequence& packed,
                                                    const InteractionOp& op, const BioHead& head) {
  const Tensor logits = mqmrc_logits(enc, packed, op, head);
  const std::size_t k = logits.dim(0);
  const std::size_t n = logits.dim(1);
  std::vector<std::vector<std::size_t>> labels(k, std::vector<std::size_t>(n));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      labels[i][j] =
          argmax_row(logits.data().data() + (i * n + j) * kNumBioLabels, kNumBioLabels);
    }
  }
  return labels;
}

Tensor mqmrc_loss(const Tensor& logits, const std::vector<std::vector<std::size_t>>& gold) {
  if (logits.rank() != 3 || logits.dim(2) != kNumBioLabels) {
    throw ContractError("mqmrc_loss: want [k,n,3] logits, got " + shape_str(logits.shape()));
  }
  const std::size_t k = logits.dim(0);
  const std::size_t n = logits.dim(1);
  if (gold.size() != k) {
    throw ContractError("mqmrc_loss: " + std::to_string(gold.size()) + " gold rows for k=" +
                        std::to_string(k));
  }
  std::vector<std::size_t> flat;
  flat.reserve(k * n);
  for (const auto& row : gold) {
    if (row.size() != n) throw ContractError("mqmrc_loss: gold row length mismatch");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return cross_entropy_mean(reshape(logits, {k * n, kNumBioLabels}), flat);
}

std::pair<Tensor, Tensor> span_logits(const Tensor& P, const SpanIndexHead& head) {
  const std::size_t n = P.dim(0);
  return {reshape(matmul(P, head.w_start), {n}), reshape(matmul(P, head.w_end), {n})};
}

SpanPrediction span_predict(const Tensor& start_logits, const Tensor& end_logits) {
  const std::size_t n = start_logits.size();
  const std::size_t s = argmax_row(start_logits.data().data(), n);
  const std::size_t e = argmax_row(end_logits.data().data(), n);
  SpanPrediction pred;
  if (s == 0 || e < s) return pred;  // [CLS] start or inverted span: no answer
  pred.no_answer = false;
  pred.start = s - 1;
  pred.end = e - 1;
  return pred;
}

SpanPrediction span_forward(const Tensor& P, const SpanIndexHead& head) {
  const auto [start_logits, end_logits] = span_logits(P, head);
  return span_predict(start_logits, end_logits);
}

Tensor span_loss(const std::vector<std::pair<Tensor, Tensor>>& logits,
                 const std::vector<std::pair<std::size_t, std::size_t>>& gold) {
  if (logits.empty() || logits.size() != gold.size()) {
    throw ContractError("span_loss: logits/gold size mismatch");
  }
  Tensor total;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Tensor pair_loss = scale(add(cross_entropy(logits[i].first, gold[i].first),
                                 cross_entropy(logits[i].second, gold[i].second)),
                             0.5);
    total = total.defined() ? add(total, pair_loss) : pair_loss;
  }
  return scale(total, 1.0 / static_cast<double>(logits.size()));
}

}  // namespace mqmrc
