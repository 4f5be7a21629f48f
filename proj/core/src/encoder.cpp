#include "mqmrc/encoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mqmrc/errors.hpp"

namespace mqmrc {

void EncoderConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || hidden_dim < 1 || ffn_dim < 1 || max_seq_len < 1 ||
      vocab_size < 1) {
    throw ConfigError("encoder config: all dimensions must be >= 1");
  }
  if (hidden_dim % n_heads != 0) {
    throw ConfigError("encoder config: hidden_dim " + std::to_string(hidden_dim) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("encoder config: dropout_rate must be in [0,1)");
  }
  if (layer_norm_eps <= 0.0) throw ConfigError("encoder config: layer_norm_eps must be positive");
}

std::string EncoderConfig::to_kv() const {
  std::ostringstream os;
  os << "n_layers=" << n_layers << "\n"
     << "n_heads=" << n_heads << "\n"
     << "hidden_dim=" << hidden_dim << "\n"
     << "ffn_dim=" << ffn_dim << "\n"
     << "max_seq_len=" << max_seq_len << "\n"
     << "vocab_size=" << vocab_size << "\n"
     << "dropout_rate=" << dropout_rate << "\n"
     << "layer_norm_eps=" << layer_norm_eps << "\n";
  return os.str();
}

EncoderConfig EncoderConfig::from_kv(const std::string& text) {
  EncoderConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("encoder config: bad line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "n_layers") cfg.n_layers = std::stoul(val);
    else if (key == "n_heads") cfg.n_heads = std::stoul(val);
    else if (key == "hidden_dim") cfg.hidden_dim = std::stoul(val);
    else if (key == "ffn_dim") cfg.ffn_dim = std::stoul(val);
    else if (key == "max_seq_len") cfg.max_seq_len = std::stoul(val);
    else if (key == "vocab_size") cfg.vocab_size = std::stoul(val);
    else if (key == "dropout_rate") cfg.dropout_rate = std::stod(val);
    else if (key == "layer_norm_eps") cfg.layer_norm_eps = std::stod(val);
    else throw DataError("encoder config: unknown key: " + key);
  }
  return cfg;
}

void EncoderConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("encoder config: cannot write " + path);
  f << to_kv();
}

EncoderConfig EncoderConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("encoder config: cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_kv(ss.str());
}

namespace {

std::string layer_key(std::size_t i, const char* suffix) {
  return "layer" + std::to_string(i) + "." + suffix;
}

}  // namespace

ModelParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config.hidden_dim;
  constexpr double kInitStd = 0.02;
  ModelParams params;
  auto weight = [&](const std::string& name, Shape shape) {
    params.add(name, randn(std::move(shape), rng, kInitStd));
  };
  auto zeros = [&](const std::string& name, Shape shape) {
    params.add(name, Tensor(std::move(shape), 0.0));
  };
  auto ones = [&](const std::string& name, Shape shape) {
    params.add(name, Tensor(std::move(shape), 1.0));
  };

  weight("embed.word", {config.vocab_size, d});
  weight("embed.pos", {config.max_seq_len, d});
  weight("embed.seg", {2, d});
  ones("embed.ln.g", {d});
  zeros("embed.ln.b", {d});
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      weight(layer_key(i, w), {d, d});
    }
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) {
      zeros(layer_key(i, b), {d});
    }
    ones(layer_key(i, "attn.ln.g"), {d});
    zeros(layer_key(i, "attn.ln.b"), {d});
    weight(layer_key(i, "ffn.w1"), {d, config.ffn_dim});
    zeros(layer_key(i, "ffn.b1"), {config.ffn_dim});
    weight(layer_key(i, "ffn.w2"), {config.ffn_dim, d});
    zeros(layer_key(i, "ffn.b2"), {d});
    ones(layer_key(i, "ffn.ln.g"), {d});
    zeros(layer_key(i, "ffn.ln.b"), {d});
  }
  params.set_requires_grad(true);
  return params;
}

std::size_t encoder_param_count(const EncoderConfig& config) {
  const std::size_t d = config.hidden_dim;
  const std::size_t embeddings = (config.vocab_size + config.max_seq_len + 2) * d + 2 * d;
  const std::size_t attn = 4 * d * d + 4 * d + 2 * d;
  const std::size_t ffn = d * config.ffn_dim + config.ffn_dim + config.ffn_dim * d + d + 2 * d;
  return embeddings + config.n_layers * (attn + ffn);
}

Tensor encode_tokens(const std::vector<TokenId>& ids, const std::vector<Segment>& segments,
                     const std::vector<bool>& attend_mask, const ModelParams& params,
                     const EncoderConfig& config, bool train_mode, std::mt19937_64* rng) {
  config.validate();
  const std::size_t n = ids.size();
  if (n == 0) throw ContractError("encode: empty sequence");
  if (n > config.max_seq_len) {
    throw CapacityError("encode: sequence length " + std::to_string(n) + " exceeds max_seq_len " +
                        std::to_string(config.max_seq_len));
  }
  if (segments.size() != n || attend_mask.size() != n) {
    throw ContractError("encode: ids/segments/mask lengths disagree");
  }
  for (TokenId id : ids) {
    if (id >= config.vocab_size) {
      throw IndexError("encode: token id " + std::to_string(id) + " outside vocab of " +
                       std::to_string(config.vocab_size));
    }
  }
  const bool drop = train_mode && config.dropout_rate > 0.0;
  if (drop && !rng) throw ContractError("encode: train_mode dropout needs an rng");

  std::vector<std::size_t> tok_rows(n), pos_rows(n), seg_rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    tok_rows[i] = ids[i];
    pos_rows[i] = i;
    seg_rows[i] = static_cast<std::size_t>(segments[i]);
  }
  Tensor x = add(add(gather_rows(params.get("embed.word"), tok_rows),
                     gather_rows(params.get("embed.pos"), pos_rows)),
                 gather_rows(params.get("embed.seg"), seg_rows));
  x = layer_norm(x, params.get("embed.ln.g"), params.get("embed.ln.b"), config.layer_norm_eps);
  if (drop) x = dropout(x, config.dropout_rate, *rng);

  // Additive key mask: masked positions get a bias that underflows to exact
  // zero attention weight after the stable softmax.
  Tensor mask_bias(Shape{n});
  for (std::size_t i = 0; i < n; ++i) mask_bias.data()[i] = attend_mask[i] ? 0.0 : -1e30;

  const std::size_t dh = config.hidden_dim / config.n_heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    Tensor q = linear(x, params.get(layer_key(l, "attn.wq")), params.get(layer_key(l, "attn.bq")));
    Tensor k = linear(x, params.get(layer_key(l, "attn.wk")), params.get(layer_key(l, "attn.bk")));
    Tensor v = linear(x, params.get(layer_key(l, "attn.wv")), params.get(layer_key(l, "attn.bv")));
    Tensor scores = scale(matmul(split_heads(q, config.n_heads),
                                 transpose_last2(split_heads(k, config.n_heads))),
                          att_scale);
    Tensor weights = softmax(add(scores, mask_bias), -1);
    Tensor context = merge_heads(matmul(weights, split_heads(v, config.n_heads)));
    Tensor attn_out =
        linear(context, params.get(layer_key(l, "attn.wo")), params.get(layer_key(l, "attn.bo")));
    if (drop) attn_out = dropout(attn_out, config.dropout_rate, *rng);
    x = layer_norm(add(x, attn_out), params.get(layer_key(l, "attn.ln.g")),
                   params.get(layer_key(l, "attn.ln.b")), config.layer_norm_eps);

    Tensor h = gelu(linear(x, params.get(layer_key(l, "ffn.w1")), params.get(layer_key(l, "ffn.b1"))));
    Tensor ffn_out = linear(h, params.get(layer_key(l, "ffn.w2")), params.get(layer_key(l, "ffn.b2")));
    if (drop) ffn_out = dropout(ffn_out, config.dropout_rate, *rng);
    x = layer_norm(add(x, ffn_out), params.get(layer_key(l, "ffn.ln.g")),
                   params.get(layer_key(l, "ffn.ln.b")), config.layer_norm_eps);
  }
  return x;
}

EncoderOutput encode(const PackedSequence& packed, const ModelParams& params,
                     const EncoderConfig& config, bool train_mode, std::mt19937_64* rng) {
  std::vector<bool> attend(packed.ids.size());
  for (std::size_t i = 0; i < packed.ids.size(); ++i) attend[i] = packed.ids[i] != Vocab::kPad;
  EncoderOutput out;
  out.token_embeddings =
      encode_tokens(packed.ids, packed.segment_ids, attend, params, config, train_mode, rng);
  if (!packed.ent_positions.empty()) {
    out.entity_embeddings = gather_rows(out.token_embeddings, packed.ent_positions);
  }
  out.cls_embedding =
      reshape(gather_rows(out.token_embeddings, {packed.cls_index}), {config.hidden_dim});
  return out;
}

}  // namespace mqmrc
