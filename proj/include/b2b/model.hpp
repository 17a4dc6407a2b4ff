#pragma once

// BERT-style encoder, causal decoder with cross-attention, and the
// warm-start assembly of an encoder-decoder from an encoder-only donor.
//
// Blocks are post-layer-norm with a GELU feed-forward and learned absolute
// positions. One token-embedding table is shared by the encoder, the decoder
// input and the (tied) output projection.
//
// Parameter paths (manifest order):
//   shared.word_embeddings                          [V, H]
//   {encoder,decoder}.embeddings.position           [max_len, H]
//   {encoder,decoder}.embeddings.norm.{gamma,beta}  [H]
//   encoder.layer.N.attn.{query,key,value,output}.{weight [H,H], bias [H]}
//   encoder.layer.N.attn_norm.{gamma,beta}
//   encoder.layer.N.ffn.in.{weight [H,F], bias [F]}, ffn.out.{weight [F,H], bias [H]}
//   encoder.layer.N.ffn_norm.{gamma,beta}
//   decoder.layer.N.self_attn.* / self_attn_norm.*   (same shapes as attn)
//   decoder.layer.N.cross_attn.* / cross_attn_norm.*
//   decoder.layer.N.ffn.* / ffn_norm.*
//   decoder.output.bias                             [V]
//   head.{weight [H,6], bias [6]}                   (classifier checkpoints only)

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "b2b/attention.hpp"
#include "b2b/tensor.hpp"
#include "b2b/tokenizer.hpp"

namespace b2b {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden_dim = 128;
  std::size_t num_layers = 4;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 512;
  std::size_t max_len = 150;
  double dropout_rate = 0.1;
  double init_std = 0.02;
  double layer_norm_eps = 1e-12;

  void validate() const {
    if (vocab_size < special::kCount) throw ModelError("vocab_size must be >= 11");
    if (hidden_dim == 0 || num_heads == 0 || hidden_dim % num_heads != 0)
      throw ModelError("hidden_dim " + std::to_string(hidden_dim) +
                       " must be divisible by num_heads " + std::to_string(num_heads));
    if (max_len < 2) throw ModelError("max_len must be >= 2");
    if (num_layers == 0 || ffn_dim == 0) throw ModelError("num_layers and ffn_dim must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ModelError("dropout_rate must be in [0, 1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Training switches dropout on; the RNG drives the dropout masks.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;

  Tensor drop(const Tensor& x, double p) const {
    if (!training || p <= 0.0) return x;
    return dropout(x, p, *rng);
  }
};

// ---------------------------------------------------------------------------
// Parameter blocks

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear zeros(std::size_t in, std::size_t out) {
    return {Tensor::zeros({in, out}, true), Tensor::zeros({out}, true)};
  }
  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
  template <class F>
  void visit(const std::string& p, F&& f) {
    f(p + ".weight", weight);
    f(p + ".bias", bias);
  }
};

struct LayerNormParams {
  Tensor gamma, beta;
  static LayerNormParams zeros(std::size_t h) {
    return {Tensor::zeros({h}, true), Tensor::zeros({h}, true)};
  }
  Tensor operator()(const Tensor& x, double eps) const { return layer_norm(x, gamma, beta, eps); }
  template <class F>
  void visit(const std::string& p, F&& f) {
    f(p + ".gamma", gamma);
    f(p + ".beta", beta);
  }
};

struct AttentionParams {
  Linear query, key, value, output;
  static AttentionParams zeros(std::size_t h) {
    return {Linear::zeros(h, h), Linear::zeros(h, h), Linear::zeros(h, h), Linear::zeros(h, h)};
  }
  template <class F>
  void visit(const std::string& p, F&& f) {
    query.visit(p + ".query", f);
    key.visit(p + ".key", f);
    value.visit(p + ".value", f);
    output.visit(p + ".output", f);
  }
};

struct FeedForwardParams {
  Linear in, out;
  static FeedForwardParams zeros(std::size_t h, std::size_t f) {
    return {Linear::zeros(h, f), Linear::zeros(f, h)};
  }
  template <class F>
  void visit(const std::string& p, F&& f) {
    in.visit(p + ".in", f);
    out.visit(p + ".out", f);
  }
};

struct EmbeddingParams {
  Tensor position;
  LayerNormParams norm;
  static EmbeddingParams zeros(std::size_t max_len, std::size_t h) {
    return {Tensor::zeros({max_len, h}, true), LayerNormParams::zeros(h)};
  }
  template <class F>
  void visit(const std::string& p, F&& f) {
    f(p + ".position", position);
    norm.visit(p + ".norm", f);
  }
};

struct EncoderLayerParams {
  AttentionParams attn;
  LayerNormParams attn_norm;
  FeedForwardParams ffn;
  LayerNormParams ffn_norm;
  static EncoderLayerParams zeros(const ModelConfig& c) {
    return {AttentionParams::zeros(c.hidden_dim), LayerNormParams::zeros(c.hidden_dim),
            FeedForwardParams::zeros(c.hidden_dim, c.ffn_dim), LayerNormParams::zeros(c.hidden_dim)};
  }
  template <class F>
  void visit(const std::string& p, F&& f) {
    attn.visit(p + ".attn", f);
    attn_norm.visit(p + ".attn_norm", f);
    ffn.visit(p + ".ffn", f);
    ffn_norm.visit(p + ".ffn_norm", f);
  }
};

struct DecoderLayerParams {
  AttentionParams self_attn;
  LayerNormParams self_attn_norm;
  AttentionParams cross_attn;
  LayerNormParams cross_attn_norm;
  FeedForwardParams ffn;
  LayerNormParams ffn_norm;
  static DecoderLayerParams zeros(const ModelConfig& c) {
    const auto h = c.hidden_dim;
    return {AttentionParams::zeros(h), LayerNormParams::zeros(h), AttentionParams::zeros(h),
            LayerNormParams::zeros(h), FeedForwardParams::zeros(h, c.ffn_dim), LayerNormParams::zeros(h)};
  }
  template <class F>
  void visit(const std::string& p, F&& f) {
    self_attn.visit(p + ".self_attn", f);
    self_attn_norm.visit(p + ".self_attn_norm", f);
    cross_attn.visit(p + ".cross_attn", f);
    cross_attn_norm.visit(p + ".cross_attn_norm", f);
    ffn.visit(p + ".ffn", f);
    ffn_norm.visit(p + ".ffn_norm", f);
  }
};

struct EncoderStack {
  EmbeddingParams embeddings;
  std::vector<EncoderLayerParams> layers;
  static EncoderStack zeros(const ModelConfig& c) {
    EncoderStack s{EmbeddingParams::zeros(c.max_len, c.hidden_dim), {}};
    for (std::size_t i = 0; i < c.num_layers; ++i) s.layers.push_back(EncoderLayerParams::zeros(c));
    return s;
  }
  template <class F>
  void visit(const std::string& p, F&& f) {
    embeddings.visit(p + ".embeddings", f);
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit(p + ".layer." + std::to_string(i), f);
  }
};

struct DecoderStack {
  EmbeddingParams embeddings;
  std::vector<DecoderLayerParams> layers;
  Tensor output_bias;
  static DecoderStack zeros(const ModelConfig& c) {
    DecoderStack s{EmbeddingParams::zeros(c.max_len, c.hidden_dim), {},
                   Tensor::zeros({c.vocab_size}, true)};
    for (std::size_t i = 0; i < c.num_layers; ++i) s.layers.push_back(DecoderLayerParams::zeros(c));
    return s;
  }
  template <class F>
  void visit(const std::string& p, F&& f) {
    embeddings.visit(p + ".embeddings", f);
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit(p + ".layer." + std::to_string(i), f);
    f(p + ".output.bias", output_bias);
  }
};

/// BERT-convention init by path: gamma → 1, bias/beta → 0, everything else
/// Normal(0, init_std²). Draws happen in visiting order.
template <class Rng>
void init_parameter(const std::string& path, Tensor& t, double init_std, Rng& rng) {
  auto ends_with = [&](std::string_view s) {
    return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
  };
  auto d = t.mutable_data();
  if (ends_with("gamma")) {
    std::fill(d.begin(), d.end(), 1.0);
  } else if (ends_with("bias") || ends_with("beta")) {
    std::fill(d.begin(), d.end(), 0.0);
  } else {
    std::normal_distribution<double> dist(0.0, init_std);
    for (auto& x : d) x = dist(rng);
  }
}

// ---------------------------------------------------------------------------
// Batching

/// Right-padded batch of token sequences.
struct PaddedBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<int> ids;               // batch*len
  std::vector<std::uint8_t> valid;    // 1 where not padding
  std::vector<int> positions;         // batch*len, 0..len-1 by default
};

inline PaddedBatch pad_batch(const std::vector<TokenSequence>& seqs) {
  PaddedBatch b;
  b.batch = seqs.size();
  for (const auto& s : seqs) b.len = std::max(b.len, s.size());
  b.ids.assign(b.batch * b.len, special::kPad);
  b.valid.assign(b.batch * b.len, 0);
  b.positions.resize(b.batch * b.len);
  for (std::size_t i = 0; i < b.batch; ++i) {
    for (std::size_t t = 0; t < seqs[i].size(); ++t) {
      b.ids[i * b.len + t] = seqs[i][t];
      b.valid[i * b.len + t] = seqs[i][t] != special::kPad;
    }
    for (std::size_t t = 0; t < b.len; ++t) b.positions[i * b.len + t] = static_cast<int>(t);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Forward passes

inline Tensor embed(const Tensor& word_embeddings, const EmbeddingParams& emb,
                    const ModelConfig& cfg, const PaddedBatch& b, const ForwardContext& ctx) {
  if (b.len > cfg.max_len)
    throw ModelError("sequence of length " + std::to_string(b.len) + " exceeds max_len " +
                     std::to_string(cfg.max_len));
  for (int p : b.positions)
    if (p < 0 || static_cast<std::size_t>(p) >= cfg.max_len)
      throw ModelError("position id " + std::to_string(p) + " outside [0, max_len)");
  Tensor x = add(embedding(word_embeddings, b.ids), embedding(emb.position, b.positions));
  return ctx.drop(emb.norm(x, cfg.layer_norm_eps), cfg.dropout_rate);
}

inline Tensor attention_block(const Tensor& xq, const Tensor& xkv, const AttentionParams& p,
                              const AttentionLayout& lay) {
  Tensor q = p.query(xq);
  Tensor k = p.key(xkv);
  Tensor v = p.value(xkv);
  return p.output(multi_head_attention(q, k, v, lay));
}

inline Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
  return p.out(gelu(p.in(x)));
}

/// Bidirectional encoder over a padded batch → [batch*len, hidden].
/// Padding keys are masked out of attention.
inline Tensor encoder_forward(const Tensor& word_embeddings, const EncoderStack& enc,
                              const ModelConfig& cfg, const PaddedBatch& b,
                              const ForwardContext& ctx = {}) {
  if (b.batch == 0 || b.len == 0) throw ModelError("encoder input is empty");
  Tensor x = embed(word_embeddings, enc.embeddings, cfg, b, ctx);
  AttentionLayout lay{b.batch, b.len, b.len, cfg.num_heads, false, b.valid};
  const double p = cfg.dropout_rate, eps = cfg.layer_norm_eps;
  for (const auto& layer : enc.layers) {
    Tensor a = attention_block(x, x, layer.attn, lay);
    x = layer.attn_norm(add(x, ctx.drop(a, p)), eps);
    Tensor f = feed_forward(x, layer.ffn);
    x = layer.ffn_norm(add(x, ctx.drop(f, p)), eps);
  }
  return x;
}

/// Encoder states handed to the decoder.
struct EncoderOutput {
  Tensor states;                    // [batch*len, hidden]
  std::size_t batch = 0, len = 0;
  std::vector<std::uint8_t> valid;  // batch*len
};

/// Causal decoder with cross-attention → hidden states [batch*len, hidden].
inline Tensor decoder_hidden(const Tensor& word_embeddings, const DecoderStack& dec,
                             const ModelConfig& cfg, const PaddedBatch& tgt,
                             const EncoderOutput& enc, const ForwardContext& ctx = {}) {
  if (enc.len == 0 || enc.batch == 0 || !enc.states.defined() || enc.states.rows() == 0)
    throw ModelError("decoder requires non-empty encoder states");
  if (enc.batch != tgt.batch)
    throw ModelError("decoder batch " + std::to_string(tgt.batch) + " does not match encoder batch " +
                     std::to_string(enc.batch));
  if (tgt.len == 0) throw ModelError("decoder input is empty");
  Tensor x = embed(word_embeddings, dec.embeddings, cfg, tgt, ctx);
  AttentionLayout self_lay{tgt.batch, tgt.len, tgt.len, cfg.num_heads, true, {}};
  AttentionLayout cross_lay{tgt.batch, tgt.len, enc.len, cfg.num_heads, false, enc.valid};
  const double p = cfg.dropout_rate, eps = cfg.layer_norm_eps;
  for (const auto& layer : dec.layers) {
    Tensor a = attention_block(x, x, layer.self_attn, self_lay);
    x = layer.self_attn_norm(add(x, ctx.drop(a, p)), eps);
    Tensor c = attention_block(x, enc.states, layer.cross_attn, cross_lay);
    x = layer.cross_attn_norm(add(x, ctx.drop(c, p)), eps);
    Tensor f = feed_forward(x, layer.ffn);
    x = layer.ffn_norm(add(x, ctx.drop(f, p)), eps);
  }
  return x;
}

/// Tied output projection: hidden · Eᵀ + bias.
inline Tensor output_logits(const Tensor& hidden, const Tensor& word_embeddings, const Tensor& bias) {
  return add_bias(matmul_nt(hidden, word_embeddings), bias);
}

// ---------------------------------------------------------------------------
// Models

/// Encoder-only network: the pretraining donor and the classifier body.
class EncoderModel {
 public:
  ModelConfig config;
  Tensor word_embeddings;
  EncoderStack encoder;

  static EncoderModel skeleton(const ModelConfig& cfg) {
    cfg.validate();
    return {cfg, Tensor::zeros({cfg.vocab_size, cfg.hidden_dim}, true), EncoderStack::zeros(cfg)};
  }

  static EncoderModel init(const ModelConfig& cfg, std::uint64_t seed) {
    auto m = skeleton(cfg);
    std::mt19937_64 rng(seed);
    m.visit([&](const std::string& path, Tensor& t) { init_parameter(path, t, cfg.init_std, rng); });
    return m;
  }

  template <class F>
  void visit(F&& f) {
    f(std::string("shared.word_embeddings"), word_embeddings);
    encoder.visit("encoder", f);
  }

  std::vector<Tensor> parameters() {
    std::vector<Tensor> out;
    visit([&](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
  }

  Tensor forward(const PaddedBatch& b, const ForwardContext& ctx = {}) const {
    return encoder_forward(word_embeddings, encoder, config, b, ctx);
  }

  /// Single-sequence forward → [len, hidden]; positions default to 0..len-1.
  Tensor forward(const TokenSequence& ids, const std::vector<int>& positions = {}) const {
    if (ids.size() > config.max_len)
      throw ModelError("sequence of length " + std::to_string(ids.size()) + " exceeds max_len " +
                       std::to_string(config.max_len));
    auto b = pad_batch({ids});
    if (!positions.empty()) {
      if (positions.size() != ids.size()) throw ModelError("position ids must match sequence length");
      b.positions = positions;
    }
    return forward(b);
  }
};

/// Encoder-decoder ("BERT2BERT" when warm-started).
class Seq2SeqModel {
 public:
  ModelConfig config;
  Tensor word_embeddings;
  EncoderStack encoder;
  DecoderStack decoder;

  static Seq2SeqModel skeleton(const ModelConfig& cfg) {
    cfg.validate();
    return {cfg, Tensor::zeros({cfg.vocab_size, cfg.hidden_dim}, true), EncoderStack::zeros(cfg),
            DecoderStack::zeros(cfg)};
  }

  /// Cold start: every parameter freshly drawn.
  static Seq2SeqModel init(const ModelConfig& cfg, std::uint64_t seed) {
    auto m = skeleton(cfg);
    std::mt19937_64 rng(seed);
    m.visit([&](const std::string& path, Tensor& t) { init_parameter(path, t, cfg.init_std, rng); });
    return m;
  }

  template <class F>
  void visit(F&& f) {
    f(std::string("shared.word_embeddings"), word_embeddings);
    encoder.visit("encoder", f);
    decoder.visit("decoder", f);
  }

  std::vector<Tensor> parameters() {
    std::vector<Tensor> out;
    visit([&](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
  }

  EncoderOutput encode(const PaddedBatch& src, const ForwardContext& ctx = {}) const {
    return {encoder_forward(word_embeddings, encoder, config, src, ctx), src.batch, src.len, src.valid};
  }

  Tensor decode_hidden(const PaddedBatch& tgt, const EncoderOutput& enc,
                       const ForwardContext& ctx = {}) const {
    return decoder_hidden(word_embeddings, decoder, config, tgt, enc, ctx);
  }

  /// Vocabulary logits [batch*len, V] for decoder inputs `tgt`.
  Tensor decode(const PaddedBatch& tgt, const EncoderOutput& enc, const ForwardContext& ctx = {}) const {
    return output_logits(decode_hidden(tgt, enc, ctx), word_embeddings, decoder.output_bias);
  }

  Tensor encoder_forward_single(const TokenSequence& ids) const {
    return encode(pad_batch({ids})).states;
  }

  /// Logits [len(target), V] for one target prefix against one source.
  Tensor decoder_forward(const TokenSequence& target_ids, const EncoderOutput& enc) const {
    if (target_ids.size() > config.max_len)
      throw ModelError("target of length " + std::to_string(target_ids.size()) +
                       " exceeds max_len " + std::to_string(config.max_len));
    return decode(pad_batch({target_ids}), enc);
  }
};

/// Per-parameter path and shape, in manifest order.
using Manifest = std::vector<std::pair<std::string, Shape>>;

enum class ModelKind { Encoder, Seq2Seq, Classifier };

inline std::string_view kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Encoder: return "encoder";
    case ModelKind::Seq2Seq: return "seq2seq";
    case ModelKind::Classifier: return "classifier";
  }
  return "?";
}

inline ModelKind parse_kind(std::string_view s) {
  if (s == "encoder") return ModelKind::Encoder;
  if (s == "seq2seq") return ModelKind::Seq2Seq;
  if (s == "classifier") return ModelKind::Classifier;
  throw ModelError("unknown checkpoint kind '" + std::string(s) + "'");
}

inline constexpr std::size_t kClassifierClasses = 6;

inline Manifest architecture_manifest(ModelKind kind, const ModelConfig& cfg) {
  Manifest m;
  auto rec = [&](const std::string& path, Tensor& t) { m.emplace_back(path, t.shape()); };
  if (kind == ModelKind::Seq2Seq) {
    Seq2SeqModel::skeleton(cfg).visit(rec);
  } else {
    EncoderModel::skeleton(cfg).visit(rec);
    if (kind == ModelKind::Classifier) {
      m.emplace_back("head.weight", Shape{cfg.hidden_dim, kClassifierClasses});
      m.emplace_back("head.bias", Shape{kClassifierClasses});
    }
  }
  return m;
}

/// Closed-form parameter count (documented in the README).
inline std::size_t parameter_count(ModelKind kind, const ModelConfig& c) {
  const std::size_t V = c.vocab_size, H = c.hidden_dim, F = c.ffn_dim, P = c.max_len, L = c.num_layers;
  const std::size_t attn = 4 * (H * H + H);
  const std::size_t ffn = H * F + F + F * H + H;
  const std::size_t norm = 2 * H;
  const std::size_t emb = P * H + norm;
  const std::size_t enc_layer = attn + norm + ffn + norm;
  const std::size_t dec_layer = 2 * (attn + norm) + ffn + norm;
  std::size_t n = V * H + emb + L * enc_layer;
  if (kind == ModelKind::Seq2Seq) n += emb + L * dec_layer + V;
  if (kind == ModelKind::Classifier) n += H * kClassifierClasses + kClassifierClasses;
  return n;
}

}  // namespace b2b
