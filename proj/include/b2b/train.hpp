#pragma once

// Seq2seq fine-tuning with teacher forcing and a pad-masked log-likelihood
// loss, for warm-started, cold-started and emotion-prepended variants.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "b2b/checkpoint.hpp"
#include "b2b/common.hpp"
#include "b2b/dataset.hpp"
#include "b2b/model.hpp"
#include "b2b/optim.hpp"
#include "b2b/tokenizer.hpp"

namespace b2b {

enum class Variant { Warm, Cold, WarmEmoPrepend };

inline std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Warm: return "warm";
    case Variant::Cold: return "cold";
    case Variant::WarmEmoPrepend: return "warm+emoprepend";
  }
  return "?";
}

/// Row label used in reports.
inline std::string_view variant_label(Variant v) {
  switch (v) {
    case Variant::Warm: return "BERT2BERT";
    case Variant::Cold: return "BERT2BERT-UN";
    case Variant::WarmEmoPrepend: return "BERT2BERT+EmoPrepend";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "warm") return Variant::Warm;
  if (s == "cold") return Variant::Cold;
  if (s == "warm+emoprepend" || s == "emoprepend") return Variant::WarmEmoPrepend;
  throw std::invalid_argument("unknown variant '" + std::string(s) + "' (warm, cold, warm+emoprepend)");
}

inline bool uses_donor(Variant v) { return v != Variant::Cold; }

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double warmup_fraction = 0.05;
  double clip_norm = 1.0;
  std::uint64_t seed = 42;
  Variant variant = Variant::Warm;
  std::size_t bucket_batches = 20;  // batches per length-sorted window

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Data

struct EncodedPair {
  TokenSequence source;  // [CLS] utterance [SEP]
  TokenSequence target;  // [CLS] response [SEP]
};

inline EncodedPair encode_pair(const std::string& source_text, const std::string& response,
                               const Vocab& vocab, std::size_t max_len) {
  // Decoder inputs drop the final target token, so targets may be one longer.
  return {encode(source_text, vocab, max_len), encode(response, vocab, max_len + 1)};
}

/// Source text for a sample under a variant. EmoPrepend uses the gold group
/// unless a prediction is supplied.
inline std::string source_text(const DialogueSample& s, Variant v,
                               std::optional<EmotionGroup> predicted = std::nullopt,
                               bool is_test = false) {
  if (v != Variant::WarmEmoPrepend) return s.utterance;
  return emo_prepend(s, predicted, is_test);
}

inline std::vector<EncodedPair> encode_samples(const std::vector<DialogueSample>& samples,
                                               const Vocab& vocab, std::size_t max_len, Variant v) {
  std::vector<EncodedPair> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(encode_pair(source_text(s, v), s.response, vocab, max_len));
  return out;
}

/// Teacher-forcing batch: decoder inputs are target[0..n-2], labels are
/// target[1..n-1]; both right-padded with [PAD].
struct Seq2SeqBatch {
  PaddedBatch source;
  PaddedBatch decoder_input;
  std::vector<int> labels;  // decoder_input.batch * decoder_input.len
};

inline Seq2SeqBatch make_batch(const std::vector<const EncodedPair*>& pairs) {
  std::vector<TokenSequence> src, dec, lab;
  for (const auto* p : pairs) {
    if (p->target.size() < 2) throw ContractError("target needs at least two tokens");
    src.push_back(p->source);
    dec.emplace_back(p->target.begin(), p->target.end() - 1);
    lab.emplace_back(p->target.begin() + 1, p->target.end());
  }
  Seq2SeqBatch b{pad_batch(src), pad_batch(dec), {}};
  b.labels = pad_batch(lab).ids;
  return b;
}

inline Seq2SeqBatch make_batch(const std::vector<EncodedPair>& pairs) {
  std::vector<const EncodedPair*> ptrs;
  for (const auto& p : pairs) ptrs.push_back(&p);
  return make_batch(ptrs);
}

/// Mean negative log-likelihood over non-pad target positions.
inline Tensor seq2seq_loss(const Tensor& logits, std::span<const int> target_ids, int pad_id = special::kPad) {
  return masked_nll(logits, target_ids, [pad_id](int id) { return id == pad_id; });
}

/// Length-bucketed batch order for one epoch: shuffle, sort windows of
/// `bucket_batches` batches by length, cut, then shuffle the batch order.
template <class Rng>
std::vector<std::vector<std::size_t>> bucketed_batches(const std::vector<EncodedPair>& data,
                                                       std::size_t batch_size,
                                                       std::size_t bucket_batches, Rng& rng) {
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  shuffle_indices(idx, rng);
  const std::size_t window = batch_size * std::max<std::size_t>(bucket_batches, 1);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t w = 0; w < idx.size(); w += window) {
    auto first = idx.begin() + static_cast<std::ptrdiff_t>(w);
    auto last = idx.begin() + static_cast<std::ptrdiff_t>(std::min(w + window, idx.size()));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return data[a].source.size() + data[a].target.size() < data[b].source.size() + data[b].target.size();
    });
    for (auto it = first; it < last; it += static_cast<std::ptrdiff_t>(std::min<std::size_t>(batch_size, static_cast<std::size_t>(last - it))))
      batches.emplace_back(it, it + static_cast<std::ptrdiff_t>(std::min<std::size_t>(batch_size, static_cast<std::size_t>(last - it))));
  }
  std::vector<std::size_t> order(batches.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_indices(order, rng);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(batches.size());
  for (auto i : order) out.push_back(std::move(batches[i]));
  return out;
}

/// Summed NLL / token count over pairs in eval mode.
inline NllTotals seq2seq_totals(const Seq2SeqModel& model, const std::vector<EncodedPair>& pairs,
                                const std::function<bool(int)>& ignored, std::size_t batch_size = 32) {
  NoGradGuard ng;
  NllTotals total;
  for (std::size_t i = 0; i < pairs.size(); i += batch_size) {
    std::vector<const EncodedPair*> chunk;
    for (std::size_t j = i; j < std::min(i + batch_size, pairs.size()); ++j) chunk.push_back(&pairs[j]);
    auto b = make_batch(chunk);
    auto logits = model.decode(b.decoder_input, model.encode(b.source));
    auto t = nll_totals(logits, b.labels, ignored);
    total.sum += t.sum;
    total.count += t.count;
  }
  return total;
}

inline double pad_only_loss(const Seq2SeqModel& model, const std::vector<EncodedPair>& pairs) {
  auto t = seq2seq_totals(model, pairs, [](int id) { return id == special::kPad; });
  if (t.count == 0) throw ContractError("no target tokens to evaluate");
  return t.sum / static_cast<double>(t.count);
}

// ---------------------------------------------------------------------------
// Fine-tuning

struct TrainLogRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::string split;
  double loss = 0.0;
  double ppl = 0.0;
};

inline void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "epoch,step,split,loss,ppl\n";
  for (const auto& r : log)
    os << r.epoch << ',' << r.step << ',' << r.split << ',' << fmt_double(r.loss) << ','
       << fmt_double(r.ppl) << '\n';
}

struct FinetuneResult {
  Seq2SeqModel model;  // best-validation parameters
  std::vector<TrainLogRow> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/// Initial parameters for a variant: warm_start from the donor, or a fresh
/// draw for the cold variant.
inline Seq2SeqModel initial_model(const ModelConfig& cfg, const std::optional<Checkpoint>& donor,
                                  const TrainConfig& tc) {
  if (uses_donor(tc.variant) != donor.has_value())
    throw ContractError(std::string("variant ") + std::string(variant_name(tc.variant)) +
                        (donor ? " must not be given a donor" : " requires a donor checkpoint"));
  const auto init_seed = mix_seed(tc.seed, 3);
  return donor ? warm_start(*donor, cfg, init_seed) : Seq2SeqModel::init(cfg, init_seed);
}

inline FinetuneResult finetune(const std::vector<DialogueSample>& train,
                               const std::vector<DialogueSample>& val, const Vocab& vocab,
                               ModelConfig cfg, const std::optional<Checkpoint>& donor,
                               const TrainConfig& tc,
                               const std::function<void(const TrainLogRow&)>& on_log = {}) {
  tc.validate();
  if (train.empty()) throw ContractError("finetune needs training pairs");
  cfg.vocab_size = vocab.size();
  Seq2SeqModel model = initial_model(cfg, donor, tc);

  const auto train_pairs = encode_samples(train, vocab, cfg.max_len, tc.variant);
  const auto val_pairs = encode_samples(val, vocab, cfg.max_len, tc.variant);

  std::mt19937_64 order_rng(mix_seed(tc.seed, 2));
  std::mt19937_64 dropout_rng(mix_seed(tc.seed, 1));
  ForwardContext train_ctx{true, &dropout_rng};

  auto params = model.parameters();
  auto adam = make_adam(params, tc.learning_rate);
  const std::size_t steps_per_epoch = (train_pairs.size() + tc.batch_size - 1) / tc.batch_size;
  const std::size_t total_steps = steps_per_epoch * tc.epochs;

  FinetuneResult res{model, {}, 0, std::numeric_limits<double>::infinity()};
  std::optional<Checkpoint> best;
  std::size_t step = 0;
  auto emit = [&](TrainLogRow r) {
    if (on_log) on_log(r);
    res.log.push_back(std::move(r));
  };

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    double loss_tokens = 0.0;
    std::size_t tokens = 0;
    for (const auto& batch_idx : bucketed_batches(train_pairs, tc.batch_size, tc.bucket_batches, order_rng)) {
      std::vector<const EncodedPair*> chunk;
      for (auto i : batch_idx) chunk.push_back(&train_pairs[i]);
      auto b = make_batch(chunk);
      zero_grad(params);
      auto logits = model.decode(b.decoder_input, model.encode(b.source, train_ctx), train_ctx);
      auto loss = seq2seq_loss(logits, b.labels);
      const double lv = loss.item();
      if (!std::isfinite(lv))
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step + 1) + " (variant " +
                              std::string(variant_name(tc.variant)) + ")");
      loss.backward();
      clip_grad_norm(params, tc.clip_norm);
      adam.learning_rate = warmup_lr(tc.learning_rate, step, total_steps, tc.warmup_fraction);
      adam_step(params, adam);
      ++step;
      const auto n = static_cast<std::size_t>(std::count_if(
          b.labels.begin(), b.labels.end(), [](int id) { return id != special::kPad; }));
      loss_tokens += lv * static_cast<double>(n);
      tokens += n;
    }
    const double train_loss = loss_tokens / static_cast<double>(tokens);
    emit({epoch, step, "train", train_loss, std::exp(train_loss)});
    if (!val_pairs.empty()) {
      const double vl = pad_only_loss(model, val_pairs);
      if (!std::isfinite(vl))
        throw DivergenceError("non-finite validation loss after epoch " + std::to_string(epoch));
      emit({epoch, step, "val", vl, std::exp(vl)});
      if (vl < res.best_val_loss) {
        res.best_val_loss = vl;
        res.best_epoch = epoch;
        best = make_checkpoint(model);
      }
    }
  }
  if (best) {
    res.model = seq2seq_from_checkpoint(*best);
  } else {
    res.best_epoch = tc.epochs;
    res.best_val_loss = std::numeric_limits<double>::quiet_NaN();
  }
  return res;
}

}  // namespace b2b
