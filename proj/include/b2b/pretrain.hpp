#pragma once

// Masked-language-model pretraining of the encoder-only donor.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "b2b/checkpoint.hpp"
#include "b2b/common.hpp"
#include "b2b/model.hpp"
#include "b2b/optim.hpp"
#include "b2b/tokenizer.hpp"

namespace b2b {

inline constexpr int kIgnoreLabel = -1;

struct MlmBatch {
  TokenSequence input_ids;
  std::vector<int> label_ids;          // original id where selected, kIgnoreLabel elsewhere
  std::vector<std::uint8_t> attention; // 1 on non-pad positions
};

/// BERT-style 80/10/10 masking. Special tokens are never selected; random
/// replacements are drawn uniformly from the non-special ids.
template <class Rng>
MlmBatch mask_tokens(const TokenSequence& ids, double mask_rate, Rng& rng, std::size_t vocab_size) {
  if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) throw std::invalid_argument("mask_rate must be in [0, 1]");
  MlmBatch b{ids, std::vector<int>(ids.size(), kIgnoreLabel), std::vector<std::uint8_t>(ids.size())};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool has_plain = vocab_size > static_cast<std::size_t>(special::kCount);
  std::uniform_int_distribution<int> word(special::kCount,
                                          has_plain ? static_cast<int>(vocab_size) - 1 : special::kCount);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    b.attention[i] = ids[i] != special::kPad;
    if (special::is_special(ids[i])) continue;
    if (u(rng) >= mask_rate) continue;
    b.label_ids[i] = ids[i];
    const double r = u(rng);
    if (r < 0.8) {
      b.input_ids[i] = special::kMask;
    } else if (r < 0.9) {
      const int w = word(rng);
      if (has_plain) b.input_ids[i] = w;
    }
  }
  return b;
}

struct PretrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  double learning_rate = 5e-4;
  double mask_rate = 0.15;
  double warmup_fraction = 0.05;
  double clip_norm = 1.0;
  std::uint64_t seed = 42;
  std::size_t log_every = 1;
};

struct PretrainLogRow {
  std::size_t step = 0;
  double loss = 0.0;
};

struct PretrainResult {
  Checkpoint checkpoint;  // encoder only; the MLM head is dropped
  std::vector<PretrainLogRow> log;
};

inline void write_pretrain_log(const std::filesystem::path& path, const std::vector<PretrainLogRow>& log) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "step,loss\n";
  for (const auto& r : log) os << r.step << ',' << fmt_double(r.loss) << '\n';
}

/// MLM loss for one masked batch; the head is hidden·Eᵀ + bias over the
/// masked rows only.
inline Tensor mlm_loss(const EncoderModel& model, const Tensor& mlm_bias,
                       const std::vector<MlmBatch>& rows, const ForwardContext& ctx = {}) {
  std::vector<TokenSequence> inputs;
  for (const auto& r : rows) inputs.push_back(r.input_ids);
  auto pb = pad_batch(inputs);
  std::vector<std::size_t> picked;
  std::vector<int> labels;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t t = 0; t < rows[i].label_ids.size(); ++t)
      if (rows[i].label_ids[t] != kIgnoreLabel) {
        picked.push_back(i * pb.len + t);
        labels.push_back(rows[i].label_ids[t]);
      }
  if (picked.empty()) throw ContractError("MLM batch has no masked positions");
  Tensor hidden = gather_rows(model.forward(pb, ctx), picked);
  return masked_nll(output_logits(hidden, model.word_embeddings, mlm_bias), labels,
                    [](int) { return false; });
}

/// Trains an encoder from scratch on `corpus` (one pre-segmented sentence per
/// line). Sentences are visited in seeded shuffled epochs.
inline PretrainResult pretrain_mlm(const std::vector<std::string>& corpus, const Vocab& vocab,
                                   ModelConfig cfg, const PretrainConfig& pc,
                                   const std::function<void(const PretrainLogRow&)>& on_log = {}) {
  if (pc.steps < 1) throw std::invalid_argument("pretrain steps must be >= 1");
  if (pc.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  cfg.vocab_size = vocab.size();
  std::vector<TokenSequence> sentences;
  for (const auto& line : corpus) {
    auto ids = encode(line, vocab, cfg.max_len);
    if (ids.size() > 2) sentences.push_back(std::move(ids));
  }
  if (sentences.empty()) throw ContractError("pretraining corpus has no tokenizable sentences");

  auto model = EncoderModel::init(cfg, mix_seed(pc.seed, 3));
  Tensor mlm_bias = Tensor::zeros({cfg.vocab_size}, true);
  auto params = model.parameters();
  params.push_back(mlm_bias);
  auto adam = make_adam(params, pc.learning_rate);

  std::mt19937_64 order_rng(mix_seed(pc.seed, 2));
  std::mt19937_64 mask_rng(mix_seed(pc.seed, 4));
  std::mt19937_64 dropout_rng(mix_seed(pc.seed, 1));
  ForwardContext ctx{true, &dropout_rng};

  std::vector<std::size_t> order(sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();

  PretrainResult res;
  for (std::size_t step = 1; step <= pc.steps; ++step) {
    std::vector<const TokenSequence*> picked;
    std::vector<MlmBatch> rows;
    for (std::size_t j = 0; j < pc.batch_size; ++j) {
      if (cursor == order.size()) {
        shuffle_indices(order, order_rng);
        cursor = 0;
      }
      picked.push_back(&sentences[order[cursor++]]);
      rows.push_back(mask_tokens(*picked.back(), pc.mask_rate, mask_rng, cfg.vocab_size));
    }
    // Remask until at least one position is selected.
    auto any_label = [&] {
      for (const auto& r : rows)
        for (int l : r.label_ids)
          if (l != kIgnoreLabel) return true;
      return false;
    };
    while (!any_label()) {
      if (pc.mask_rate <= 0.0) throw ContractError("mask_rate 0 selects no positions to train on");
      for (std::size_t j = 0; j < rows.size(); ++j)
        rows[j] = mask_tokens(*picked[j], pc.mask_rate, mask_rng, cfg.vocab_size);
    }
    zero_grad(params);
    Tensor loss = mlm_loss(model, mlm_bias, rows, ctx);
    const double lv = loss.item();
    if (!std::isfinite(lv))
      throw DivergenceError("non-finite MLM loss at step " + std::to_string(step));
    loss.backward();
    clip_grad_norm(params, pc.clip_norm);
    adam.learning_rate = warmup_lr(pc.learning_rate, step - 1, pc.steps, pc.warmup_fraction);
    adam_step(params, adam);
    if (step == 1 || step % std::max<std::size_t>(pc.log_every, 1) == 0 || step == pc.steps) {
      PretrainLogRow row{step, lv};
      if (on_log) on_log(row);
      res.log.push_back(row);
    }
  }
  res.checkpoint = make_checkpoint(model);
  return res;
}

}  // namespace b2b
