#pragma once

// Six-way emotion-group classifier: the donor encoder with a linear head on
// the [CLS] state.

#include <array>
#include <cmath>
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

class ClassifierModel {
 public:
  ModelConfig config;
  EncoderModel body;
  Tensor head_weight;  // [hidden, 6]
  Tensor head_bias;    // [6]

  static ClassifierModel skeleton(const ModelConfig& cfg) {
    return {cfg, EncoderModel::skeleton(cfg), Tensor::zeros({cfg.hidden_dim, kClassifierClasses}, true),
            Tensor::zeros({kClassifierClasses}, true)};
  }

  /// Body copied from an encoder checkpoint, head weights drawn fresh.
  static ClassifierModel from_donor(const Checkpoint& donor, std::uint64_t seed) {
    ClassifierModel m{donor.config, encoder_from_checkpoint(donor),
                      Tensor::zeros({donor.config.hidden_dim, kClassifierClasses}, true),
                      Tensor::zeros({kClassifierClasses}, true)};
    std::mt19937_64 rng(seed);
    init_parameter("head.weight", m.head_weight, donor.config.init_std, rng);
    return m;
  }

  template <class F>
  void visit(F&& f) {
    body.visit(f);
    f(std::string("head.weight"), head_weight);
    f(std::string("head.bias"), head_bias);
  }

  std::vector<Tensor> parameters() {
    std::vector<Tensor> out;
    visit([&](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
  }

  /// Class logits [batch, 6] from the first ([CLS]) position of each row.
  Tensor logits(const PaddedBatch& b, const ForwardContext& ctx = {}) const {
    Tensor h = body.forward(b, ctx);
    std::vector<std::size_t> cls(b.batch);
    for (std::size_t i = 0; i < b.batch; ++i) cls[i] = i * b.len;
    return add_bias(matmul(gather_rows(h, cls), head_weight), head_bias);
  }
};

inline Checkpoint make_checkpoint(ClassifierModel& m) { return make_checkpoint(m, ModelKind::Classifier); }

inline ClassifierModel classifier_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != ModelKind::Classifier)
    throw ModelError("expected a classifier checkpoint, got " + std::string(kind_name(ck.kind)));
  auto m = ClassifierModel::skeleton(ck.config);
  detail::load_into(m, ck);
  return m;
}

struct ClassifierConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double warmup_fraction = 0.05;
  double clip_norm = 1.0;
  std::uint64_t seed = 42;
};

struct ClassifierLogRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct ClassifierResult {
  ClassifierModel model;  // best validation accuracy
  std::vector<ClassifierLogRow> trace;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
};

struct EmotionPrediction {
  EmotionGroup group = EmotionGroup::Joy;
  double probability = 0.0;
  std::array<double, kNumGroups> probs{};
};

/// Argmax with ties resolved to the lowest index.
inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::vector<EmotionPrediction> predict_emotions(const std::vector<std::string>& utterances,
                                                       const ClassifierModel& clf, const Vocab& vocab,
                                                       std::size_t batch_size = 32) {
  NoGradGuard ng;
  std::vector<EmotionPrediction> out;
  out.reserve(utterances.size());
  for (std::size_t i = 0; i < utterances.size(); i += batch_size) {
    std::vector<TokenSequence> seqs;
    for (std::size_t j = i; j < std::min(i + batch_size, utterances.size()); ++j)
      seqs.push_back(encode(utterances[j], vocab, clf.config.max_len));
    Tensor p = softmax(clf.logits(pad_batch(seqs)), 1);
    for (std::size_t r = 0; r < seqs.size(); ++r) {
      EmotionPrediction pred;
      for (std::size_t c = 0; c < kNumGroups; ++c) pred.probs[c] = p.at(r, c);
      const auto best = argmax_lowest(pred.probs);
      pred.group = kAllGroups[best];
      pred.probability = pred.probs[best];
      out.push_back(pred);
    }
  }
  return out;
}

inline EmotionPrediction predict_emotion(const std::string& utterance, const ClassifierModel& clf,
                                         const Vocab& vocab) {
  return predict_emotions({utterance}, clf, vocab).front();
}

inline double classification_accuracy(const std::vector<DialogueSample>& samples,
                                      const ClassifierModel& clf, const Vocab& vocab) {
  if (samples.empty()) return 0.0;
  std::vector<std::string> utts;
  for (const auto& s : samples) utts.push_back(s.utterance);
  const auto preds = predict_emotions(utts, clf, vocab);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) hit += preds[i].group == samples[i].emotion.group;
  return static_cast<double>(hit) / static_cast<double>(samples.size());
}

/// Share of the most frequent group; the baseline a useful classifier beats.
inline double majority_rate(const std::vector<DialogueSample>& samples) {
  if (samples.empty()) return 0.0;
  std::array<std::size_t, kNumGroups> count{};
  for (const auto& s : samples) ++count[static_cast<std::size_t>(s.emotion.group)];
  return static_cast<double>(*std::max_element(count.begin(), count.end())) /
         static_cast<double>(samples.size());
}

/// Cross-entropy fine-tuning of the donor body plus head; keeps the epoch
/// with the best validation accuracy (first one on ties).
inline ClassifierResult train_classifier(const std::vector<DialogueSample>& train,
                                         const std::vector<DialogueSample>& val, const Vocab& vocab,
                                         const Checkpoint& donor, const ClassifierConfig& cc,
                                         const std::function<void(const ClassifierLogRow&)>& on_log = {}) {
  if (train.empty()) throw ContractError("train_classifier needs training samples");
  if (cc.epochs < 1 || cc.batch_size < 1) throw std::invalid_argument("epochs and batch_size must be >= 1");
  if (donor.config.vocab_size != vocab.size())
    throw ModelError("donor vocab_size " + std::to_string(donor.config.vocab_size) +
                     " does not match tokenizer vocabulary of " + std::to_string(vocab.size()));
  auto model = ClassifierModel::from_donor(donor, mix_seed(cc.seed, 3));
  const auto& cfg = model.config;

  std::vector<TokenSequence> enc;
  std::vector<int> labels;
  for (const auto& s : train) {
    enc.push_back(encode(s.utterance, vocab, cfg.max_len));
    labels.push_back(static_cast<int>(s.emotion.group));
  }

  auto params = model.parameters();
  auto adam = make_adam(params, cc.learning_rate);
  std::mt19937_64 order_rng(mix_seed(cc.seed, 2));
  std::mt19937_64 dropout_rng(mix_seed(cc.seed, 1));
  ForwardContext ctx{true, &dropout_rng};
  const std::size_t steps_per_epoch = (enc.size() + cc.batch_size - 1) / cc.batch_size;
  const std::size_t total = steps_per_epoch * cc.epochs;

  ClassifierResult res{model, {}, 0, -1.0};
  std::optional<Checkpoint> best;
  std::vector<std::size_t> order(enc.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cc.epochs; ++epoch) {
    shuffle_indices(order, order_rng);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < order.size(); i += cc.batch_size) {
      std::vector<TokenSequence> seqs;
      std::vector<int> y;
      for (std::size_t j = i; j < std::min(i + cc.batch_size, order.size()); ++j) {
        seqs.push_back(enc[order[j]]);
        y.push_back(labels[order[j]]);
      }
      zero_grad(params);
      Tensor loss = masked_nll(model.logits(pad_batch(seqs), ctx), y, [](int) { return false; });
      const double lv = loss.item();
      if (!std::isfinite(lv))
        throw DivergenceError("non-finite classifier loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step + 1));
      loss.backward();
      clip_grad_norm(params, cc.clip_norm);
      adam.learning_rate = warmup_lr(cc.learning_rate, step, total, cc.warmup_fraction);
      adam_step(params, adam);
      ++step;
      loss_sum += lv * static_cast<double>(y.size());
    }
    ClassifierLogRow row{epoch, loss_sum / static_cast<double>(enc.size()),
                         val.empty() ? 0.0 : classification_accuracy(val, model, vocab)};
    if (on_log) on_log(row);
    res.trace.push_back(row);
    if (val.empty() || row.val_accuracy > res.best_val_accuracy) {
      res.best_val_accuracy = row.val_accuracy;
      res.best_epoch = epoch;
      best = make_checkpoint(model);
    }
  }
  res.model = classifier_from_checkpoint(*best);
  return res;
}

}  // namespace b2b
