#pragma once

// Top-K sampling generation and perplexity.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "b2b/common.hpp"
#include "b2b/model.hpp"
#include "b2b/tokenizer.hpp"
#include "b2b/train.hpp"

namespace b2b {

struct GenerationConfig {
  std::size_t k = 40;
  std::size_t max_len = 150;  // generated tokens, [SEP] excluded
  double temperature = 1.0;
  std::uint64_t seed = 42;

  void validate() const {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  }
};

/// Uniform draw in [0, 1) from the top 53 bits.
template <class Rng>
double unit_draw(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Keeps the k most probable ids (lower id first among equal
/// probabilities), renormalises and samples. k = 1 is argmax with no draw.
template <class Rng>
int top_k_sample(std::span<const double> probs, std::size_t k, Rng& rng) {
  if (probs.empty()) throw std::invalid_argument("top_k_sample: empty distribution");
  if (k < 1) throw std::invalid_argument("top_k_sample: k must be >= 1");
  k = std::min(k, probs.size());
  if (k == 1) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[best]) best = i;
    return static_cast<int>(best);
  }
  std::vector<int> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto before = [&](int a, int b) { return probs[a] > probs[b] || (probs[a] == probs[b] && a < b); };
  if (k < idx.size()) std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), before);
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), before);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += probs[idx[i]];
  if (!(total > 0.0)) return idx[0];
  const double u = unit_draw(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    acc += probs[idx[i]];
    if (u < acc) return idx[i];
  }
  return idx[k - 1];
}

inline std::vector<double> softmax_row(std::span<const double> logits, double temperature) {
  std::vector<double> p(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v / temperature);
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] / temperature - mx);
  for (double& v : p) v /= z;
  return p;
}

/// Vocabulary logits for the next token after `prefix`: the full prefix is
/// re-run and only the last row is projected.
inline std::vector<double> next_token_logits(const Seq2SeqModel& model, const EncoderOutput& enc,
                                             const TokenSequence& prefix) {
  NoGradGuard ng;
  Tensor h = model.decode_hidden(pad_batch({prefix}), enc);
  Tensor last = gather_rows(h, std::vector<std::size_t>{prefix.size() - 1});
  auto v = output_logits(last, model.word_embeddings, model.decoder.output_bias).values();
  return {v.begin(), v.end()};
}

struct Generation {
  TokenSequence ids;  // generated ids after [CLS], up to but excluding [SEP]
  std::string text;   // decoded, special-free
};

/// Autoregressive sampling from [CLS] until [SEP] or the length bound.
template <class Rng>
Generation generate_ids(const TokenSequence& source, const Seq2SeqModel& model, const Vocab& vocab,
                        const GenerationConfig& g, Rng& rng) {
  g.validate();
  NoGradGuard ng;
  const auto enc = model.encode(pad_batch({source}));
  TokenSequence prefix{special::kCls};
  Generation out;
  const std::size_t limit = std::min(g.max_len, model.config.max_len - 1);
  while (out.ids.size() < limit) {
    const auto p = softmax_row(next_token_logits(model, enc, prefix), g.temperature);
    const int tok = top_k_sample(p, g.k, rng);
    if (tok == special::kSep) break;
    out.ids.push_back(tok);
    prefix.push_back(tok);
  }
  out.text = decode(out.ids, vocab);
  return out;
}

inline Generation generate(const std::string& source_text, const Seq2SeqModel& model, const Vocab& vocab,
                           const GenerationConfig& g) {
  std::mt19937_64 rng(g.seed);
  return generate_ids(encode(source_text, vocab, model.config.max_len), model, vocab, g, rng);
}

/// Seed for sample `index` of a run seeded with `seed`; serial and parallel
/// evaluation agree because each sample owns its stream.
inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) { return mix_seed(seed, index); }

inline std::vector<Generation> generate_all(const std::vector<std::string>& sources, const Seq2SeqModel& model,
                                            const Vocab& vocab, const GenerationConfig& g) {
  std::vector<Generation> out;
  out.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    auto gi = g;
    gi.seed = sample_seed(g.seed, i);
    out.push_back(generate(sources[i], model, vocab, gi));
  }
  return out;
}

/// PAD, CLS and SEP are left out of perplexity token counts.
inline bool ppl_excluded(int id) {
  return id == special::kPad || id == special::kCls || id == special::kSep;
}

inline double perplexity_from(const NllTotals& t) {
  if (t.count == 0) throw ContractError("perplexity: no target tokens left after masking");
  return std::exp(t.sum / static_cast<double>(t.count));
}

/// exp(total NLL / token count) over target tokens not rejected by `ignored`.
inline double perplexity(const Seq2SeqModel& model, const std::vector<EncodedPair>& pairs,
                         const std::function<bool(int)>& ignored = ppl_excluded) {
  if (pairs.empty()) throw ContractError("perplexity needs at least one pair");
  return perplexity_from(seq2seq_totals(model, pairs, ignored));
}

}  // namespace b2b
