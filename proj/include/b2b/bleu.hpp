#pragma once

// Corpus-level BLEU-4. Unigram precision is unsmoothed; for n >= 2 both the
// clipped matches and the candidate n-gram count get +1.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "b2b/tokenizer.hpp"

namespace b2b {

using Words = std::vector<std::string>;

struct BleuStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t candidate_len = 0;
  std::size_t reference_len = 0;
};

/// Whitespace tokens with [PAD]/[CLS]/[SEP] removed.
inline Words bleu_tokens(const std::string& text) {
  Words out;
  for (auto& t : split_whitespace(text))
    if (t != "[PAD]" && t != "[CLS]" && t != "[SEP]") out.push_back(std::move(t));
  return out;
}

inline BleuStats bleu_stats(const std::vector<Words>& candidates, const std::vector<Words>& references) {
  if (candidates.size() != references.size())
    throw std::invalid_argument("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                                std::to_string(references.size()) + " references");
  if (references.empty()) throw std::invalid_argument("bleu: no references");
  BleuStats s;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto& r = references[i];
    s.candidate_len += c.size();
    s.reference_len += r.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<Words, std::size_t> ref_counts, cand_counts;
      for (std::size_t j = 0; j + n <= r.size(); ++j) ++ref_counts[Words(r.begin() + j, r.begin() + j + n)];
      for (std::size_t j = 0; j + n <= c.size(); ++j) ++cand_counts[Words(c.begin() + j, c.begin() + j + n)];
      for (const auto& [g, cnt] : cand_counts) {
        auto it = ref_counts.find(g);
        if (it != ref_counts.end()) s.matches[n - 1] += std::min(cnt, it->second);
        s.totals[n - 1] += cnt;
      }
    }
  }
  return s;
}

inline double bleu_from_stats(const BleuStats& s) {
  if (s.candidate_len == 0 || s.matches[0] == 0) return 0.0;
  double log_p = std::log(static_cast<double>(s.matches[0]) / static_cast<double>(s.totals[0]));
  for (std::size_t n = 1; n < 4; ++n)
    log_p += std::log((static_cast<double>(s.matches[n]) + 1.0) / (static_cast<double>(s.totals[n]) + 1.0));
  const double c = static_cast<double>(s.candidate_len), r = static_cast<double>(s.reference_len);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::exp(log_p / 4.0);
}

inline double bleu(const std::vector<Words>& candidates, const std::vector<Words>& references) {
  return bleu_from_stats(bleu_stats(candidates, references));
}

inline double bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  std::vector<Words> c, r;
  for (const auto& s : candidates) c.push_back(bleu_tokens(s));
  for (const auto& s : references) r.push_back(bleu_tokens(s));
  return bleu(c, r);
}

}  // namespace b2b
