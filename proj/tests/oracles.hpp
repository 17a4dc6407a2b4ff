#pragma once

// Reference implementations used to cross-check the library. They are kept
// deliberately naive and share no code with what they check.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace b2b::testing {

/// Grouped emotion table transcribed label by label (capitalised as printed).
inline const std::vector<std::pair<std::string, std::string>>& emotion_table() {
  static const std::vector<std::pair<std::string, std::string>> t = {
      {"Excited", "joy"},        {"Proud", "joy"},         {"Grateful", "joy"},
      {"Hopeful", "joy"},        {"Confident", "joy"},     {"Joyful", "joy"},
      {"Content", "joy"},        {"Prepared", "joy"},      {"Anticipating", "joy"},
      {"Caring", "love"},        {"Sentimental", "love"},  {"Trusting", "love"},
      {"Faithful", "love"},      {"Nostalgic", "love"},    {"Surprised", "surprise"},
      {"Impressed", "surprise"}, {"Sad", "sadness"},       {"Lonely", "sadness"},
      {"Guilty", "sadness"},     {"Disappointed", "sadness"}, {"Devastated", "sadness"},
      {"Embarrassed", "sadness"}, {"Ashamed", "sadness"},  {"Angry", "anger"},
      {"Annoyed", "anger"},      {"Furious", "anger"},     {"Disgusted", "anger"},
      {"Jealous", "anger"},      {"Afraid", "fear"},       {"Terrified", "fear"},
      {"Anxious", "fear"},       {"Apprehensive", "fear"},
  };
  return t;
}

/// BLEU-4 by explicit enumeration: every candidate n-gram is counted by
/// scanning the candidate and the reference, clipped per sentence.
inline double brute_force_bleu(const std::vector<std::vector<std::string>>& cands,
                               const std::vector<std::vector<std::string>>& refs) {
  double m[4] = {0, 0, 0, 0}, c[4] = {0, 0, 0, 0};
  double clen = 0, rlen = 0;
  auto count_in = [](const std::vector<std::string>& s, const std::vector<std::string>& g) {
    double k = 0;
    for (std::size_t i = 0; i + g.size() <= s.size(); ++i) {
      bool eq = true;
      for (std::size_t j = 0; j < g.size(); ++j) eq = eq && s[i + j] == g[j];
      k += eq;
    }
    return k;
  };
  for (std::size_t s = 0; s < cands.size(); ++s) {
    clen += static_cast<double>(cands[s].size());
    rlen += static_cast<double>(refs[s].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      std::vector<std::vector<std::string>> seen;
      for (std::size_t i = 0; i + n <= cands[s].size(); ++i) {
        std::vector<std::string> g(cands[s].begin() + static_cast<long>(i), cands[s].begin() + static_cast<long>(i + n));
        c[n - 1] += 1;
        if (std::find(seen.begin(), seen.end(), g) != seen.end()) continue;
        seen.push_back(g);
        m[n - 1] += std::min(count_in(cands[s], g), count_in(refs[s], g));
      }
    }
  }
  if (clen == 0 || m[0] == 0) return 0.0;
  double lp = std::log(m[0] / c[0]);
  for (int n = 1; n < 4; ++n) lp += std::log((m[n] + 1) / (c[n] + 1));
  const double bp = clen > rlen ? 1.0 : std::exp(1.0 - rlen / clen);
  return 100.0 * bp * std::exp(lp / 4.0);
}

}  // namespace b2b::testing
