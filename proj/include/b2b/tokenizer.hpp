#pragma once

// Closed-vocabulary whitespace tokenizer over pre-segmented text.
//
// Segmented text marks clitics with '+': a token ending in '+' attaches to
// the following token, one starting with '+' attaches to the preceding one
// ("ب+ إبن +ت +ي" is the segmented form of "بإبنتي").

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <unistd.h>

namespace b2b {

class VocabError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace special {
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kCls = 2;
inline constexpr int kSep = 3;
inline constexpr int kMask = 4;
inline constexpr int kFirstEmotion = 5;  // <joy> .. <fear> occupy 5..10
inline constexpr int kCount = 11;

inline constexpr std::array<std::string_view, kCount> kTokens = {
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "<joy>",
    "<love>", "<surprise>", "<sadness>", "<anger>", "<fear>"};

inline constexpr bool is_special(int id) { return id >= 0 && id < kCount; }
/// Structural specials carry no text and never render.
inline constexpr bool is_structural(int id) {
  return id == kPad || id == kCls || id == kSep || id == kMask;
}
}  // namespace special

using TokenSequence = std::vector<int>;

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

class Vocab {
 public:
  /// Specials only.
  Vocab() {
    for (auto t : special::kTokens) push(std::string(t));
  }

  /// Specials followed by `tokens` in the given order.
  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (const auto& t : tokens) {
      if (v.index_.count(t)) throw VocabError("duplicate vocabulary token '" + t + "'");
      v.push(t);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& t) const { return index_.count(t) != 0; }
  int id(const std::string& t) const {
    auto it = index_.find(t);
    return it == index_.end() ? special::kUnk : it->second;
  }
  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw VocabError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(tokens_.size()));
    return tokens_[static_cast<std::size_t>(id)];
  }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

  /// One token per line; line number is the id.
  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw VocabError("cannot write vocabulary file " + path.string());
    for (const auto& t : tokens_) os << t << '\n';
  }

  static Vocab load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw VocabError("cannot read vocabulary file " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(is, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
    if (lines.size() < special::kCount) throw VocabError("vocabulary file " + path.string() + " is truncated");
    for (int i = 0; i < special::kCount; ++i)
      if (lines[static_cast<std::size_t>(i)] != special::kTokens[static_cast<std::size_t>(i)])
        throw VocabError("vocabulary file " + path.string() + ": line " + std::to_string(i + 1) +
                         " must be " + std::string(special::kTokens[static_cast<std::size_t>(i)]));
    return from_tokens({lines.begin() + special::kCount, lines.end()});
  }

 private:
  void push(std::string t) {
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Tokens with frequency >= min_freq, ordered by frequency descending then
/// lexicographically, after the 11 specials.
inline Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq) {
  std::map<std::string, std::size_t> freq;
  std::size_t total = 0;
  for (const auto& line : corpus)
    for (auto& t : split_whitespace(line)) {
      ++freq[t];
      ++total;
    }
  if (total == 0) throw VocabError("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [t, n] : freq) {
    if (n < min_freq) continue;
    bool is_special = std::find(special::kTokens.begin(), special::kTokens.end(), t) != special::kTokens.end();
    if (!is_special) kept.emplace_back(t, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [t, n] : kept) tokens.push_back(t);
  return Vocab::from_tokens(tokens);
}

/// Maps whitespace tokens to ids. With specials the result is
/// [CLS] ... [SEP], truncated so that [SEP] stays last.
inline TokenSequence encode(std::string_view text, const Vocab& vocab, std::size_t max_len,
                            bool add_specials = true) {
  if (add_specials && max_len < 2) throw std::invalid_argument("encode: max_len must be >= 2 with specials");
  TokenSequence ids;
  if (add_specials) ids.push_back(special::kCls);
  const std::size_t body = add_specials ? max_len - 2 : max_len;
  std::size_t n = 0;
  for (auto& t : split_whitespace(text)) {
    if (n++ == body) break;
    ids.push_back(vocab.id(t));
  }
  if (add_specials) ids.push_back(special::kSep);
  return ids;
}

/// Inverse of encode: structural specials are dropped and rendering stops
/// at the first [SEP].
inline std::string decode(const TokenSequence& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    const std::string& t = vocab.token(id);
    if (id == special::kSep) break;
    if (special::is_structural(id)) continue;
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

/// Re-attaches '+'-marked segments into surface words. Tokens made only of
/// '+' are literals and never glue.
inline std::string desegment(std::string_view text) {
  std::string out;
  bool glue_next = false;
  bool prev_literal = false;
  for (auto& tok : split_whitespace(text)) {
    if (tok.find_first_not_of('+') == std::string::npos) {
      if (!out.empty()) out += ' ';
      out += tok;
      glue_next = false;
      prev_literal = true;
      continue;
    }
    const bool glue_prev = tok.front() == '+';
    const std::size_t b = tok.find_first_not_of('+');
    const std::size_t e = tok.find_last_not_of('+');
    if (!out.empty() && (prev_literal || (!glue_prev && !glue_next))) out += ' ';
    prev_literal = false;
    out.append(tok, b, e - b + 1);
    glue_next = tok.back() == '+';
  }
  return out;
}

/// Text → segmented text hook. The default leaves text unchanged.
using Segmenter = std::function<std::string(const std::string&)>;

inline Segmenter identity_segmenter() {
  return [](const std::string& s) { return s; };
}

/// Runs `command` with the text on stdin and takes its stdout as the
/// segmented form (one line in, one line out).
inline Segmenter external_segmenter(std::string command) {
  return [command](const std::string& text) {
    static std::atomic<unsigned long> calls{0};
    auto tmp = std::filesystem::temp_directory_path() /
               ("b2b_seg_" + std::to_string(::getpid()) + "_" + std::to_string(calls++) + ".txt");
    {
      std::ofstream os(tmp, std::ios::binary);
      os << text << '\n';
    }
    std::string cmd = command + " < '" + tmp.string() + "'";
    std::string result;
    if (FILE* p = popen(cmd.c_str(), "r")) {
      std::array<char, 4096> buf{};
      while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) result.append(buf.data(), n);
      int rc = pclose(p);
      std::filesystem::remove(tmp);
      if (rc != 0) throw std::runtime_error("segmenter command failed: " + command);
    } else {
      std::filesystem::remove(tmp);
      throw std::runtime_error("cannot start segmenter command: " + command);
    }
    while (!result.empty() && (result.back() == '\n' || result.back() == '\r')) result.pop_back();
    return result;
  };
}

}  // namespace b2b
