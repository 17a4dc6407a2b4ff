#pragma once

// Empathetic-dialogue corpus: emotion grouping, CSV ingestion, seeded
// splitting and the emotion-prepend transform.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "b2b/tokenizer.hpp"

namespace b2b {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Primary emotion groups, in classifier/class-index order.
enum class EmotionGroup : int { Joy = 0, Love, Surprise, Sadness, Anger, Fear };

inline constexpr std::size_t kNumGroups = 6;

inline constexpr std::array<EmotionGroup, kNumGroups> kAllGroups = {
    EmotionGroup::Joy, EmotionGroup::Love, EmotionGroup::Surprise,
    EmotionGroup::Sadness, EmotionGroup::Anger, EmotionGroup::Fear};

inline std::string_view group_name(EmotionGroup g) {
  static constexpr std::array<std::string_view, kNumGroups> names = {
      "joy", "love", "surprise", "sadness", "anger", "fear"};
  return names[static_cast<std::size_t>(g)];
}

/// The reserved vocabulary token for a group, e.g. "<joy>".
inline std::string_view group_token(EmotionGroup g) {
  return special::kTokens[special::kFirstEmotion + static_cast<std::size_t>(g)];
}

inline int group_token_id(EmotionGroup g) { return special::kFirstEmotion + static_cast<int>(g); }

inline std::optional<EmotionGroup> parse_group(std::string_view name) {
  std::string lower;
  for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto g : kAllGroups)
    if (group_name(g) == lower) return g;
  return std::nullopt;
}

struct FineEmotion {
  std::string_view name;
  EmotionGroup group;
};

// The 32 fine labels of the corpus and their primary group.
inline constexpr std::array<FineEmotion, 32> kFineEmotions = {{
    {"excited", EmotionGroup::Joy},        {"proud", EmotionGroup::Joy},
    {"grateful", EmotionGroup::Joy},       {"hopeful", EmotionGroup::Joy},
    {"confident", EmotionGroup::Joy},      {"joyful", EmotionGroup::Joy},
    {"content", EmotionGroup::Joy},        {"prepared", EmotionGroup::Joy},
    {"anticipating", EmotionGroup::Joy},   {"caring", EmotionGroup::Love},
    {"sentimental", EmotionGroup::Love},   {"trusting", EmotionGroup::Love},
    {"faithful", EmotionGroup::Love},      {"nostalgic", EmotionGroup::Love},
    {"surprised", EmotionGroup::Surprise}, {"impressed", EmotionGroup::Surprise},
    {"sad", EmotionGroup::Sadness},        {"lonely", EmotionGroup::Sadness},
    {"guilty", EmotionGroup::Sadness},     {"disappointed", EmotionGroup::Sadness},
    {"devastated", EmotionGroup::Sadness}, {"embarrassed", EmotionGroup::Sadness},
    {"ashamed", EmotionGroup::Sadness},    {"angry", EmotionGroup::Anger},
    {"annoyed", EmotionGroup::Anger},      {"furious", EmotionGroup::Anger},
    {"disgusted", EmotionGroup::Anger},    {"jealous", EmotionGroup::Anger},
    {"afraid", EmotionGroup::Fear},        {"terrified", EmotionGroup::Fear},
    {"anxious", EmotionGroup::Fear},       {"apprehensive", EmotionGroup::Fear},
}};

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Case-insensitive, whitespace-trimmed lookup of a fine label's group.
inline std::optional<EmotionGroup> try_group_emotion(std::string_view fine) {
  std::string key;
  for (char c : trim(fine)) key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (const auto& f : kFineEmotions)
    if (f.name == key) return f.group;
  return std::nullopt;
}

inline EmotionGroup group_emotion(std::string_view fine) {
  if (auto g = try_group_emotion(fine)) return *g;
  throw DatasetError("unknown emotion label '" + std::string(fine) + "'");
}

struct EmotionLabel {
  std::string fine;
  EmotionGroup group;
};

struct DialogueSample {
  EmotionLabel emotion;
  std::string utterance;
  std::string response;
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

/// RFC 4180 style reader; fields may be quoted and span lines.
class DelimitedReader {
 public:
  DelimitedReader(std::istream& is, char delim) : is_(is), delim_(delim) {}

  /// Next record, or nullopt at end of input. `line` receives the 1-based
  /// line on which the record starts.
  std::optional<std::vector<std::string>> next(std::size_t& line) {
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false, any = false;
    line = line_ + 1;
    int c;
    while ((c = is_.get()) != EOF) {
      any = true;
      const char ch = static_cast<char>(c);
      if (in_quotes) {
        if (ch == '"') {
          if (is_.peek() == '"') {
            field += '"';
            is_.get();
          } else {
            in_quotes = false;
          }
        } else {
          if (ch == '\n') ++line_;
          field += ch;
        }
        continue;
      }
      if (ch == '"') {
        in_quotes = true;
      } else if (ch == delim_) {
        fields.push_back(std::move(field));
        field.clear();
      } else if (ch == '\n') {
        ++line_;
        if (!field.empty() && field.back() == '\r') field.pop_back();
        fields.push_back(std::move(field));
        return fields;
      } else {
        field += ch;
      }
    }
    if (in_quotes) throw DatasetError("line " + std::to_string(line) + ": unterminated quoted field");
    if (!any) return std::nullopt;
    ++line_;
    if (!field.empty() && field.back() == '\r') field.pop_back();
    fields.push_back(std::move(field));
    return fields;
  }

 private:
  std::istream& is_;
  char delim_;
  std::size_t line_ = 0;
};

inline std::string csv_quote(const std::string& s, char delim) {
  if (s.find_first_of(std::string("\"\n\r") + delim) == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

struct LoadOptions {
  char delimiter = ',';  // '\t' for the TSV fallback
};

/// Reads `emotion,utterance,response` records (header required, any column
/// order). Empty fields or unknown labels abort with the offending line.
inline std::vector<DialogueSample> load_dataset(std::istream& is, const LoadOptions& opts = {}) {
  detail::DelimitedReader reader(is, opts.delimiter);
  std::size_t line = 0;
  auto header = reader.next(line);
  if (!header) throw DatasetError("dataset is empty (missing header)");
  std::array<std::size_t, 3> col{};
  const std::array<std::string_view, 3> want = {"emotion", "utterance", "response"};
  for (std::size_t w = 0; w < 3; ++w) {
    auto it = std::find_if(header->begin(), header->end(), [&](const std::string& h) {
      std::string t = trim(h);
      if (t.size() >= 3 && static_cast<unsigned char>(t[0]) == 0xEF) t = t.substr(3);  // UTF-8 BOM
      return t == want[w];
    });
    if (it == header->end())
      throw DatasetError("header is missing column '" + std::string(want[w]) + "'");
    col[w] = static_cast<std::size_t>(it - header->begin());
  }
  std::vector<DialogueSample> out;
  while (auto rec = reader.next(line)) {
    if (rec->size() == 1 && trim((*rec)[0]).empty()) continue;  // blank line
    if (rec->size() != header->size())
      throw DatasetError("line " + std::to_string(line) + ": expected " +
                         std::to_string(header->size()) + " fields, found " +
                         std::to_string(rec->size()));
    DialogueSample s;
    s.emotion.fine = trim((*rec)[col[0]]);
    auto g = try_group_emotion(s.emotion.fine);
    if (!g)
      throw DatasetError("line " + std::to_string(line) + ": unknown emotion label '" +
                         s.emotion.fine + "'");
    s.emotion.group = *g;
    s.utterance = trim((*rec)[col[1]]);
    s.response = trim((*rec)[col[2]]);
    if (s.utterance.empty())
      throw DatasetError("line " + std::to_string(line) + ": empty utterance");
    if (s.response.empty())
      throw DatasetError("line " + std::to_string(line) + ": empty response");
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<DialogueSample> load_dataset(const std::filesystem::path& path,
                                                const LoadOptions& opts = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open dataset " + path.string());
  return load_dataset(is, opts);
}

inline void write_dataset(std::ostream& os, const std::vector<DialogueSample>& samples) {
  os << "emotion,utterance,response\n";
  for (const auto& s : samples)
    os << detail::csv_quote(s.emotion.fine, ',') << ',' << detail::csv_quote(s.utterance, ',')
       << ',' << detail::csv_quote(s.response, ',') << '\n';
}

/// Applies a segmenter to both sides of every sample.
inline void segment_samples(std::vector<DialogueSample>& samples, const Segmenter& seg) {
  for (auto& s : samples) {
    s.utterance = seg(s.utterance);
    s.response = seg(s.response);
  }
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitConfig {
  double train_fraction = 0.90;
  double val_fraction = 0.05;
  double test_fraction = 0.05;
  std::uint64_t seed = 42;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

struct SplitSizes {
  std::size_t train, val, test;
};

/// floor(0.90 N) / floor(0.05 N) / remainder.
inline SplitSizes split_sizes(std::size_t n, const SplitConfig& cfg) {
  const double sum = cfg.train_fraction + cfg.val_fraction + cfg.test_fraction;
  if (std::abs(sum - 1.0) > 1e-9) throw DatasetError("split fractions must sum to 1");
  auto cut = [n](double f) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
  };
  SplitSizes s{cut(cfg.train_fraction), cut(cfg.val_fraction), 0};
  s.test = n - s.train - s.val;
  return s;
}

/// Seeded Fisher–Yates over indices, then contiguous cuts.
inline SplitIndices split_indices(std::size_t n, const SplitConfig& cfg) {
  if (n < 3) throw DatasetError("need at least 3 samples to split, got " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(idx[i], idx[pick(rng)]);
  }
  const auto sz = split_sizes(n, cfg);
  SplitIndices out;
  out.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(sz.train));
  out.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(sz.train),
                 idx.begin() + static_cast<std::ptrdiff_t>(sz.train + sz.val));
  out.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(sz.train + sz.val), idx.end());
  return out;
}

struct DatasetSplit {
  std::vector<DialogueSample> train, val, test;
  SplitIndices indices;
};

inline DatasetSplit split_dataset(const std::vector<DialogueSample>& samples,
                                  const SplitConfig& cfg = {}) {
  DatasetSplit d;
  d.indices = split_indices(samples.size(), cfg);
  for (auto i : d.indices.train) d.train.push_back(samples[i]);
  for (auto i : d.indices.val) d.val.push_back(samples[i]);
  for (auto i : d.indices.test) d.test.push_back(samples[i]);
  return d;
}

/// Audit files train.idx / val.idx / test.idx, one source row index per line.
inline void write_split_manifests(const std::filesystem::path& dir, const SplitIndices& s) {
  std::filesystem::create_directories(dir);
  auto dump = [&](const char* name, const std::vector<std::size_t>& v) {
    std::ofstream os(dir / name);
    if (!os) throw DatasetError("cannot write " + (dir / name).string());
    for (auto i : v) os << i << '\n';
  };
  dump("train.idx", s.train);
  dump("val.idx", s.val);
  dump("test.idx", s.test);
}

// ---------------------------------------------------------------------------
// Emotion prepend

/// "<group> utterance". Without a prediction the gold group is used, which
/// is only allowed outside the test split.
inline std::string emo_prepend(const DialogueSample& s, std::optional<EmotionGroup> predicted,
                               bool is_test) {
  if (is_test && !predicted)
    throw DatasetError("test-time emotion prepend requires a predicted emotion group");
  const EmotionGroup g = predicted.value_or(s.emotion.group);
  return std::string(group_token(g)) + " " + s.utterance;
}

/// Corpus lines (utterances and responses) for vocabulary and pretraining.
inline std::vector<std::string> corpus_lines(const std::vector<DialogueSample>& samples) {
  std::vector<std::string> lines;
  lines.reserve(samples.size() * 2);
  for (const auto& s : samples) {
    lines.push_back(s.utterance);
    lines.push_back(s.response);
  }
  return lines;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open text corpus " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);) {
    auto t = trim(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace b2b
