#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "b2b/model.hpp"
#include "b2b/tokenizer.hpp"

namespace b2b::testing {

inline ModelConfig tiny_config(std::size_t vocab, std::size_t hidden = 16, std::size_t max_len = 24) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.hidden_dim = hidden;
  c.num_layers = 2;
  c.num_heads = 2;
  c.ffn_dim = 2 * hidden;
  c.max_len = max_len;
  c.dropout_rate = 0.0;
  return c;
}

/// [CLS] w... [SEP] with non-special ids.
inline TokenSequence random_sequence(std::mt19937_64& rng, std::size_t len, std::size_t vocab) {
  std::uniform_int_distribution<int> d(special::kCount, static_cast<int>(vocab) - 1);
  TokenSequence ids{special::kCls};
  while (ids.size() + 1 < len) ids.push_back(d(rng));
  ids.push_back(special::kSep);
  return ids;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace b2b::testing
