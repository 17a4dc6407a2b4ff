#pragma once

// Checkpoint persistence and the warm-start weight mapping.
//
// On disk a checkpoint is a directory holding
//   manifest.json  {format_version, kind, config, parameters: [{path, shape, offset, count}]}
//   weights.bin    little-endian float32 values concatenated in manifest order
// and optionally vocab.txt. Values are stored narrowed to 32 bits and
// re-widened on load.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "b2b/model.hpp"
#include "b2b/tokenizer.hpp"

namespace b2b {

inline constexpr int kFormatVersion = 1;

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"hidden_dim", c.hidden_dim}, {"num_layers", c.num_layers},
          {"num_heads", c.num_heads},   {"ffn_dim", c.ffn_dim},       {"max_len", c.max_len},
          {"dropout_rate", c.dropout_rate}, {"init_std", c.init_std},
          {"layer_norm_eps", c.layer_norm_eps}};
}

/// Reads any subset of the config keys over `base`.
inline ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  auto get = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
  };
  get("vocab_size", base.vocab_size);
  get("hidden_dim", base.hidden_dim);
  get("num_layers", base.num_layers);
  get("num_heads", base.num_heads);
  get("ffn_dim", base.ffn_dim);
  get("max_len", base.max_len);
  get("dropout_rate", base.dropout_rate);
  get("init_std", base.init_std);
  get("layer_norm_eps", base.layer_norm_eps);
  return base;
}

struct Checkpoint {
  ModelKind kind = ModelKind::Seq2Seq;
  ModelConfig config;
  std::vector<std::pair<std::string, Tensor>> params;
  int format_version = kFormatVersion;

  const Tensor* find(const std::string& path) const {
    for (const auto& [p, t] : params)
      if (p == path) return &t;
    return nullptr;
  }
};

/// Every architecture path present once with the expected shape, nothing else.
inline void validate_checkpoint(const Checkpoint& ck) {
  const auto expected = architecture_manifest(ck.kind, ck.config);
  std::map<std::string, const Tensor*> have;
  for (const auto& [p, t] : ck.params) {
    if (!have.emplace(p, &t).second) throw IntegrityError("duplicate parameter " + p);
  }
  for (const auto& [path, shape] : expected) {
    auto it = have.find(path);
    if (it == have.end()) throw IntegrityError("missing parameter " + path);
    if (it->second->shape() != shape)
      throw IntegrityError("parameter " + path + " has shape " + shape_str(it->second->shape()) +
                           ", expected " + shape_str(shape));
    have.erase(it);
  }
  if (!have.empty()) throw IntegrityError("unexpected parameter " + have.begin()->first);
}

template <class Model>
Checkpoint make_checkpoint(Model& m, ModelKind kind) {
  Checkpoint ck{kind, m.config, {}, kFormatVersion};
  m.visit([&](const std::string& path, Tensor& t) { ck.params.emplace_back(path, t.detach()); });
  return ck;
}

inline Checkpoint make_checkpoint(EncoderModel& m) { return make_checkpoint(m, ModelKind::Encoder); }
inline Checkpoint make_checkpoint(Seq2SeqModel& m) { return make_checkpoint(m, ModelKind::Seq2Seq); }

namespace detail {

template <class Model>
void load_into(Model& m, const Checkpoint& ck) {
  m.visit([&](const std::string& path, Tensor& t) {
    const Tensor* src = ck.find(path);
    if (!src) throw IntegrityError("missing parameter " + path);
    if (src->shape() != t.shape())
      throw IntegrityError("parameter " + path + " has shape " + shape_str(src->shape()) +
                           ", expected " + shape_str(t.shape()));
    std::copy(src->data().begin(), src->data().end(), t.mutable_data().begin());
  });
}

}  // namespace detail

/// Encoder body of an encoder or classifier checkpoint.
inline EncoderModel encoder_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind == ModelKind::Seq2Seq)
    throw ModelError("expected an encoder checkpoint, got a seq2seq checkpoint");
  auto m = EncoderModel::skeleton(ck.config);
  detail::load_into(m, ck);
  return m;
}

inline Seq2SeqModel seq2seq_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != ModelKind::Seq2Seq)
    throw ModelError("expected a seq2seq checkpoint, got " + std::string(kind_name(ck.kind)));
  auto m = Seq2SeqModel::skeleton(ck.config);
  detail::load_into(m, ck);
  return m;
}

// ---------------------------------------------------------------------------
// Persistence

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& dir,
                            const Vocab* vocab = nullptr) {
  validate_checkpoint(ck);
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format_version"] = ck.format_version;
  manifest["kind"] = std::string(kind_name(ck.kind));
  manifest["config"] = config_to_json(ck.config);
  auto& params = manifest["parameters"] = nlohmann::json::array();
  std::ofstream ws(dir / "weights.bin", std::ios::binary);
  if (!ws) throw IntegrityError("cannot write " + (dir / "weights.bin").string());
  std::size_t offset = 0;
  for (const auto& [path, t] : ck.params) {
    params.push_back({{"path", path}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
    for (double v : t.data()) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      ws.write(reinterpret_cast<const char*>(&bits), 4);
    }
    offset += 4 * t.size();
  }
  if (!ws) throw IntegrityError("failed writing " + (dir / "weights.bin").string());
  std::ofstream ms(dir / "manifest.json", std::ios::binary);
  ms << manifest.dump(2) << '\n';
  if (vocab) vocab->save(dir / "vocab.txt");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream ms(dir / "manifest.json", std::ios::binary);
  if (!ms) throw IntegrityError("cannot read " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(ms);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("malformed manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }
  Checkpoint ck;
  ck.format_version = manifest.value("format_version", -1);
  if (ck.format_version != kFormatVersion)
    throw IntegrityError("checkpoint format_version " + std::to_string(ck.format_version) +
                         " is not supported (expected " + std::to_string(kFormatVersion) + ")");
  ck.kind = parse_kind(manifest.at("kind").get<std::string>());
  ck.config = config_from_json(manifest.at("config"));

  std::set<std::string> listed;
  for (const auto& p : manifest.at("parameters")) listed.insert(p.at("path").get<std::string>());
  for (const auto& [path, shape] : architecture_manifest(ck.kind, ck.config))
    if (!listed.count(path)) throw IntegrityError("missing parameter " + path);

  std::ifstream ws(dir / "weights.bin", std::ios::binary);
  if (!ws) throw IntegrityError("cannot read " + (dir / "weights.bin").string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(ws)), std::istreambuf_iterator<char>());
  std::size_t expected_offset = 0;
  for (const auto& p : manifest.at("parameters")) {
    const auto path = p.at("path").get<std::string>();
    const auto shape = p.at("shape").get<Shape>();
    const auto offset = p.at("offset").get<std::size_t>();
    const auto count = p.at("count").get<std::size_t>();
    if (count != numel(shape) || offset != expected_offset || offset + 4 * count > bytes.size())
      throw IntegrityError("parameter " + path + " has inconsistent offset/count in manifest");
    std::vector<double> vals(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, bytes.data() + offset + 4 * i, 4);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      vals[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    ck.params.emplace_back(path, Tensor::from(shape, std::move(vals)));
    expected_offset = offset + 4 * count;
  }
  if (expected_offset != bytes.size())
    throw IntegrityError("weights.bin holds " + std::to_string(bytes.size()) +
                         " bytes, manifest describes " + std::to_string(expected_offset));
  validate_checkpoint(ck);
  return ck;
}

/// vocab.txt stored next to a checkpoint, if any.
inline std::optional<Vocab> load_checkpoint_vocab(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "vocab.txt")) return std::nullopt;
  return Vocab::load(dir / "vocab.txt");
}

/// FNV-1a over the manifest and weights of a checkpoint directory.
inline std::string checkpoint_digest(const std::filesystem::path& dir) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char* name : {"manifest.json", "weights.bin"}) {
    std::ifstream is(dir / name, std::ios::binary);
    char buf[8192];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
      for (std::streamsize i = 0; i < is.gcount(); ++i) {
        h ^= static_cast<unsigned char>(buf[i]);
        h *= 1099511628211ULL;
      }
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// Warm start

/// Donor path feeding a seq2seq parameter, or nullopt for parameters the
/// donor has no counterpart for (cross-attention, its norm, output bias).
inline std::optional<std::string> donor_path(const std::string& path) {
  auto starts = [&](std::string_view p) { return path.rfind(p, 0) == 0; };
  if (path == "shared.word_embeddings" || starts("encoder.")) return path;
  if (starts("decoder.embeddings.")) return "encoder." + path.substr(std::string("decoder.").size());
  if (!starts("decoder.layer.")) return std::nullopt;
  const auto rest = path.substr(std::string("decoder.layer.").size());
  const auto dot = rest.find('.');
  const auto layer = rest.substr(0, dot);
  const auto leaf = rest.substr(dot + 1);
  auto mapped = [&](std::string_view from, std::string_view to) -> std::optional<std::string> {
    if (leaf.rfind(from, 0) != 0) return std::nullopt;
    return "encoder.layer." + layer + "." + std::string(to) + leaf.substr(from.size());
  };
  if (leaf.rfind("cross_attn", 0) == 0) return std::nullopt;
  if (auto p = mapped("self_attn_norm.", "attn_norm.")) return p;
  if (auto p = mapped("self_attn.", "attn.")) return p;
  if (auto p = mapped("ffn_norm.", "ffn_norm.")) return p;
  if (auto p = mapped("ffn.", "ffn.")) return p;
  return std::nullopt;
}

/// Assembles an encoder-decoder from an encoder-only donor: the encoder and
/// the decoder's embeddings, self-attention, feed-forward and their norms are
/// copied; cross-attention weights are drawn from Normal(0, init_std²) with
/// zero biases and unit/zero norms; the output bias starts at zero.
inline Seq2SeqModel warm_start(const Checkpoint& donor, const ModelConfig& target, std::uint64_t seed) {
  if (donor.kind == ModelKind::Seq2Seq)
    throw ModelError("warm_start donor must be an encoder-only checkpoint");
  // Compare the donor's encoder manifest with the one the target expects.
  const auto want = architecture_manifest(ModelKind::Encoder, target);
  for (const auto& [path, shape] : want) {
    const Tensor* t = donor.find(path);
    if (!t)
      throw ModelError("donor incompatible with target config: missing " + path);
    if (t->shape() != shape)
      throw ModelError("donor incompatible with target config: " + path + " has shape " +
                       shape_str(t->shape()) + ", target expects " + shape_str(shape));
  }
  if (donor.config.num_layers != target.num_layers)
    throw ModelError("donor incompatible with target config: encoder.layer." +
                     std::to_string(std::min(donor.config.num_layers, target.num_layers)) +
                     " (donor has " + std::to_string(donor.config.num_layers) + " layers, target " +
                     std::to_string(target.num_layers) + ")");
  if (donor.config.num_heads != target.num_heads)
    throw ModelError("donor incompatible with target config: encoder.layer.0.attn.query.weight "
                     "(donor has " + std::to_string(donor.config.num_heads) + " heads, target " +
                     std::to_string(target.num_heads) + ")");

  auto m = Seq2SeqModel::skeleton(target);
  std::mt19937_64 rng(seed);
  m.visit([&](const std::string& path, Tensor& t) {
    if (auto src = donor_path(path)) {
      const Tensor* d = donor.find(*src);
      std::copy(d->data().begin(), d->data().end(), t.mutable_data().begin());
    } else {
      init_parameter(path, t, target.init_std, rng);
    }
  });
  return m;
}

inline Seq2SeqModel warm_start(const Checkpoint& donor, std::uint64_t seed) {
  return warm_start(donor, donor.config, seed);
}

}  // namespace b2b
