#pragma once

// Run configuration: every tunable of the pipeline in one JSON document.
// Sections and keys are optional; unknown keys are rejected so that typos
// do not silently fall back to defaults.

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "b2b/checkpoint.hpp"
#include "b2b/classifier.hpp"
#include "b2b/common.hpp"
#include "b2b/dataset.hpp"
#include "b2b/decode.hpp"
#include "b2b/pretrain.hpp"
#include "b2b/train.hpp"

namespace b2b {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ServiceConfig {
  std::string checkpoint;   // seq2seq checkpoint directory
  std::string classifier;   // classifier checkpoint directory
  std::string static_dir;   // UI files, optional
  std::string segmenter;    // external segmenter command, empty = none
  std::string transcript;   // append-only transcript log, optional
  Variant variant = Variant::Warm;  // how the checkpoint was trained
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t threads = 4;
};

struct RunConfig {
  ModelConfig model;
  PretrainConfig pretrain;
  TrainConfig train;
  ClassifierConfig classifier;
  GenerationConfig generation;
  SplitConfig split;
  ServiceConfig service;
  std::size_t min_freq = 2;
  std::vector<Variant> variants = {Variant::Warm, Variant::Cold, Variant::WarmEmoPrepend};
  std::size_t bleu_samples = 0;  // 0 = whole test split
  std::string pretrain_corpus;   // extra plain-text donor corpus, optional

  /// One seed drives every stage.
  void set_seed(std::uint64_t s) {
    pretrain.seed = s;
    train.seed = s;
    classifier.seed = s;
    generation.seed = s;
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& section, std::set<std::string> allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown config key '" + section + (section.empty() ? "" : ".") + k + "'");
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json variants = nlohmann::json::array();
  for (auto v : c.variants) variants.push_back(std::string(variant_name(v)));
  return {
      {"model", config_to_json(c.model)},
      {"pretrain", {{"steps", c.pretrain.steps}, {"batch_size", c.pretrain.batch_size},
                    {"learning_rate", c.pretrain.learning_rate}, {"mask_rate", c.pretrain.mask_rate},
                    {"warmup_fraction", c.pretrain.warmup_fraction}, {"clip_norm", c.pretrain.clip_norm},
                    {"seed", c.pretrain.seed}, {"log_every", c.pretrain.log_every}}},
      {"train", {{"epochs", c.train.epochs}, {"batch_size", c.train.batch_size},
                 {"learning_rate", c.train.learning_rate}, {"warmup_fraction", c.train.warmup_fraction},
                 {"clip_norm", c.train.clip_norm}, {"seed", c.train.seed},
                 {"variant", std::string(variant_name(c.train.variant))},
                 {"bucket_batches", c.train.bucket_batches}}},
      {"classifier", {{"epochs", c.classifier.epochs}, {"batch_size", c.classifier.batch_size},
                      {"learning_rate", c.classifier.learning_rate},
                      {"warmup_fraction", c.classifier.warmup_fraction},
                      {"clip_norm", c.classifier.clip_norm}, {"seed", c.classifier.seed}}},
      {"generation", {{"k", c.generation.k}, {"max_len", c.generation.max_len},
                      {"temperature", c.generation.temperature}, {"seed", c.generation.seed}}},
      {"split", {{"train", c.split.train_fraction}, {"val", c.split.val_fraction},
                 {"test", c.split.test_fraction}, {"seed", c.split.seed}}},
      {"service", {{"checkpoint", c.service.checkpoint}, {"classifier", c.service.classifier},
                   {"static_dir", c.service.static_dir}, {"segmenter", c.service.segmenter},
                   {"transcript", c.service.transcript},
                   {"variant", std::string(variant_name(c.service.variant))}, {"host", c.service.host},
                   {"port", c.service.port}, {"threads", c.service.threads}}},
      {"min_freq", c.min_freq},
      {"variants", variants},
      {"bleu_samples", c.bleu_samples},
      {"pretrain_corpus", c.pretrain_corpus},
  };
}

namespace detail {

inline RunConfig parse_run_config(const nlohmann::json& j, RunConfig c) {
  using detail::read;
  detail::check_keys(j, "", {"model", "pretrain", "train", "classifier", "generation", "split", "service",
                             "min_freq", "variants", "bleu_samples", "pretrain_corpus", "seed"});
  if (j.contains("model")) {
    detail::check_keys(j["model"], "model", {"vocab_size", "hidden_dim", "num_layers", "num_heads", "ffn_dim",
                                             "max_len", "dropout_rate", "init_std", "layer_norm_eps"});
    c.model = config_from_json(j["model"], c.model);
  }
  if (j.contains("seed")) c.set_seed(j["seed"].get<std::uint64_t>());
  if (j.contains("pretrain")) {
    const auto& p = j["pretrain"];
    detail::check_keys(p, "pretrain", {"steps", "batch_size", "learning_rate", "mask_rate", "warmup_fraction",
                                       "clip_norm", "seed", "log_every"});
    read(p, "steps", c.pretrain.steps);
    read(p, "batch_size", c.pretrain.batch_size);
    read(p, "learning_rate", c.pretrain.learning_rate);
    read(p, "mask_rate", c.pretrain.mask_rate);
    read(p, "warmup_fraction", c.pretrain.warmup_fraction);
    read(p, "clip_norm", c.pretrain.clip_norm);
    read(p, "seed", c.pretrain.seed);
    read(p, "log_every", c.pretrain.log_every);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::check_keys(t, "train", {"epochs", "batch_size", "learning_rate", "warmup_fraction", "clip_norm",
                                    "seed", "variant", "bucket_batches"});
    read(t, "epochs", c.train.epochs);
    read(t, "batch_size", c.train.batch_size);
    read(t, "learning_rate", c.train.learning_rate);
    read(t, "warmup_fraction", c.train.warmup_fraction);
    read(t, "clip_norm", c.train.clip_norm);
    read(t, "seed", c.train.seed);
    read(t, "bucket_batches", c.train.bucket_batches);
    if (t.contains("variant")) c.train.variant = parse_variant(t["variant"].get<std::string>());
  }
  if (j.contains("classifier")) {
    const auto& t = j["classifier"];
    detail::check_keys(t, "classifier", {"epochs", "batch_size", "learning_rate", "warmup_fraction", "clip_norm", "seed"});
    read(t, "epochs", c.classifier.epochs);
    read(t, "batch_size", c.classifier.batch_size);
    read(t, "learning_rate", c.classifier.learning_rate);
    read(t, "warmup_fraction", c.classifier.warmup_fraction);
    read(t, "clip_norm", c.classifier.clip_norm);
    read(t, "seed", c.classifier.seed);
  }
  if (j.contains("generation")) {
    const auto& g = j["generation"];
    detail::check_keys(g, "generation", {"k", "max_len", "temperature", "seed"});
    read(g, "k", c.generation.k);
    read(g, "max_len", c.generation.max_len);
    read(g, "temperature", c.generation.temperature);
    read(g, "seed", c.generation.seed);
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    detail::check_keys(s, "split", {"train", "val", "test", "seed"});
    read(s, "train", c.split.train_fraction);
    read(s, "val", c.split.val_fraction);
    read(s, "test", c.split.test_fraction);
    read(s, "seed", c.split.seed);
  }
  if (j.contains("service")) {
    const auto& s = j["service"];
    detail::check_keys(s, "service", {"checkpoint", "classifier", "static_dir", "segmenter", "transcript",
                                      "variant", "host", "port", "threads"});
    read(s, "checkpoint", c.service.checkpoint);
    read(s, "classifier", c.service.classifier);
    read(s, "static_dir", c.service.static_dir);
    read(s, "segmenter", c.service.segmenter);
    read(s, "transcript", c.service.transcript);
    read(s, "host", c.service.host);
    read(s, "port", c.service.port);
    read(s, "threads", c.service.threads);
    if (s.contains("variant")) c.service.variant = parse_variant(s["variant"].get<std::string>());
  }
  read(j, "min_freq", c.min_freq);
  read(j, "bleu_samples", c.bleu_samples);
  read(j, "pretrain_corpus", c.pretrain_corpus);
  if (j.contains("variants")) {
    c.variants.clear();
    for (const auto& v : j["variants"]) c.variants.push_back(parse_variant(v.get<std::string>()));
  }
  // vocab_size is filled in from the vocabulary later; check the rest now.
  auto probe = c.model;
  probe.vocab_size = std::max<std::size_t>(probe.vocab_size, special::kCount);
  try {
    probe.validate();
  } catch (const ModelError& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base) {
  try {
    return detail::parse_run_config(j, std::move(base));
  } catch (const ConfigError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

/// Short stable digest of a configuration.
// Deployment settings (paths, host, port) do not affect results and stay out of the digest.
inline std::string config_digest(const RunConfig& c) {
  auto j = to_json(c);
  j.erase("service");
  return fnv1a_hex(j.dump());
}

}  // namespace b2b
