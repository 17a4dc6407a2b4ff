#pragma once

// Chat service: emotion prediction plus response generation over an
// immutable model snapshot, and its HTTP/JSON front end.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include "httplib.h"
#include "json.hpp"

#include "b2b/checkpoint.hpp"
#include "b2b/classifier.hpp"
#include "b2b/config.hpp"
#include "b2b/decode.hpp"
#include "b2b/tokenizer.hpp"
#include "b2b/train.hpp"

namespace b2b {

/// Error carrying an HTTP status.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& msg) : std::runtime_error(msg), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ChatRequest {
  std::string session_id;
  std::string utterance;
};

struct ChatResponse {
  std::string session_id;
  std::string response;
  EmotionGroup emotion = EmotionGroup::Joy;
  std::string model_variant;
  long long elapsed_ms = 0;
  std::uint64_t request_id = 0;
  std::uint64_t seed = 0;
};

struct ModelSnapshot {
  Seq2SeqModel model;
  Vocab vocab;
  Variant variant = Variant::Warm;
  std::string digest;
  std::optional<ClassifierModel> classifier;
  std::optional<Vocab> classifier_vocab;
};

/// Reads a seq2seq checkpoint (and optionally a classifier) from disk. Each
/// directory must carry its vocab.txt.
inline std::shared_ptr<const ModelSnapshot> load_snapshot(const std::filesystem::path& checkpoint,
                                                          const std::filesystem::path& classifier,
                                                          Variant variant) {
  auto snap = std::make_shared<ModelSnapshot>(ModelSnapshot{
      seq2seq_from_checkpoint(load_checkpoint(checkpoint)), Vocab{}, variant, checkpoint_digest(checkpoint),
      std::nullopt, std::nullopt});
  auto v = load_checkpoint_vocab(checkpoint);
  if (!v) throw IntegrityError("checkpoint " + checkpoint.string() + " has no vocab.txt");
  snap->vocab = std::move(*v);
  if (!classifier.empty()) {
    snap->classifier = classifier_from_checkpoint(load_checkpoint(classifier));
    snap->classifier_vocab = load_checkpoint_vocab(classifier);
    if (!snap->classifier_vocab)
      throw IntegrityError("classifier " + classifier.string() + " has no vocab.txt");
  }
  return snap;
}

/// Desegmented reply for `source`. An empty sample is redrawn with a derived
/// seed, at most `attempts` times; ServiceError 500 if all are empty.
inline std::string chat_reply(const std::string& source, const Seq2SeqModel& model, const Vocab& vocab,
                              GenerationConfig g, int attempts = 8) {
  const auto base = g.seed;
  for (int a = 0; a < attempts; ++a) {
    g.seed = a == 0 ? base : mix_seed(base, static_cast<std::uint64_t>(a));
    auto text = desegment(generate(source, model, vocab, g).text);
    if (!trim(text).empty()) return text;
  }
  throw ServiceError(500, "model produced an empty response");
}

class ChatService {
 public:
  explicit ChatService(GenerationConfig g, Segmenter segmenter = identity_segmenter(),
                       std::filesystem::path transcript = {})
      : gen_(g), segmenter_(std::move(segmenter)), transcript_(std::move(transcript)) {
    gen_.validate();
  }

  /// Replaces the snapshot; requests already running finish on the old one.
  void swap_snapshot(std::shared_ptr<const ModelSnapshot> s) {
    std::lock_guard lock(snap_mu_);
    snap_ = std::move(s);
  }

  std::shared_ptr<const ModelSnapshot> snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snap_;
  }

  /// Seed of request number `n`.
  std::uint64_t request_seed(std::uint64_t n) const { return mix_seed(gen_.seed, n); }

  ChatResponse handle_chat(const ChatRequest& req) {
    const auto t0 = std::chrono::steady_clock::now();
    if (trim(req.utterance).empty()) throw ServiceError(400, "utterance must not be empty");
    const auto snap = snapshot();
    if (!snap) throw ServiceError(503, "model not loaded");
    if (!snap->classifier) throw ServiceError(503, "emotion classifier not loaded");

    const std::string segmented = segmenter_(trim(req.utterance));
    const auto emo = predict_emotion(segmented, *snap->classifier, *snap->classifier_vocab);
    const std::string source =
        snap->variant == Variant::WarmEmoPrepend ? std::string(group_token(emo.group)) + " " + segmented : segmented;

    ChatResponse out;
    out.request_id = counter_++;
    out.seed = request_seed(out.request_id);
    auto g = gen_;
    g.seed = out.seed;
    out.response = chat_reply(source, snap->model, snap->vocab, g);
    out.session_id = req.session_id;
    out.emotion = emo.group;
    out.model_variant = variant_name(snap->variant);
    out.elapsed_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    log(req, out);
    return out;
  }

  nlohmann::json health() const {
    const auto snap = snapshot();
    if (!snap) throw ServiceError(503, "model not loaded");
    return {{"status", snap->classifier ? "ok" : "degraded"},
            {"variant", std::string(variant_name(snap->variant))},
            {"checkpoint_digest", snap->digest},
            {"classifier", snap->classifier.has_value()},
            {"k", gen_.k},
            {"temperature", gen_.temperature}};
  }

 private:
  void log(const ChatRequest& req, const ChatResponse& r) {
    if (transcript_.empty()) return;
    nlohmann::json line = {{"request_id", r.request_id}, {"seed", r.seed},
                           {"session_id", req.session_id}, {"utterance", req.utterance},
                           {"response", r.response}, {"emotion", std::string(group_name(r.emotion))},
                           {"variant", r.model_variant}};
    std::lock_guard lock(log_mu_);
    std::ofstream os(transcript_, std::ios::app | std::ios::binary);
    os << line.dump() << '\n';
  }

  GenerationConfig gen_;
  Segmenter segmenter_;
  std::filesystem::path transcript_;
  mutable std::mutex snap_mu_;
  std::shared_ptr<const ModelSnapshot> snap_;
  std::atomic<std::uint64_t> counter_{0};
  std::mutex log_mu_;
};

inline nlohmann::json to_json(const ChatResponse& r) {
  return {{"session_id", r.session_id}, {"response", r.response},
          {"emotion", std::string(group_name(r.emotion))}, {"model_variant", r.model_variant},
          {"elapsed_ms", r.elapsed_ms}, {"request_id", r.request_id}};
}

namespace detail {

inline void json_reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void json_error(httplib::Response& res, int status, const std::string& msg) {
  json_reply(res, status, {{"error", msg}});
}

}  // namespace detail

/// Installs /api/chat, /api/health, JSON error pages and optional static files.
inline void install_routes(httplib::Server& server, ChatService& svc, const std::string& static_dir = {}) {
  server.Post("/api/chat", [&svc](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return detail::json_error(res, 400, "request body must be JSON");
    }
    if (!body.is_object() || !body.contains("utterance") || !body["utterance"].is_string())
      return detail::json_error(res, 400, "field 'utterance' (string) is required");
    ChatRequest cr;
    cr.utterance = body["utterance"].get<std::string>();
    if (body.contains("session_id") && body["session_id"].is_string())
      cr.session_id = body["session_id"].get<std::string>();
    try {
      detail::json_reply(res, 200, to_json(svc.handle_chat(cr)));
    } catch (const ServiceError& e) {
      detail::json_error(res, e.status(), e.what());
    } catch (const std::exception& e) {
      detail::json_error(res, 500, e.what());
    }
  });
  server.Get("/api/health", [&svc](const httplib::Request&, httplib::Response& res) {
    try {
      detail::json_reply(res, 200, svc.health());
    } catch (const ServiceError& e) {
      detail::json_error(res, e.status(), e.what());
    }
  });
  if (!static_dir.empty() && !server.set_mount_point("/", static_dir))
    throw ServiceError(500, "static directory not found: " + static_dir);
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty()) {
      const std::string msg = res.status == 404 ? "not found: " + req.path : "request failed";
      detail::json_error(res, res.status, msg);
    }
  });
}

}  // namespace b2b
