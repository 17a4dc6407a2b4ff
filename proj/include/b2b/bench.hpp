#pragma once

// Benchmark harness: trains every requested variant on one fixed split and
// writes a PPL/BLEU table plus per-variant artifacts into a run directory.
//
// Run directory layout:
//   config.json            effective configuration
//   splits/{train,val,test}.idx
//   vocab.txt
//   donor/                 pretrained encoder (only when none was supplied)
//   classifier/            emotion classifier (only for warm+emoprepend)
//   <variant>/checkpoint/  best-validation seq2seq weights + vocab.txt
//   <variant>/train_log.csv
//   <variant>/transcript.txt
//   report.csv, report.md

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "b2b/bleu.hpp"
#include "b2b/checkpoint.hpp"
#include "b2b/classifier.hpp"
#include "b2b/config.hpp"
#include "b2b/dataset.hpp"
#include "b2b/decode.hpp"
#include "b2b/pretrain.hpp"
#include "b2b/train.hpp"

namespace b2b {

struct EvalReport {
  std::string variant;  // warm, cold, warm+emoprepend
  std::string label;    // table name
  double ppl = 0.0;
  double bleu = 0.0;               // segmented tokens
  double bleu_desegmented = 0.0;   // surface text
  std::size_t samples = 0;         // test pairs scored
  std::string config_digest;
  bool complete = false;
  std::string error;
};

struct Donor {
  Checkpoint checkpoint;
  Vocab vocab;
};

/// Single-line field for transcripts: tabs and newlines become spaces.
inline std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  return s;
}

inline void write_transcript(const std::filesystem::path& path, const std::vector<std::string>& utterances,
                             const std::vector<std::string>& responses) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < utterances.size(); ++i)
    os << one_line(utterances[i]) << '\t' << one_line(responses[i]) << '\n';
}

/// Scores a trained model on test pairs: PPL over every pair, BLEU over the
/// first `bleu_samples` (all when 0).
inline EvalReport evaluate_model(const Seq2SeqModel& model, const Vocab& vocab,
                                 const std::vector<DialogueSample>& test,
                                 const std::vector<std::string>& sources, const GenerationConfig& g,
                                 std::size_t bleu_samples, std::vector<std::string>* generated = nullptr) {
  if (test.size() != sources.size()) throw ContractError("evaluate_model: sources and test differ in size");
  std::vector<EncodedPair> pairs;
  for (std::size_t i = 0; i < test.size(); ++i)
    pairs.push_back(encode_pair(sources[i], test[i].response, vocab, model.config.max_len));
  EvalReport r;
  r.ppl = perplexity(model, pairs);
  const std::size_t n = bleu_samples == 0 ? test.size() : std::min(bleu_samples, test.size());
  std::vector<std::string> srcs(sources.begin(), sources.begin() + static_cast<std::ptrdiff_t>(n));
  const auto gens = generate_all(srcs, model, vocab, g);
  std::vector<std::string> cand, ref, cand_s, ref_s;
  for (std::size_t i = 0; i < n; ++i) {
    cand.push_back(gens[i].text);
    ref.push_back(test[i].response);
    cand_s.push_back(desegment(gens[i].text));
    ref_s.push_back(desegment(test[i].response));
    if (generated) generated->push_back(gens[i].text);
  }
  r.bleu = n ? bleu(cand, ref) : 0.0;
  r.bleu_desegmented = n ? bleu(cand_s, ref_s) : 0.0;
  r.samples = test.size();
  r.complete = true;
  return r;
}

inline void write_report(const std::filesystem::path& dir, const std::vector<EvalReport>& rows) {
  {
    std::ofstream os(dir / "report.csv", std::ios::binary);
    os << "variant,model,ppl,bleu,bleu_desegmented,samples,config_digest,complete,error\n";
    for (const auto& r : rows)
      os << r.variant << ',' << r.label << ',' << fmt_double(r.ppl) << ',' << fmt_double(r.bleu) << ','
         << fmt_double(r.bleu_desegmented) << ',' << r.samples << ',' << r.config_digest << ','
         << (r.complete ? "true" : "false") << ',' << detail::csv_quote(r.error, ',') << '\n';
  }
  std::ofstream md(dir / "report.md", std::ios::binary);
  md << "| Model | PPL | BLEU |\n|---|---|---|\n";
  auto fixed = [](double v, int p) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(p) << v;
    return s.str();
  };
  for (const auto& r : rows) {
    if (r.complete)
      md << "| " << r.label << " | " << fixed(r.ppl, 2) << " | " << fixed(r.bleu, 2) << " |\n";
    else
      md << "| " << r.label << " | n/a | n/a |\n";
  }
  const EvalReport *warm = nullptr, *cold = nullptr;
  for (const auto& r : rows) {
    if (r.variant == "warm" && r.complete) warm = &r;
    if (r.variant == "cold" && r.complete) cold = &r;
  }
  md << '\n';
  if (warm && cold)
    md << "Ordering warm PPL < cold PPL: " << (warm->ppl < cold->ppl ? "holds" : "violated") << " ("
       << fixed(warm->ppl, 2) << " vs " << fixed(cold->ppl, 2) << ")\n";
  else
    md << "Ordering warm PPL < cold PPL: not evaluated\n";
  bool incomplete = false;
  for (const auto& r : rows)
    if (!r.complete) {
      incomplete = true;
      md << "Incomplete: " << r.label << ": " << r.error << '\n';
    }
  if (!incomplete) md << "All variants complete.\n";
}

/// Trains and scores each variant in `cfg.variants`. Without a donor, one is
/// pretrained on the training split (plus `cfg.pretrain_corpus`). A variant
/// that fails is reported incomplete; the rest are still produced.
inline std::vector<EvalReport> run_benchmark(const std::vector<DialogueSample>& samples,
                                             const std::optional<Donor>& donor_in, const RunConfig& cfg,
                                             const std::filesystem::path& out_dir,
                                             std::ostream* progress = nullptr) {
  namespace fs = std::filesystem;
  auto say = [&](const std::string& s) {
    if (progress) *progress << s << std::endl;
  };
  fs::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "config.json", std::ios::binary);
    os << to_json(cfg).dump(2) << '\n';
  }
  const auto digest = config_digest(cfg);
  const auto split = split_dataset(samples, cfg.split);
  write_split_manifests(out_dir / "splits", split.indices);
  say("split: " + std::to_string(split.train.size()) + " train / " + std::to_string(split.val.size()) +
      " val / " + std::to_string(split.test.size()) + " test");

  std::vector<std::string> extra;
  if (!cfg.pretrain_corpus.empty()) extra = read_lines(cfg.pretrain_corpus);

  std::optional<Donor> donor = donor_in;
  if (!donor) {
    auto lines = corpus_lines(split.train);
    lines.insert(lines.end(), extra.begin(), extra.end());
    auto vocab = build_vocab(lines, cfg.min_freq);
    say("vocab: " + std::to_string(vocab.size()) + " tokens; pretraining donor");
    auto pre = pretrain_mlm(lines, vocab, cfg.model, cfg.pretrain);
    save_checkpoint(pre.checkpoint, out_dir / "donor", &vocab);
    write_pretrain_log(out_dir / "donor" / "pretrain_log.csv", pre.log);
    donor = Donor{std::move(pre.checkpoint), std::move(vocab)};
  }
  const Vocab& vocab = donor->vocab;
  vocab.save(out_dir / "vocab.txt");
  const ModelConfig model_cfg = donor->checkpoint.config;

  std::vector<std::string> test_utts;
  for (const auto& s : split.test) test_utts.push_back(s.utterance);

  std::optional<std::vector<EmotionPrediction>> predicted;
  std::string classifier_error;
  bool wants_emo = false;
  for (auto v : cfg.variants) wants_emo = wants_emo || v == Variant::WarmEmoPrepend;
  if (wants_emo) {
    try {
      say("training emotion classifier");
      auto clf = train_classifier(split.train, split.val, vocab, donor->checkpoint, cfg.classifier);
      save_checkpoint(make_checkpoint(clf.model), out_dir / "classifier", &vocab);
      predicted = predict_emotions(test_utts, clf.model, vocab);
    } catch (const std::exception& e) {
      classifier_error = std::string("emotion classifier failed: ") + e.what();
    }
  }

  std::vector<EvalReport> rows;
  for (auto v : cfg.variants) {
    EvalReport r;
    r.variant = variant_name(v);
    r.label = variant_label(v);
    r.config_digest = digest;
    try {
      if (v == Variant::WarmEmoPrepend && !predicted) throw std::runtime_error(classifier_error);
      say("fine-tuning " + r.variant);
      TrainConfig tc = cfg.train;
      tc.variant = v;
      std::optional<Checkpoint> d;
      if (uses_donor(v)) d = donor->checkpoint;
      auto ft = finetune(split.train, split.val, vocab, model_cfg, d, tc);
      const fs::path vdir = out_dir / r.variant;
      save_checkpoint(make_checkpoint(ft.model), vdir / "checkpoint", &vocab);
      // Score the stored weights so that `eval` on the checkpoint agrees.
      const auto stored = seq2seq_from_checkpoint(load_checkpoint(vdir / "checkpoint"));
      write_train_log(vdir / "train_log.csv", ft.log);

      std::vector<std::string> sources;
      for (std::size_t i = 0; i < split.test.size(); ++i)
        sources.push_back(v == Variant::WarmEmoPrepend
                              ? source_text(split.test[i], v, (*predicted)[i].group, true)
                              : split.test[i].utterance);
      std::vector<std::string> generated;
      auto scored = evaluate_model(stored, vocab, split.test, sources, cfg.generation, cfg.bleu_samples,
                                   &generated);
      std::vector<std::string> shown(test_utts.begin(), test_utts.begin() + static_cast<std::ptrdiff_t>(generated.size()));
      write_transcript(vdir / "transcript.txt", shown, generated);
      r.ppl = scored.ppl;
      r.bleu = scored.bleu;
      r.bleu_desegmented = scored.bleu_desegmented;
      r.samples = scored.samples;
      r.complete = true;
      say(r.variant + ": ppl " + fmt_double(r.ppl, 6) + " bleu " + fmt_double(r.bleu, 4));
    } catch (const std::exception& e) {
      r.complete = false;
      r.error = e.what();
      say(r.variant + " failed: " + r.error);
    }
    rows.push_back(std::move(r));
  }
  write_report(out_dir, rows);
  return rows;
}

}  // namespace b2b
