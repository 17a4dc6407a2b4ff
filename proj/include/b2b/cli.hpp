#pragma once

// Command-line front end. Settings resolve as built-in defaults, then the
// --config file, then explicit flags.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "b2b/bench.hpp"
#include "b2b/checkpoint.hpp"
#include "b2b/classifier.hpp"
#include "b2b/config.hpp"
#include "b2b/dataset.hpp"
#include "b2b/decode.hpp"
#include "b2b/pretrain.hpp"
#include "b2b/service.hpp"
#include "b2b/train.hpp"

namespace b2b {

/// A required input path that does not exist (exit code 1).
class MissingInput : public std::runtime_error {
 public:
  explicit MissingInput(const std::string& path) : std::runtime_error("no such file or directory: " + path) {}
};

namespace cli {

inline const std::string& require_path(const std::string& p) {
  if (p.empty() || !std::filesystem::exists(p)) throw MissingInput(p);
  return p;
}

struct Flags {
  // shared
  std::uint64_t seed = 0;
  std::string config, out;
  // inputs
  std::string data, corpus, donor, checkpoint, classifier, utterance, variant, static_dir, segmenter,
      transcript, host;
  // overrides
  std::size_t steps = 0, epochs = 0, batch = 0, k = 0, max_len = 0, bleu_samples = 0, min_freq = 0;
  double lr = 0, temperature = 0;
  int port = 0;
};

struct Options {
  Flags f;
  std::multimap<std::string, CLI::Option*> opts;  // one entry per subcommand using the flag
  bool given(const std::string& name) const {
    auto [lo, hi] = opts.equal_range(name);
    for (auto it = lo; it != hi; ++it)
      if (it->second->count() > 0) return true;
    return false;
  }
};

inline RunConfig resolve(const Options& o) {
  RunConfig c;
  if (!o.f.config.empty()) c = load_run_config(require_path(o.f.config), c);
  if (o.given("seed")) c.set_seed(o.f.seed);
  if (o.given("steps")) c.pretrain.steps = o.f.steps;
  if (o.given("epochs")) {
    c.train.epochs = o.f.epochs;
    c.classifier.epochs = o.f.epochs;
  }
  if (o.given("batch")) {
    c.train.batch_size = o.f.batch;
    c.pretrain.batch_size = o.f.batch;
    c.classifier.batch_size = o.f.batch;
  }
  if (o.given("lr")) {
    c.train.learning_rate = o.f.lr;
    c.pretrain.learning_rate = o.f.lr;
    c.classifier.learning_rate = o.f.lr;
  }
  if (o.given("k")) c.generation.k = o.f.k;
  if (o.given("max-len")) c.generation.max_len = o.f.max_len;
  if (o.given("temperature")) c.generation.temperature = o.f.temperature;
  if (o.given("bleu-samples")) c.bleu_samples = o.f.bleu_samples;
  if (o.given("min-freq")) c.min_freq = o.f.min_freq;
  if (o.given("corpus")) c.pretrain_corpus = o.f.corpus;
  if (o.given("variant")) {
    c.train.variant = parse_variant(o.f.variant);
    c.service.variant = c.train.variant;
  }
  if (o.given("checkpoint")) c.service.checkpoint = o.f.checkpoint;
  if (o.given("classifier")) c.service.classifier = o.f.classifier;
  if (o.given("static")) c.service.static_dir = o.f.static_dir;
  if (o.given("segmenter")) c.service.segmenter = o.f.segmenter;
  if (o.given("transcript")) c.service.transcript = o.f.transcript;
  if (o.given("host")) c.service.host = o.f.host;
  if (o.given("port")) c.service.port = o.f.port;
  c.generation.validate();
  return c;
}

inline std::vector<DialogueSample> load_data(const std::string& path) {
  return load_dataset(std::filesystem::path(require_path(path)));
}

inline std::filesystem::path out_dir(const Options& o, const char* fallback) {
  return o.f.out.empty() ? std::filesystem::path(fallback) : std::filesystem::path(o.f.out);
}

inline Donor load_donor(const std::string& dir) {
  require_path(dir);
  auto v = load_checkpoint_vocab(dir);
  if (!v) throw IntegrityError("checkpoint " + dir + " has no vocab.txt");
  return {load_checkpoint(dir), std::move(*v)};
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_pretrain(const Options& o, std::ostream& out, std::ostream& err) {
  auto c = resolve(o);
  std::vector<std::string> lines;
  if (!o.f.corpus.empty()) lines = read_lines(require_path(o.f.corpus));
  if (!o.f.data.empty()) {
    auto split = split_dataset(load_data(o.f.data), c.split);
    auto extra = corpus_lines(split.train);
    lines.insert(lines.end(), extra.begin(), extra.end());
  }
  if (lines.empty()) throw std::invalid_argument("pretrain needs --corpus and/or --data");
  const auto dir = out_dir(o, "donor");
  auto vocab = build_vocab(lines, c.min_freq);
  err << "vocab " << vocab.size() << " tokens, " << lines.size() << " sentences\n";
  auto res = pretrain_mlm(lines, vocab, c.model, c.pretrain, [&](const PretrainLogRow& r) {
    if (r.step % 100 == 0 || r.step == 1) err << "step " << r.step << " mlm loss " << fmt_double(r.loss, 6) << '\n';
  });
  save_checkpoint(res.checkpoint, dir, &vocab);
  write_pretrain_log(dir / "pretrain_log.csv", res.log);
  out << "donor checkpoint " << dir.string() << " digest " << checkpoint_digest(dir) << '\n';
  return 0;
}

inline int cmd_finetune(const Options& o, std::ostream& out, std::ostream& err) {
  auto c = resolve(o);
  const auto split = split_dataset(load_data(o.f.data), c.split);
  std::optional<Donor> donor;
  if (!o.f.donor.empty()) donor = load_donor(o.f.donor);
  if (uses_donor(c.train.variant) && !donor)
    throw std::invalid_argument(std::string("variant ") + std::string(variant_name(c.train.variant)) +
                                " needs --donor");
  const Vocab vocab = donor ? donor->vocab : build_vocab(corpus_lines(split.train), c.min_freq);
  const ModelConfig cfg = donor ? donor->checkpoint.config : c.model;
  std::optional<Checkpoint> d;
  if (uses_donor(c.train.variant)) d = donor->checkpoint;
  const auto dir = out_dir(o, "finetune");
  write_split_manifests(dir / "splits", split.indices);
  auto res = finetune(split.train, split.val, vocab, cfg, d, c.train, [&](const TrainLogRow& r) {
    if (r.split == "val") err << "epoch " << r.epoch << " val loss " << fmt_double(r.loss, 6) << '\n';
  });
  save_checkpoint(make_checkpoint(res.model), dir / "checkpoint", &vocab);
  write_train_log(dir / "train_log.csv", res.log);
  out << "best epoch " << res.best_epoch << " val loss " << fmt_double(res.best_val_loss) << '\n';
  out << "checkpoint " << (dir / "checkpoint").string() << " digest " << checkpoint_digest(dir / "checkpoint")
      << '\n';
  return 0;
}

inline int cmd_train_classifier(const Options& o, std::ostream& out, std::ostream& err) {
  auto c = resolve(o);
  const auto split = split_dataset(load_data(o.f.data), c.split);
  if (o.f.donor.empty()) throw std::invalid_argument("train-classifier needs --donor");
  const auto donor = load_donor(o.f.donor);
  auto res = train_classifier(split.train, split.val, donor.vocab, donor.checkpoint, c.classifier,
                              [&](const ClassifierLogRow& r) {
                                err << "epoch " << r.epoch << " val accuracy " << fmt_double(r.val_accuracy, 6)
                                    << '\n';
                              });
  const auto dir = out_dir(o, "classifier");
  save_checkpoint(make_checkpoint(res.model), dir, &donor.vocab);
  out << "val accuracy " << fmt_double(res.best_val_accuracy) << '\n';
  out << "test accuracy " << fmt_double(classification_accuracy(split.test, res.model, donor.vocab))
      << " majority " << fmt_double(majority_rate(split.test)) << '\n';
  out << "classifier " << dir.string() << " digest " << checkpoint_digest(dir) << '\n';
  return 0;
}

inline int cmd_eval(const Options& o, std::ostream& out, std::ostream&) {
  auto c = resolve(o);
  const auto split = split_dataset(load_data(o.f.data), c.split);
  const auto snap = load_snapshot(require_path(o.f.checkpoint),
                                  o.f.classifier.empty() ? std::filesystem::path{} : std::filesystem::path(require_path(o.f.classifier)),
                                  c.train.variant);
  std::vector<std::string> sources;
  if (c.train.variant == Variant::WarmEmoPrepend) {
    if (!snap->classifier) throw std::invalid_argument("warm+emoprepend evaluation needs --classifier");
    std::vector<std::string> utts;
    for (const auto& s : split.test) utts.push_back(s.utterance);
    const auto preds = predict_emotions(utts, *snap->classifier, *snap->classifier_vocab);
    for (std::size_t i = 0; i < split.test.size(); ++i)
      sources.push_back(source_text(split.test[i], c.train.variant, preds[i].group, true));
  } else {
    for (const auto& s : split.test) sources.push_back(s.utterance);
  }
  std::vector<std::string> generated;
  auto r = evaluate_model(snap->model, snap->vocab, split.test, sources, c.generation, c.bleu_samples, &generated);
  r.variant = variant_name(c.train.variant);
  r.label = variant_label(c.train.variant);
  r.config_digest = config_digest(c);
  if (!o.f.out.empty()) {
    std::filesystem::create_directories(o.f.out);
    write_report(o.f.out, std::vector<EvalReport>{r});
    std::vector<std::string> utts;
    for (std::size_t i = 0; i < generated.size(); ++i) utts.push_back(split.test[i].utterance);
    write_transcript(std::filesystem::path(o.f.out) / "transcript.txt", utts, generated);
  }
  out << r.label << " ppl " << fmt_double(r.ppl) << " bleu " << fmt_double(r.bleu) << " bleu_desegmented "
      << fmt_double(r.bleu_desegmented) << " samples " << r.samples << '\n';
  return 0;
}

inline int cmd_bench(const Options& o, std::ostream& out, std::ostream& err) {
  auto c = resolve(o);
  if (!c.pretrain_corpus.empty()) require_path(c.pretrain_corpus);
  const auto samples = load_data(o.f.data);
  std::optional<Donor> donor;
  if (!o.f.donor.empty()) donor = load_donor(o.f.donor);
  const auto dir = out_dir(o, "bench");
  const auto rows = run_benchmark(samples, donor, c, dir, &err);
  std::ifstream md(dir / "report.md");
  out << md.rdbuf();
  for (const auto& r : rows)
    if (!r.complete) return 1;
  return 0;
}

inline int cmd_generate(const Options& o, std::ostream& out, std::ostream&) {
  auto c = resolve(o);
  const auto snap = load_snapshot(require_path(o.f.checkpoint),
                                  o.f.classifier.empty() ? std::filesystem::path{} : std::filesystem::path(require_path(o.f.classifier)),
                                  c.train.variant);
  if (trim(o.f.utterance).empty()) throw std::invalid_argument("--utterance must not be empty");
  std::string source = o.f.utterance;
  if (snap->classifier) {
    const auto emo = predict_emotion(source, *snap->classifier, *snap->classifier_vocab);
    out << "emotion " << group_name(emo.group) << '\n';
    if (c.train.variant == Variant::WarmEmoPrepend) source = std::string(group_token(emo.group)) + " " + source;
  } else if (c.train.variant == Variant::WarmEmoPrepend) {
    throw std::invalid_argument("warm+emoprepend generation needs --classifier");
  }
  out << desegment(generate(source, snap->model, snap->vocab, c.generation).text) << '\n';
  return 0;
}

inline int cmd_serve(const Options& o, std::ostream& out, std::ostream&) {
  auto c = resolve(o);
  const auto& sc = c.service;
  Segmenter seg = sc.segmenter.empty() ? identity_segmenter() : external_segmenter(sc.segmenter);
  ChatService svc(c.generation, seg, sc.transcript);
  svc.swap_snapshot(load_snapshot(require_path(sc.checkpoint),
                                  sc.classifier.empty() ? std::filesystem::path{} : std::filesystem::path(require_path(sc.classifier)),
                                  sc.variant));
  httplib::Server server;
  const std::size_t threads = std::max<std::size_t>(1, sc.threads);
  server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  install_routes(server, svc, sc.static_dir);
  out << "listening on http://" << sc.host << ':' << sc.port << std::endl;
  if (!server.listen(sc.host, sc.port)) throw std::runtime_error("cannot listen on " + sc.host + ":" + std::to_string(sc.port));
  return 0;
}

}  // namespace cli

/// Parses argv and runs one subcommand. Exit codes: 0 success, 1 runtime
/// failure (including missing inputs), 2 usage error.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  using namespace cli;
  CLI::App app{"Warm-started encoder-decoder for empathetic dialogue", "b2b"};
  app.require_subcommand(1);
  Options o;
  auto& f = o.f;
  auto opt = [&](CLI::App* a, const std::string& name, auto& field, const std::string& help) {
    auto* option = a->add_option("--" + name, field, help);
    o.opts.emplace(name, option);
    return option;
  };
  opt(&app, "seed", f.seed, "seed for every stage");
  opt(&app, "config", f.config, "JSON run configuration");
  opt(&app, "out", f.out, "output directory");

  auto* pre = app.add_subcommand("pretrain", "MLM-pretrain a donor encoder");
  opt(pre, "corpus", f.corpus, "plain-text corpus, one sentence per line");
  opt(pre, "data", f.data, "dialogue CSV; its training split is added to the corpus");
  opt(pre, "steps", f.steps, "optimizer steps");
  opt(pre, "batch", f.batch, "batch size");
  opt(pre, "lr", f.lr, "learning rate");
  opt(pre, "min-freq", f.min_freq, "vocabulary frequency cutoff");

  auto* ft = app.add_subcommand("finetune", "train one seq2seq variant");
  opt(ft, "data", f.data, "dialogue CSV")->required();
  opt(ft, "donor", f.donor, "donor checkpoint directory");
  opt(ft, "variant", f.variant, "warm, cold or warm+emoprepend");
  opt(ft, "epochs", f.epochs, "epochs");
  opt(ft, "batch", f.batch, "batch size");
  opt(ft, "lr", f.lr, "learning rate");
  opt(ft, "min-freq", f.min_freq, "vocabulary cutoff when no donor is given");

  auto* tc = app.add_subcommand("train-classifier", "fine-tune the emotion classifier");
  opt(tc, "data", f.data, "dialogue CSV")->required();
  opt(tc, "donor", f.donor, "donor checkpoint directory")->required();
  opt(tc, "epochs", f.epochs, "epochs");
  opt(tc, "batch", f.batch, "batch size");
  opt(tc, "lr", f.lr, "learning rate");

  auto* ev = app.add_subcommand("eval", "test-split PPL and BLEU of a checkpoint");
  opt(ev, "data", f.data, "dialogue CSV")->required();
  opt(ev, "checkpoint", f.checkpoint, "seq2seq checkpoint directory")->required();
  opt(ev, "classifier", f.classifier, "classifier checkpoint (warm+emoprepend)");
  opt(ev, "variant", f.variant, "variant the checkpoint was trained as");
  opt(ev, "k", f.k, "top-k");
  opt(ev, "temperature", f.temperature, "sampling temperature");
  opt(ev, "max-len", f.max_len, "generated token limit");
  opt(ev, "bleu-samples", f.bleu_samples, "test pairs used for BLEU (0 = all)");

  auto* be = app.add_subcommand("bench", "train and compare all variants");
  opt(be, "data", f.data, "dialogue CSV")->required();
  opt(be, "donor", f.donor, "donor checkpoint; pretrained from the data when absent");
  opt(be, "corpus", f.corpus, "extra pretraining corpus");
  opt(be, "steps", f.steps, "pretraining steps");
  opt(be, "epochs", f.epochs, "fine-tuning epochs");
  opt(be, "batch", f.batch, "batch size");
  opt(be, "k", f.k, "top-k");
  opt(be, "bleu-samples", f.bleu_samples, "test pairs used for BLEU (0 = all)");
  opt(be, "min-freq", f.min_freq, "vocabulary frequency cutoff");

  auto* ge = app.add_subcommand("generate", "respond to one utterance");
  opt(ge, "checkpoint", f.checkpoint, "seq2seq checkpoint directory")->required();
  opt(ge, "utterance", f.utterance, "input utterance")->required();
  opt(ge, "classifier", f.classifier, "classifier checkpoint");
  opt(ge, "variant", f.variant, "variant the checkpoint was trained as");
  opt(ge, "k", f.k, "top-k");
  opt(ge, "temperature", f.temperature, "sampling temperature");
  opt(ge, "max-len", f.max_len, "generated token limit");

  auto* se = app.add_subcommand("serve", "HTTP chat service");
  opt(se, "checkpoint", f.checkpoint, "seq2seq checkpoint directory");
  opt(se, "classifier", f.classifier, "classifier checkpoint directory");
  opt(se, "variant", f.variant, "variant the checkpoint was trained as");
  opt(se, "static", f.static_dir, "directory of UI files");
  opt(se, "segmenter", f.segmenter, "segmenter command (stdin to stdout)");
  opt(se, "transcript", f.transcript, "append-only transcript log");
  opt(se, "host", f.host, "bind address");
  opt(se, "port", f.port, "port");
  opt(se, "k", f.k, "top-k");
  opt(se, "temperature", f.temperature, "sampling temperature");

  for (auto* s : {pre, ft, tc, ev, be, ge, se}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*pre) return cmd_pretrain(o, out, err);
    if (*ft) return cmd_finetune(o, out, err);
    if (*tc) return cmd_train_classifier(o, out, err);
    if (*ev) return cmd_eval(o, out, err);
    if (*be) return cmd_bench(o, out, err);
    if (*ge) return cmd_generate(o, out, err);
    if (*se) return cmd_serve(o, out, err);
  } catch (const MissingInput& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace b2b
