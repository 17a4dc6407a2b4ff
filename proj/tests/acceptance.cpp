// Acceptance gate: one PASS/FAIL line per criterion, exit status 0 only when
// all pass. Usage: acceptance [dialogues.csv]  (defaults to the bundled
// fixture; pass the real corpus to run the ordering check on it).

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "b2b/bench.hpp"
#include "b2b/bleu.hpp"
#include "b2b/checkpoint.hpp"
#include "b2b/classifier.hpp"
#include "b2b/cli.hpp"
#include "b2b/dataset.hpp"
#include "b2b/decode.hpp"
#include "b2b/synthetic.hpp"
#include "b2b/train.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"
#include "op_gradchecks.hpp"
#include "oracles.hpp"

#ifndef B2B_SOURCE_DIR
#define B2B_SOURCE_DIR "."
#endif

using namespace b2b;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failures; the first few are kept for the report line.
struct Failures {
  std::size_t count = 0;
  std::string first;
  void add(const std::string& what) {
    if (count++ == 0) first = what;
  }
  Outcome outcome(const std::string& ok_detail) const {
    if (count == 0) return {true, ok_detail};
    return {false, std::to_string(count) + " failure(s), first: " + first};
  }
};

std::string num(double v, int p = 4) {
  std::ostringstream s;
  s.precision(p);
  s << v;
  return s.str();
}

ModelConfig grad_config() {
  auto c = b2b::testing::tiny_config(20, 16, 12);
  c.init_std = 0.3;  // larger weights keep finite differences well conditioned
  return c;
}

// ---------------------------------------------------------------------------

Outcome gradient_verification() {
  Failures f;
  std::size_t ops = 0;
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial)
    for (const auto& c : b2b::testing::op_gradchecks(trial, rng, 1e-4)) {
      ++ops;
      if (!c.result.ok) f.add("trial " + std::to_string(trial) + " " + c.name + ": " + c.result.worst);
    }
  const auto cfg = grad_config();
  std::mt19937_64 ids(12);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto model = Seq2SeqModel::init(cfg, 200 + static_cast<std::uint64_t>(trial));
    std::vector<EncodedPair> pairs;
    for (int b = 0; b < 2; ++b)
      pairs.push_back({b2b::testing::random_sequence(ids, 3 + ids() % 3, cfg.vocab_size),
                       b2b::testing::random_sequence(ids, 3 + ids() % 3, cfg.vocab_size)});
    auto batch = make_batch(pairs);
    auto loss = [&](const std::vector<Tensor>&) {
      return seq2seq_loss(model.decode(batch.decoder_input, model.encode(batch.source)), batch.labels);
    };
    // every 4th element, offset rotating per trial: all elements covered
    auto r = b2b::testing::grad_check(model.parameters(), loss, 1e-3, 1e-5, 1e-4, 4,
                                      static_cast<std::size_t>(trial));
    worst = std::max(worst, r.max_error);
    if (!r.ok) f.add("model trial " + std::to_string(trial) + ": " + r.worst);
  }
  return f.outcome(std::to_string(ops) + " op checks at 1e-4, 20 full-model checks at 1e-3 (worst rel err " +
                   num(worst, 3) + ")");
}

Outcome warm_start_identity() {
  Failures f;
  ModelConfig cfg = b2b::testing::tiny_config(60, 64, 32);
  cfg.num_heads = 4;
  auto donor_model = EncoderModel::init(cfg, 21);
  const auto donor = make_checkpoint(donor_model);
  auto s2s = warm_start(donor, cfg, 22);
  std::size_t copied = 0;
  s2s.visit([&](const std::string& path, Tensor& t) {
    auto src = donor_path(path);
    if (!src) return;
    const Tensor* d = donor.find(*src);
    if (!d || t.values() != d->values()) f.add("parameter " + path + " differs from " + *src);
    ++copied;
  });
  std::mt19937_64 rng(23);
  for (int i = 0; i < 100; ++i) {
    auto ids = b2b::testing::random_sequence(rng, 2 + rng() % (cfg.max_len - 1), cfg.vocab_size);
    if (s2s.encoder_forward_single(ids).values() != donor_model.forward(ids).values())
      f.add("encoder output differs on input " + std::to_string(i));
  }
  std::vector<double> w;
  for (auto& layer : s2s.decoder.layers)
    for (auto* lin : {&layer.cross_attn.query, &layer.cross_attn.key, &layer.cross_attn.value,
                      &layer.cross_attn.output}) {
      auto v = lin->weight.values();
      w.insert(w.end(), v.begin(), v.end());
    }
  const double n = static_cast<double>(w.size());
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / n;
  double var = 0;
  for (double x : w) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / (n - 1));
  // mean within 3 standard errors; sd within 10% of 0.02
  if (std::abs(mean) > 3 * 0.02 / std::sqrt(n)) f.add("cross-attention mean " + num(mean));
  if (std::abs(sd - 0.02) > 0.002) f.add("cross-attention sd " + num(sd));
  return f.outcome(std::to_string(copied) + " tensors bitwise equal, 100 encoder outputs bitwise equal, "
                   "cross-attention mean " + num(mean, 3) + " sd " + num(sd, 4));
}

Outcome causality() {
  Failures f;
  const auto cfg = b2b::testing::tiny_config(30, 16, 12);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    auto model = Seq2SeqModel::init(cfg, 100 + static_cast<std::uint64_t>(trial) % 10);
    auto enc = model.encode(pad_batch({b2b::testing::random_sequence(rng, 2 + rng() % 8, cfg.vocab_size)}));
    auto tgt = b2b::testing::random_sequence(rng, 3 + rng() % 8, cfg.vocab_size);
    auto base = model.decoder_forward(tgt, enc);
    const std::size_t j = 1 + rng() % (tgt.size() - 1);
    auto mutated = tgt;
    for (std::size_t t = j; t < mutated.size(); ++t) mutated[t] = static_cast<int>(rng() % cfg.vocab_size);
    auto out = model.decoder_forward(mutated, enc);
    for (std::size_t i = 0; i < j; ++i)
      for (std::size_t c = 0; c < cfg.vocab_size; ++c)
        if (out.at(i, c) != base.at(i, c)) {
          f.add("case " + std::to_string(trial) + " position " + std::to_string(i));
          i = j;
          break;
        }
  }
  return f.outcome("1000 fuzz cases, prefix logits bitwise unchanged");
}

/// Warm vs cold test PPL through the benchmark harness, one donor per seed.
Outcome ordering(const fs::path& data_path, const fs::path& work) {
  Failures f;
  const auto samples = load_dataset(data_path);
  if (samples.size() < 2000) f.add("corpus has only " + std::to_string(samples.size()) + " pairs");
  RunConfig cfg;
  cfg.model.hidden_dim = 64;
  cfg.model.num_layers = 2;
  cfg.model.num_heads = 4;
  cfg.model.ffn_dim = 128;
  cfg.model.max_len = 64;
  cfg.pretrain.steps = 1500;
  cfg.pretrain.learning_rate = 1e-3;
  cfg.min_freq = 1;
  cfg.bleu_samples = 20;
  cfg.variants = {Variant::Warm, Variant::Cold};
  const fs::path extra = data_path.parent_path() / "pretrain.txt";
  if (fs::exists(extra)) cfg.pretrain_corpus = extra.string();
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    cfg.set_seed(seed);
    const auto rows = run_benchmark(samples, std::nullopt, cfg, work / ("seed" + std::to_string(seed)));
    const auto& warm = rows.at(0);
    const auto& cold = rows.at(1);
    if (!warm.complete || !cold.complete) {
      f.add("seed " + std::to_string(seed) + " incomplete: " + warm.error + cold.error);
      continue;
    }
    const double rel = (cold.ppl - warm.ppl) / cold.ppl;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + " warm " + num(warm.ppl) +
              " cold " + num(cold.ppl) + " (-" + num(100 * rel, 3) + "%)";
    if (!(rel >= 0.20)) f.add("seed " + std::to_string(seed) + " reduction " + num(100 * rel, 3) + "% < 20%");
  }
  return f.outcome(std::to_string(samples.size()) + " pairs; " + detail);
}

Outcome overfit() {
  const auto data = synthetic::dialogues(32, 11);
  const auto vocab = build_vocab(corpus_lines(data), 1);
  ModelConfig cfg;
  cfg.hidden_dim = 64;
  cfg.num_layers = 2;
  cfg.num_heads = 4;
  cfg.ffn_dim = 128;
  cfg.max_len = 64;
  TrainConfig tc;
  tc.variant = Variant::Cold;
  tc.epochs = 300;
  tc.batch_size = 32;
  tc.learning_rate = 2e-3;
  auto res = finetune(data, {}, vocab, cfg, std::nullopt, tc);
  const double loss = res.log.back().loss;
  if (loss < 0.1) return {true, "final train loss " + num(loss)};
  return {false, "final train loss " + num(loss) + " >= 0.1"};
}

Outcome metric_oracles() {
  Failures f;
  Vocab vocab = build_vocab({"w0 w1 w2 w3 w4 w5 w6 w7 w8"}, 1);
  auto cfg = b2b::testing::tiny_config(vocab.size());
  cfg.init_std = 0.2;
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto model = Seq2SeqModel::init(cfg, 50 + static_cast<std::uint64_t>(trial));
    std::mt19937_64 rng(51 + static_cast<std::uint64_t>(trial));
    std::vector<EncodedPair> pairs;
    for (int i = 0; i < 6; ++i)
      pairs.push_back({b2b::testing::random_sequence(rng, 3 + rng() % 6, vocab.size()),
                       b2b::testing::random_sequence(rng, 3 + rng() % 8, vocab.size())});
    // Unbatched, hand-written log-softmax over non-pad targets.
    double nll = 0;
    std::size_t count = 0;
    for (const auto& p : pairs) {
      TokenSequence dec(p.target.begin(), p.target.end() - 1);
      auto logits = model.decoder_forward(dec, model.encode(pad_batch({p.source})));
      for (std::size_t t = 0; t < dec.size(); ++t) {
        const int y = p.target[t + 1];
        if (y == special::kPad) continue;
        double mx = -1e300, z = 0;
        for (std::size_t c = 0; c < vocab.size(); ++c) mx = std::max(mx, logits.at(t, c));
        for (std::size_t c = 0; c < vocab.size(); ++c) z += std::exp(logits.at(t, c) - mx);
        nll -= logits.at(t, static_cast<std::size_t>(y)) - mx - std::log(z);
        ++count;
      }
    }
    const double got = perplexity(model, pairs, [](int id) { return id == special::kPad; });
    const double err = std::abs(got - std::exp(nll / static_cast<double>(count)));
    worst = std::max(worst, err);
    if (err > 1e-9) f.add("ppl trial " + std::to_string(trial) + " off by " + num(err));
  }

  std::mt19937_64 rng(60);
  const std::vector<std::string> alphabet = {"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Words> cands, refs;
    const std::size_t n = 1 + rng() % 6;
    for (std::size_t i = 0; i < n; ++i) {
      Words c, r;
      for (std::size_t j = rng() % 9; j > 0; --j) c.push_back(alphabet[rng() % 3]);
      for (std::size_t j = 1 + rng() % 9; j > 0; --j) r.push_back(alphabet[rng() % alphabet.size()]);
      cands.push_back(c);
      refs.push_back(r);
    }
    if (bleu(cands, refs) != b2b::testing::brute_force_bleu(cands, refs))
      f.add("bleu corpus " + std::to_string(trial));
  }

  auto uniform = Seq2SeqModel::init(cfg, 70);
  for (auto& x : uniform.word_embeddings.mutable_data()) x = 0.0;
  std::mt19937_64 r2(71);
  std::vector<EncodedPair> pairs;
  for (int i = 0; i < 8; ++i)
    pairs.push_back({b2b::testing::random_sequence(r2, 4, vocab.size()), b2b::testing::random_sequence(r2, 6, vocab.size())});
  const double up = perplexity(uniform, pairs);
  if (std::abs(up - static_cast<double>(vocab.size())) > 1e-6) f.add("uniform ppl " + num(up, 12));
  return f.outcome("ppl vs recomputation max err " + num(worst, 3) + "; 50 BLEU corpora exact; uniform ppl " +
                   num(up, 10) + " for |V| " + std::to_string(vocab.size()));
}

Outcome sampler_laws() {
  Failures f;
  std::mt19937_64 gen(1), draw(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t outside = 0;
  for (int i = 0; i < 1000000; ++i) {
    std::vector<double> p(2 + gen() % 15);
    double z = 0;
    for (auto& x : p) z += x = u(gen) < 0.2 ? 0.0 : u(gen);
    if (z == 0) p[0] = z = 1;
    for (auto& x : p) x /= z;
    const auto argmax = std::max_element(p.begin(), p.end()) - p.begin();
    if (top_k_sample(p, 1, draw) != argmax) f.add("k=1 draw " + std::to_string(i) + " is not argmax");
    const std::size_t k = 1 + gen() % p.size();
    const int t = top_k_sample(p, k, draw);
    const auto above = std::count_if(p.begin(), p.end(), [&](double x) { return x > p[static_cast<std::size_t>(t)]; });
    if (static_cast<std::size_t>(above) >= k) ++outside;
  }
  if (outside) f.add(std::to_string(outside) + " draws outside the top-k set");
  const std::vector<double> p = {0.5, 0.3, 0.1, 0.1};
  std::array<int, 4> n{};
  std::mt19937_64 r(3);
  for (int i = 0; i < 100000; ++i) ++n[static_cast<std::size_t>(top_k_sample(p, 2, r))];
  const double f0 = n[0] / 1e5, f1 = n[1] / 1e5;
  if (std::abs(f0 - 0.625) > 0.01 || std::abs(f1 - 0.375) > 0.01 || n[2] || n[3])
    f.add("k=2 frequencies " + num(f0) + "/" + num(f1));
  return f.outcome("10^6 k=1 draws equal argmax, 10^6 random-k draws inside top-k, k=2 frequencies " + num(f0) +
                   "/" + num(f1));
}

Outcome pipeline_integrity() {
  Failures f;
  for (const auto& [fine, group] : b2b::testing::emotion_table())
    if (group_name(group_emotion(fine)) != group) f.add(fine + " grouped wrongly");
  const auto s = split_sizes(36628, SplitConfig{});
  if (s.train != 32965 || s.val != 1831 || s.test != 1832)
    f.add("split " + std::to_string(s.train) + "/" + std::to_string(s.val) + "/" + std::to_string(s.test));
  const auto data = synthetic::dialogues(500, 3);
  const auto vocab = build_vocab(corpus_lines(data), 1);
  for (const auto& d : data) {
    const auto plain = encode(d.utterance, vocab, 150);
    const auto pre = encode(emo_prepend(d, std::nullopt, false), vocab, 150);
    if (pre.size() != plain.size() + 1 || pre[1] != group_token_id(d.emotion.group) ||
        !std::equal(plain.begin() + 1, plain.end(), pre.begin() + 2))
      f.add("emo_prepend on '" + d.utterance + "'");
  }
  const std::string arabic = desegment("ب+ إبن +ت +ي");
  if (arabic != "بإبنتي") f.add("desegment gave '" + arabic + "'");
  return f.outcome("32/32 labels grouped, split 32965/1831/1832, 500 prepends add one group token, "
                   "desegment example reproduced");
}

Outcome emotion_classifier() {
  Failures f;
  const auto keyword_train = synthetic::keyword_task(1200, 4);
  const auto keyword_val = synthetic::keyword_task(200, 5);
  const auto keyword_test = synthetic::keyword_task(300, 6);
  ClassifierConfig cc;
  cc.learning_rate = 1e-3;
  auto donor_for = [](const Vocab& v, std::uint64_t seed) {
    auto m = EncoderModel::init(b2b::testing::tiny_config(v.size(), 32, 32), seed);
    return make_checkpoint(m);
  };
  const auto kv = build_vocab(corpus_lines(keyword_train), 1);
  auto k = train_classifier(keyword_train, keyword_val, kv, donor_for(kv, 7), cc);
  const double kacc = classification_accuracy(keyword_test, k.model, kv);
  if (!(kacc > 0.95)) f.add("keyword task accuracy " + num(kacc));

  const auto split = split_dataset(synthetic::dialogues(1500, 8), SplitConfig{0.8, 0.1, 0.1, 42});
  const auto dv = build_vocab(corpus_lines(split.train), 1);
  auto d = train_classifier(split.train, split.val, dv, donor_for(dv, 9), cc);
  const double acc = classification_accuracy(split.test, d.model, dv);
  const double maj = majority_rate(split.test);
  if (!(acc > maj)) f.add("held-out accuracy " + num(acc) + " <= majority " + num(maj));
  return f.outcome("keyword task " + num(kacc) + "; held-out " + num(acc) + " vs majority " + num(maj));
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism(const fs::path& fixture, const fs::path& work) {
  Failures f;
  const fs::path data = work / "dialogues.csv";
  fs::create_directories(work);
  {
    auto rows = load_dataset(fixture);
    rows.resize(300);
    std::ofstream os(data, std::ios::binary);
    write_dataset(os, rows);
  }
  const fs::path config = work / "config.json";
  {
    std::ofstream os(config);
    os << R"({"model": {"hidden_dim": 16, "num_layers": 1, "num_heads": 2, "ffn_dim": 32, "max_len": 48},
             "pretrain": {"steps": 30}, "train": {"epochs": 2, "batch_size": 16},
             "classifier": {"epochs": 1}, "min_freq": 1, "bleu_samples": 8})";
  }
  auto run = [&](const fs::path& dir) {
    auto call = [&](std::vector<std::string> args, const fs::path& stdout_file = {}) {
      args.insert(args.begin(), "b2b");
      args.insert(args.end(), {"--config", config.string()});
      std::vector<const char*> argv;
      for (auto& a : args) argv.push_back(a.c_str());
      std::ostringstream out, err;
      const int rc = cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
      if (rc != 0) f.add(args[1] + " exited " + std::to_string(rc) + ": " + err.str());
      if (!stdout_file.empty()) std::ofstream(stdout_file, std::ios::binary) << out.str();
    };
    const auto d = data.string(), p = dir.string();
    call({"pretrain", "--data", d, "--out", p + "/donor"});
    call({"finetune", "--data", d, "--donor", p + "/donor", "--variant", "warm+emoprepend", "--out", p + "/ft"});
    call({"train-classifier", "--data", d, "--donor", p + "/donor", "--out", p + "/clf"});
    call({"eval", "--data", d, "--checkpoint", p + "/ft/checkpoint", "--classifier", p + "/clf", "--variant",
          "warm+emoprepend", "--out", p + "/eval"});
    call({"generate", "--checkpoint", p + "/ft/checkpoint", "--classifier", p + "/clf", "--variant",
          "warm+emoprepend", "--utterance", "i was so scared when my dog ran away ."},
         dir / "generate.txt");
    call({"generate", "--checkpoint", p + "/ft/checkpoint", "--k", "1", "--utterance", "my boss yell +ed at me ."},
         dir / "generate_k1.txt");
    call({"bench", "--data", d, "--out", p + "/bench"}, dir / "bench.txt");
  };
  fs::remove_all(work / "a");
  fs::remove_all(work / "b");
  run(work / "a");
  run(work / "b");
  const auto fa = files_under(work / "a"), fb = files_under(work / "b");
  if (fa != fb) f.add("runs produced different file sets");
  std::size_t compared = 0;
  for (const auto& rel : fa) {
    if (b2b::testing::read_file(work / "a" / rel) != b2b::testing::read_file(work / "b" / rel))
      f.add(rel.string() + " differs");
    ++compared;
  }
  return f.outcome("pretrain, finetune, train-classifier, eval, generate, bench twice: " + std::to_string(compared) +
                   " files bitwise identical");
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path fixture = argc > 1 ? fs::path(argv[1]) : fs::path(B2B_SOURCE_DIR) / "data/fixture/dialogues.csv";
  const fs::path work = fs::temp_directory_path() / "b2b_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  struct Criterion {
    std::string name;
    double budget_s;  // 0 = no runtime limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"gradient verification", 120, gradient_verification},
      {"warm-start identity", 60, warm_start_identity},
      {"causality", 0, causality},
      {"overfit sanity", 600, overfit},
      {"metric oracles", 0, metric_oracles},
      {"sampler laws", 0, sampler_laws},
      {"pipeline integrity", 0, pipeline_integrity},
      {"emotion classifier", 0, emotion_classifier},
      {"determinism", 0, [&] { return determinism(fixture, work / "determinism"); }},
      {"warm-start PPL ordering (3 seeds)", 3600, [&] { return ordering(fixture, work / "ordering"); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += "; runtime " + num(secs, 4) + " s exceeds " + num(c.budget_s, 4) + " s";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << " [" << num(secs, 3) << " s]"
              << std::endl;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << criteria.size() - static_cast<std::size_t>(failed) << "/"
            << criteria.size() << std::endl;
  return failed ? 1 : 0;
}
