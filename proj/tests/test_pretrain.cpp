#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "b2b/checkpoint.hpp"
#include "b2b/pretrain.hpp"
#include "b2b/synthetic.hpp"
#include "helpers.hpp"

using namespace b2b;
using b2b::testing::tiny_config;

TEST_CASE("masking selects the rate and splits 80/10/10", "[pretrain]") {
  const std::size_t vocab = 60;
  std::mt19937_64 rng(1), data(2);
  std::size_t eligible = 0, selected = 0, masked = 0, kept = 0, replaced = 0;
  for (int s = 0; s < 4000; ++s) {
    auto ids = b2b::testing::random_sequence(data, 30, vocab);
    ids.push_back(special::kPad);
    ids.insert(ids.begin() + 3, special::kFirstEmotion + 2);
    auto b = mask_tokens(ids, 0.15, rng, vocab);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      CHECK(b.attention[i] == (ids[i] != special::kPad));
      if (special::is_special(ids[i])) {
        REQUIRE(b.label_ids[i] == kIgnoreLabel);
        REQUIRE(b.input_ids[i] == ids[i]);
        continue;
      }
      ++eligible;
      if (b.label_ids[i] == kIgnoreLabel) {
        REQUIRE(b.input_ids[i] == ids[i]);
        continue;
      }
      REQUIRE(b.label_ids[i] == ids[i]);
      ++selected;
      if (b.input_ids[i] == special::kMask) ++masked;
      else if (b.input_ids[i] == ids[i]) ++kept;
      else ++replaced;
      REQUIRE((!special::is_special(b.input_ids[i]) || b.input_ids[i] == special::kMask));
    }
  }
  const double sel = static_cast<double>(selected);
  CHECK(std::abs(sel / static_cast<double>(eligible) - 0.15) <= 0.005);
  CHECK(std::abs(masked / sel - 0.80) <= 0.02);
  // A random replacement may redraw the original word (1 in 49 here).
  CHECK(std::abs(replaced / sel - 0.10 * 48.0 / 49.0) <= 0.02);
  CHECK(std::abs(kept / sel - (0.10 + 0.10 / 49.0)) <= 0.02);
}

TEST_CASE("mask rate 0 and 1", "[pretrain]") {
  std::mt19937_64 rng(3), data(4);
  auto ids = b2b::testing::random_sequence(data, 20, 40);
  auto none = mask_tokens(ids, 0.0, rng, 40);
  for (int l : none.label_ids) CHECK(l == kIgnoreLabel);
  CHECK(none.input_ids == ids);
  auto all = mask_tokens(ids, 1.0, rng, 40);
  for (std::size_t i = 1; i + 1 < ids.size(); ++i) CHECK(all.label_ids[i] == ids[i]);
  CHECK_THROWS_AS(mask_tokens(ids, 1.5, rng, 40), std::invalid_argument);

  auto vocab = build_vocab({"a b c"}, 1);
  PretrainConfig pc;
  pc.steps = 1;
  pc.mask_rate = 0.0;
  CHECK_THROWS_AS(pretrain_mlm({"a b c"}, vocab, tiny_config(vocab.size()), pc), ContractError);
}

TEST_CASE("pretraining is deterministic and loss falls", "[pretrain]") {
  const auto corpus = synthetic::pretrain_corpus(500, 5);
  const auto vocab = build_vocab(corpus, 1);
  PretrainConfig pc;
  pc.steps = 2000;
  pc.batch_size = 16;
  pc.learning_rate = 1e-3;
  auto cfg = tiny_config(vocab.size(), 32, 40);
  auto a = pretrain_mlm(corpus, vocab, cfg, pc);
  REQUIRE(a.log.size() == pc.steps);
  auto window_mean = [&](std::size_t from) {
    double s = 0;
    for (std::size_t i = from; i < from + 100; ++i) s += a.log[i].loss;
    return s / 100.0;
  };
  const double first = window_mean(0), last = window_mean(pc.steps - 100);
  INFO("first " << first << " last " << last);
  CHECK(last <= 0.7 * first);

  pc.steps = 30;
  auto x = pretrain_mlm(corpus, vocab, cfg, pc);
  auto y = pretrain_mlm(corpus, vocab, cfg, pc);
  REQUIRE(x.checkpoint.params.size() == y.checkpoint.params.size());
  for (std::size_t i = 0; i < x.checkpoint.params.size(); ++i)
    CHECK(x.checkpoint.params[i].second.values() == y.checkpoint.params[i].second.values());
  pc.seed = 43;
  auto z = pretrain_mlm(corpus, vocab, cfg, pc);
  CHECK(z.checkpoint.params[0].second.values() != x.checkpoint.params[0].second.values());
}

TEST_CASE("a one-step donor is a valid warm-start source", "[pretrain]") {
  const auto corpus = synthetic::pretrain_corpus(50, 6);
  const auto vocab = build_vocab(corpus, 1);
  PretrainConfig pc;
  pc.steps = 1;
  auto res = pretrain_mlm(corpus, vocab, tiny_config(vocab.size()), pc);
  auto dir = b2b::testing::fresh_dir("b2b_one_step_donor");
  save_checkpoint(res.checkpoint, dir, &vocab);
  auto loaded = load_checkpoint(dir);
  CHECK(loaded.kind == ModelKind::Encoder);
  CHECK(load_checkpoint_vocab(dir).value() == vocab);
  auto s2s = warm_start(loaded, 1);
  CHECK(s2s.config.vocab_size == vocab.size());
  std::filesystem::remove_all(dir);

  auto log_path = std::filesystem::temp_directory_path() / "b2b_pretrain_log.csv";
  write_pretrain_log(log_path, res.log);
  CHECK(b2b::testing::read_file(log_path).rfind("step,loss\n1,", 0) == 0);
  std::filesystem::remove(log_path);
}
