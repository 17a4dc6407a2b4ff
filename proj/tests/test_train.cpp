#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "b2b/synthetic.hpp"
#include "b2b/train.hpp"
#include "helpers.hpp"

using namespace b2b;
using b2b::testing::tiny_config;

TEST_CASE("variant names round trip", "[train]") {
  for (auto v : {Variant::Warm, Variant::Cold, Variant::WarmEmoPrepend})
    CHECK(parse_variant(variant_name(v)) == v);
  CHECK(variant_label(Variant::Cold) == "BERT2BERT-UN");
  CHECK_THROWS_AS(parse_variant("hot"), std::invalid_argument);
  CHECK(uses_donor(Variant::WarmEmoPrepend));
  CHECK(!uses_donor(Variant::Cold));
}

TEST_CASE("source text per variant", "[train]") {
  DialogueSample s{{"sad", EmotionGroup::Sadness}, "my cat left", "so sorry"};
  CHECK(source_text(s, Variant::Warm) == "my cat left");
  CHECK(source_text(s, Variant::Cold, EmotionGroup::Joy, true) == "my cat left");
  CHECK(source_text(s, Variant::WarmEmoPrepend) == "<sadness> my cat left");
  CHECK(source_text(s, Variant::WarmEmoPrepend, EmotionGroup::Fear, true) == "<fear> my cat left");
  CHECK_THROWS_AS(source_text(s, Variant::WarmEmoPrepend, std::nullopt, true), DatasetError);
}

TEST_CASE("bucketed batches partition the data", "[train]") {
  std::mt19937_64 gen(1);
  std::vector<EncodedPair> data;
  for (int i = 0; i < 103; ++i)
    data.push_back({b2b::testing::random_sequence(gen, 3 + gen() % 9, 30), b2b::testing::random_sequence(gen, 3 + gen() % 9, 30)});
  std::mt19937_64 a(5), b(5);
  auto x = bucketed_batches(data, 8, 3, a);
  auto y = bucketed_batches(data, 8, 3, b);
  CHECK(x == y);
  std::multiset<std::size_t> seen;
  for (const auto& batch : x) {
    CHECK((!batch.empty() && batch.size() <= 8));
    seen.insert(batch.begin(), batch.end());
  }
  REQUIRE(seen.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(seen.count(i) == 1);
}

TEST_CASE("initial model checks donor presence", "[train]") {
  auto cfg = tiny_config(30);
  auto enc = EncoderModel::init(cfg, 1);
  const auto donor = make_checkpoint(enc);
  TrainConfig tc;
  tc.variant = Variant::Cold;
  CHECK_THROWS_AS(initial_model(cfg, donor, tc), ContractError);
  tc.variant = Variant::Warm;
  CHECK_THROWS_AS(initial_model(cfg, std::nullopt, tc), ContractError);
  auto m = initial_model(cfg, donor, tc);
  CHECK(m.word_embeddings.values() == enc.word_embeddings.values());
}

TEST_CASE("fine-tuning is reproducible and keeps the best epoch", "[train]") {
  const auto data = synthetic::dialogues(120, 2);
  const auto vocab = build_vocab(corpus_lines(data), 1);
  const std::vector<DialogueSample> train(data.begin(), data.begin() + 100), val(data.begin() + 100, data.end());
  auto cfg = tiny_config(vocab.size(), 16, 48);
  TrainConfig tc;
  tc.variant = Variant::Cold;
  tc.epochs = 3;
  tc.batch_size = 16;
  tc.learning_rate = 1e-3;
  std::vector<TrainLogRow> streamed;
  auto a = finetune(train, val, vocab, cfg, std::nullopt, tc, [&](const TrainLogRow& r) { streamed.push_back(r); });
  auto b = finetune(train, val, vocab, cfg, std::nullopt, tc);
  REQUIRE(a.log.size() == 6);
  CHECK(streamed.size() == a.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.log[i].ppl == Catch::Approx(std::exp(a.log[i].loss)));
  }
  CHECK(a.model.word_embeddings.values() == b.model.word_embeddings.values());

  double best = 1e300;
  std::size_t best_epoch = 0;
  for (const auto& r : a.log)
    if (r.split == "val" && r.loss < best) {
      best = r.loss;
      best_epoch = r.epoch;
    }
  CHECK(a.best_epoch == best_epoch);
  CHECK(a.best_val_loss == best);
  CHECK(pad_only_loss(a.model, encode_samples(val, vocab, cfg.max_len, tc.variant)) == Catch::Approx(best).epsilon(1e-12));

  auto path = std::filesystem::temp_directory_path() / "b2b_train_log.csv";
  write_train_log(path, a.log);
  CHECK(b2b::testing::read_file(path).rfind("epoch,step,split,loss,ppl\n1,7,train,", 0) == 0);
  std::filesystem::remove(path);

  tc.seed = 7;
  auto c = finetune(train, val, vocab, cfg, std::nullopt, tc);
  CHECK(c.log[0].loss != a.log[0].loss);
}

TEST_CASE("non-finite loss stops training", "[train]") {
  const auto data = synthetic::dialogues(20, 3);
  const auto vocab = build_vocab(corpus_lines(data), 1);
  TrainConfig tc;
  tc.variant = Variant::Cold;
  tc.learning_rate = std::numeric_limits<double>::quiet_NaN();
  tc.batch_size = 4;
  CHECK_THROWS_AS(finetune(data, {}, vocab, tiny_config(vocab.size(), 16, 48), std::nullopt, tc), DivergenceError);
  tc.learning_rate = 1e-3;
  tc.epochs = 0;
  CHECK_THROWS_AS(finetune(data, {}, vocab, tiny_config(vocab.size(), 16, 48), std::nullopt, tc), std::invalid_argument);
}
