#include <catch2/catch_amalgamated.hpp>

#include "b2b/classifier.hpp"
#include "b2b/dataset.hpp"
#include "b2b/synthetic.hpp"
#include "helpers.hpp"

using namespace b2b;
using b2b::testing::tiny_config;

namespace {

Checkpoint random_donor(const Vocab& vocab, std::uint64_t seed, std::size_t hidden = 32) {
  auto m = EncoderModel::init(tiny_config(vocab.size(), hidden, 32), seed);
  return make_checkpoint(m);
}

}  // namespace

TEST_CASE("argmax ties go to the lowest index", "[classifier]") {
  CHECK(argmax_lowest(std::vector<double>{0.2, 0.4, 0.4}) == 1);
  CHECK(argmax_lowest(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(argmax_lowest(std::vector<double>{0.1}) == 0);
}

TEST_CASE("predictions are distributions over the six groups", "[classifier]") {
  const auto data = synthetic::dialogues(40, 1);
  const auto vocab = build_vocab(corpus_lines(data), 1);
  auto clf = ClassifierModel::from_donor(random_donor(vocab, 2), 3);
  std::vector<std::string> utts;
  for (const auto& d : data) utts.push_back(d.utterance);
  const auto batched = predict_emotions(utts, clf, vocab, 7);
  REQUIRE(batched.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    double s = 0;
    for (double p : batched[i].probs) s += p;
    CHECK(s == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(batched[i].group == kAllGroups[argmax_lowest(batched[i].probs)]);
    CHECK(batched[i].probability == batched[i].probs[static_cast<std::size_t>(batched[i].group)]);
    const auto single = predict_emotion(utts[i], clf, vocab);
    CHECK(single.group == batched[i].group);
    CHECK(std::abs(single.probability - batched[i].probability) <= 1e-12);
  }
}

TEST_CASE("majority rate", "[classifier]") {
  auto mk = [](EmotionGroup g) { return DialogueSample{{"x", g}, "u", "r"}; };
  CHECK(majority_rate({mk(EmotionGroup::Joy), mk(EmotionGroup::Fear), mk(EmotionGroup::Fear)}) ==
        Catch::Approx(2.0 / 3.0));
  CHECK(majority_rate({}) == 0.0);
}

TEST_CASE("separable keyword task exceeds 0.95 accuracy", "[classifier][slow]") {
  const auto train = synthetic::keyword_task(1200, 4);
  const auto val = synthetic::keyword_task(200, 5);
  const auto test = synthetic::keyword_task(300, 6);
  const auto vocab = build_vocab(corpus_lines(train), 1);
  ClassifierConfig cc;
  cc.learning_rate = 1e-3;
  auto res = train_classifier(train, val, vocab, random_donor(vocab, 7), cc);
  CHECK(res.trace.size() == 3);
  const double acc = classification_accuracy(test, res.model, vocab);
  INFO("accuracy " << acc);
  CHECK(acc > 0.95);
}

TEST_CASE("held-out accuracy beats the majority class", "[classifier][slow]") {
  const auto data = synthetic::dialogues(1500, 8);
  const auto split = split_dataset(data, SplitConfig{0.8, 0.1, 0.1, 42});
  const auto vocab = build_vocab(corpus_lines(split.train), 1);
  ClassifierConfig cc;
  cc.learning_rate = 1e-3;
  auto res = train_classifier(split.train, split.val, vocab, random_donor(vocab, 9), cc);
  const double acc = classification_accuracy(split.test, res.model, vocab);
  INFO("accuracy " << acc << " majority " << majority_rate(split.test));
  CHECK(acc > majority_rate(split.test));

  auto again = train_classifier(split.train, split.val, vocab, random_donor(vocab, 9), cc);
  CHECK(again.model.head_weight.values() == res.model.head_weight.values());
  CHECK(again.best_epoch == res.best_epoch);
}

TEST_CASE("classifier rejects a donor with another vocabulary", "[classifier]") {
  const auto data = synthetic::keyword_task(20, 1);
  const auto vocab = build_vocab(corpus_lines(data), 1);
  const auto other = build_vocab({"x y"}, 1);
  CHECK_THROWS_AS(train_classifier(data, data, vocab, random_donor(other, 1), ClassifierConfig{}), ModelError);
  CHECK_THROWS_AS(train_classifier({}, data, vocab, random_donor(vocab, 1), ClassifierConfig{}), ContractError);
}

TEST_CASE("classifier checkpoint round trip", "[classifier]") {
  const auto data = synthetic::keyword_task(30, 2);
  const auto vocab = build_vocab(corpus_lines(data), 1);
  auto clf = ClassifierModel::from_donor(random_donor(vocab, 3), 4);
  auto dir = b2b::testing::fresh_dir("b2b_classifier_ckpt");
  save_checkpoint(make_checkpoint(clf), dir, &vocab);
  auto back = classifier_from_checkpoint(load_checkpoint(dir));
  for (const auto& d : data) {
    auto a = predict_emotion(d.utterance, clf, vocab);
    auto b = predict_emotion(d.utterance, back, vocab);
    CHECK(a.group == b.group);
    CHECK(std::abs(a.probability - b.probability) <= 1e-5);
  }
  std::filesystem::remove_all(dir);
}
