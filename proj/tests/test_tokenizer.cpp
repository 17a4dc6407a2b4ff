#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>
#include <set>

#include "b2b/tokenizer.hpp"

using namespace b2b;

TEST_CASE("special tokens occupy ids 0..10", "[tokenizer]") {
  Vocab v;
  REQUIRE(v.size() == 11);
  const std::vector<std::string> want = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "<joy>",
                                         "<love>", "<surprise>", "<sadness>", "<anger>", "<fear>"};
  for (int i = 0; i < 11; ++i) CHECK(v.token(i) == want[static_cast<std::size_t>(i)]);
  CHECK(v.id("<fear>") == 10);
}

TEST_CASE("build_vocab enumerations", "[tokenizer]") {
  auto v1 = build_vocab({"a b", "a"}, 1);
  CHECK(v1.size() == 13);
  CHECK(v1.id("a") == 11);
  CHECK(v1.id("b") == 12);
  auto v2 = build_vocab({"a b", "a"}, 2);
  CHECK(v2.size() == 12);
  CHECK(v2.id("b") == special::kUnk);
  CHECK_THROWS_AS(build_vocab({}, 1), VocabError);
  CHECK_THROWS_AS(build_vocab({"", "   "}, 1), VocabError);
}

TEST_CASE("build_vocab orders by frequency then lexicographically", "[tokenizer]") {
  auto v = build_vocab({"c b a", "b c", "c"}, 1);
  CHECK(v.token(11) == "c");
  CHECK(v.token(12) == "b");
  CHECK(v.token(13) == "a");
  auto w = build_vocab({"z y x"}, 1);
  CHECK(w.token(11) == "x");
  CHECK(w.token(13) == "z");
  CHECK(build_vocab({"c b a", "b c", "c"}, 1) == v);
}

TEST_CASE("segmented vocabulary is smaller than surface vocabulary", "[tokenizer]") {
  const std::vector<std::string> stems = {"walk", "talk", "paint", "call", "help", "visit", "cook", "play"};
  const std::vector<std::string> affixes = {"", "+s", "+ed", "+ing"};
  std::vector<std::string> segmented, surface;
  for (const auto& s : stems)
    for (const auto& a : affixes) {
      segmented.push_back(a.empty() ? s : s + " " + a);
      surface.push_back(desegment(segmented.back()));
    }
  // Oracle: distinct whitespace tokens counted directly.
  std::set<std::string> seg_tokens, surf_tokens;
  for (const auto& l : segmented)
    for (auto& t : split_whitespace(l)) seg_tokens.insert(t);
  for (const auto& l : surface)
    for (auto& t : split_whitespace(l)) surf_tokens.insert(t);
  auto vs = build_vocab(segmented, 1);
  auto vu = build_vocab(surface, 1);
  CHECK(vs.size() == seg_tokens.size() + 11);
  CHECK(vu.size() == surf_tokens.size() + 11);
  CHECK(vs.size() < vu.size());
}

TEST_CASE("encode examples and truncation", "[tokenizer]") {
  auto v = build_vocab({"a b"}, 1);
  CHECK(encode("", v, 150) == TokenSequence{special::kCls, special::kSep});
  CHECK(encode("a b", v, 150) == TokenSequence{special::kCls, v.id("a"), v.id("b"), special::kSep});
  CHECK(encode("a zzz", v, 150)[2] == special::kUnk);
  CHECK(encode("a b", v, 150, false) == TokenSequence{v.id("a"), v.id("b")});

  std::string long_text;
  for (int i = 0; i < 200; ++i) long_text += i % 2 ? "a " : "b ";
  auto ids = encode(long_text, v, 150);
  CHECK(ids.size() == 150);
  CHECK(ids.front() == special::kCls);
  CHECK(ids.back() == special::kSep);
  CHECK_THROWS_AS(encode("a", v, 1), std::invalid_argument);
}

TEST_CASE("encode is total over arbitrary strings", "[tokenizer]") {
  auto v = build_vocab({"a b"}, 1);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> byte(1, 255);
  for (int i = 0; i < 200; ++i) {
    std::string s;
    for (int j = 0; j < 30; ++j) s += static_cast<char>(byte(rng));
    for (int id : encode(s, v, 20)) CHECK((id >= 0 && static_cast<std::size_t>(id) < v.size()));
  }
}

TEST_CASE("decode drops specials and stops at SEP", "[tokenizer]") {
  auto v = build_vocab({"a b"}, 1);
  const int a = v.id("a"), b = v.id("b");
  CHECK(decode({special::kCls, a, b, special::kSep}, v) == "a b");
  CHECK(decode({special::kCls, special::kSep}, v).empty());
  CHECK(decode({special::kCls, a, special::kSep, b}, v) == "a");
  CHECK(decode({a, special::kPad, b}, v) == "a b");
  CHECK_THROWS_AS(decode({99}, v), VocabError);
  CHECK_THROWS_AS(decode({-1}, v), VocabError);
}

TEST_CASE("decode inverts encode on in-vocabulary text", "[tokenizer]") {
  auto v = build_vocab({"the dog +s walk +ed home", "a cat"}, 1);
  std::mt19937_64 rng(5);
  std::vector<std::string> words(v.tokens().begin() + 11, v.tokens().end());
  for (int i = 0; i < 100; ++i) {
    std::string t;
    const int n = static_cast<int>(rng() % 20);
    for (int j = 0; j < n; ++j) t += (j ? " " : "") + words[rng() % words.size()];
    CHECK(decode(encode(t, v, 150), v) == t);
  }
}

TEST_CASE("desegment marker rules", "[tokenizer]") {
  CHECK(desegment("ب+ إبن +ت +ي") == "بإبنتي");
  CHECK(desegment("hello world") == "hello world");
  CHECK(desegment("ab+ +cd") == "abcd");
  CHECK(desegment("walk +ed home") == "walked home");
  CHECK(desegment("al+ bait") == "albait");
  CHECK(desegment("") == "");
}

TEST_CASE("desegment is idempotent", "[tokenizer]") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> pieces = {"a", "b+", "+c", "+d+", "+", "++", "e", "+f"};
  for (int i = 0; i < 2000; ++i) {
    std::string t;
    const int n = static_cast<int>(rng() % 8);
    for (int j = 0; j < n; ++j) t += (j ? " " : "") + pieces[rng() % pieces.size()];
    const auto once = desegment(t);
    INFO(t);
    CHECK(desegment(once) == once);
  }
}

TEST_CASE("vocabulary file round trip", "[tokenizer]") {
  auto v = build_vocab({"x y z y"}, 1);
  auto path = std::filesystem::temp_directory_path() / "b2b_test_vocab.txt";
  v.save(path);
  CHECK(Vocab::load(path) == v);
  {
    std::ofstream os(path);
    os << "[PAD]\n[CLS]\n";
  }
  CHECK_THROWS_AS(Vocab::load(path), VocabError);
  std::filesystem::remove(path);
}

TEST_CASE("segmenter hooks", "[tokenizer]") {
  CHECK(identity_segmenter()("a b") == "a b");
  auto upper = external_segmenter("tr a-z A-Z");
  CHECK(upper("walk +ed") == "WALK +ED");
  CHECK_THROWS(external_segmenter("false")("x"));
}
