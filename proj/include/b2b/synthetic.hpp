#pragma once

// Synthetic English-like corpora with '+'-segmented affixes, used for the
// bundled fixture, tests and demos. Words cluster by topic, utterances carry
// an emotion keyword, and responses open with a group-specific phrase and
// then talk about the utterance's topic.

#include <array>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "b2b/dataset.hpp"

namespace b2b::synthetic {

struct Topic {
  std::array<std::string_view, 6> people;
  std::array<std::string_view, 5> verbs;
  std::array<std::string_view, 6> things;
  std::array<std::string_view, 3> places;
  std::array<std::string_view, 3> qualities;
};

inline const std::vector<Topic>& topics() {
  static const std::vector<Topic> t = {
      {{"dog", "cat", "puppy", "kitten", "parrot", "hamster"}, {"feed", "walk", "train", "groom", "adopt"},
       {"leash", "collar", "treat", "bowl", "toy", "blanket"}, {"park", "shelter", "vet"}, {"fluffy", "playful", "tiny"}},
      {{"brother", "sister", "mother", "father", "cousin", "grandma"}, {"visit", "call", "hug", "invite", "thank"},
       {"gift", "letter", "photo", "dinner", "birthday", "wedding"}, {"home", "village", "porch"}, {"kind", "old", "gentle"}},
      {{"boss", "coworker", "manager", "client", "intern", "colleague"}, {"promote", "hire", "praise", "email", "review"},
       {"project", "report", "meeting", "deadline", "salary", "contract"}, {"office", "factory", "lobby"}, {"busy", "strict", "fair"}},
      {{"teacher", "classmate", "professor", "tutor", "principal", "student"}, {"study", "grade", "pass", "fail", "teach"},
       {"exam", "essay", "homework", "lecture", "diploma", "quiz"}, {"school", "library", "campus"}, {"hard", "long", "final"}},
      {{"coach", "player", "referee", "captain", "runner", "goalie"}, {"win", "lose", "score", "practice", "cheer"},
       {"match", "trophy", "ball", "race", "medal", "league"}, {"stadium", "field", "gym"}, {"fast", "strong", "tired"}},
      {{"chef", "baker", "neighbor", "aunt", "uncle", "host"}, {"bake", "cook", "taste", "burn", "serve"},
       {"cake", "soup", "bread", "pie", "recipe", "oven"}, {"kitchen", "bakery", "restaurant"}, {"sweet", "warm", "spicy"}},
      {{"pilot", "driver", "guide", "tourist", "passenger", "sailor"}, {"book", "pack", "cancel", "delay", "miss"},
       {"flight", "ticket", "hotel", "suitcase", "train", "passport"}, {"airport", "station", "harbor"}, {"late", "crowded", "cheap"}},
      {{"singer", "drummer", "band", "pianist", "guitarist", "choir"}, {"play", "sing", "record", "perform", "tune"},
       {"song", "concert", "album", "guitar", "piano", "show"}, {"studio", "theater", "club"}, {"loud", "beautiful", "new"}},
      {{"gardener", "farmer", "landlord", "florist", "grandpa", "friend"}, {"plant", "water", "grow", "prune", "harvest"},
       {"tree", "flower", "seed", "tomato", "lawn", "fence"}, {"garden", "farm", "yard"}, {"green", "tall", "fresh"}},
      {{"doctor", "nurse", "dentist", "surgeon", "patient", "therapist"}, {"examine", "treat", "heal", "test", "operate"},
       {"surgery", "checkup", "injury", "medicine", "fever", "scan"}, {"hospital", "clinic", "ward"}, {"sick", "healthy", "weak"}},
      {{"banker", "lawyer", "accountant", "investor", "seller", "buyer"}, {"lend", "save", "spend", "invest", "owe"},
       {"loan", "debt", "budget", "bill", "savings", "account"}, {"bank", "market", "court"}, {"rich", "poor", "expensive"}},
      {{"plumber", "tenant", "painter", "builder", "cleaner", "electrician"}, {"fix", "paint", "clean", "build", "repair"},
       {"roof", "wall", "door", "window", "floor", "sink"}, {"apartment", "house", "basement"}, {"broken", "dirty", "shiny"}},
  };
  return t;
}

/// Two keywords per fine label; the first is the label itself.
inline std::vector<std::string_view> keywords(std::string_view fine) {
  static const std::vector<std::pair<std::string_view, std::vector<std::string_view>>> table = {
      {"excited", {"excited", "thrilled"}}, {"proud", {"proud", "honored"}},
      {"grateful", {"grateful", "thankful"}}, {"hopeful", {"hopeful", "optimistic"}},
      {"confident", {"confident", "certain"}}, {"joyful", {"joyful", "cheerful"}},
      {"content", {"content", "satisfied"}}, {"prepared", {"prepared", "ready"}},
      {"anticipating", {"anticipating", "eager"}}, {"caring", {"caring", "protective"}},
      {"sentimental", {"sentimental", "touched"}}, {"trusting", {"trusting", "secure"}},
      {"faithful", {"faithful", "loyal"}}, {"nostalgic", {"nostalgic", "wistful"}},
      {"surprised", {"surprised", "shocked"}}, {"impressed", {"impressed", "amazed"}},
      {"sad", {"sad", "down"}}, {"lonely", {"lonely", "isolated"}},
      {"guilty", {"guilty", "remorseful"}}, {"disappointed", {"disappointed", "let down"}},
      {"devastated", {"devastated", "heartbroken"}}, {"embarrassed", {"embarrassed", "awkward"}},
      {"ashamed", {"ashamed", "humiliated"}}, {"angry", {"angry", "mad"}},
      {"annoyed", {"annoyed", "irritated"}}, {"furious", {"furious", "livid"}},
      {"disgusted", {"disgusted", "grossed out"}}, {"jealous", {"jealous", "envious"}},
      {"afraid", {"afraid", "scared"}}, {"terrified", {"terrified", "petrified"}},
      {"anxious", {"anxious", "nervous"}}, {"apprehensive", {"apprehensive", "uneasy"}},
  };
  for (const auto& [k, v] : table)
    if (k == fine) return v;
  return {fine};
}

inline const std::array<std::vector<std::string_view>, kNumGroups>& openers() {
  static const std::array<std::vector<std::string_view>, kNumGroups> o = {{
      {"that is wonderful !", "good for you !", "that sounds great !"},
      {"that is so sweet .", "how lovely .", "that is really touching ."},
      {"wow , i did not see that coming !", "really ? that is unexpected !", "no way !"},
      {"i am so sorry to hear that .", "that is really sad .", "oh , that must be hard ."},
      {"that is so unfair .", "i would be mad too .", "that sounds really frustrating ."},
      {"oh no , that sounds scary .", "i understand why you are worried .", "stay calm , it will be ok ."},
  }};
  return o;
}

class Generator {
 public:
  explicit Generator(std::uint64_t seed) : rng_(seed) {}

  template <class C>
  auto pick(const C& c) -> decltype(*std::begin(c)) {
    std::uniform_int_distribution<std::size_t> d(0, std::size(c) - 1);
    return *(std::begin(c) + static_cast<std::ptrdiff_t>(d(rng_)));
  }
  bool coin(double p) { return std::uniform_real_distribution<double>(0, 1)(rng_) < p; }

  static std::string past(std::string_view v) { return std::string(v) + " +ed"; }
  static std::string third(std::string_view v) { return std::string(v) + " +s"; }
  static std::string gerund(std::string_view v) { return std::string(v) + " +ing"; }
  static std::string plural(std::string_view n) { return std::string(n) + " +s"; }

  std::string when() {
    static const std::array<std::string_view, 6> w = {"yesterday", "last week", "this morning", "today",
                                                      "last night", "on monday"};
    return std::string(pick(w));
  }
  std::string later() {
    static const std::array<std::string_view, 4> w = {"tomorrow", "next week", "soon", "on friday"};
    return std::string(pick(w));
  }

  std::string thing_phrase(const Topic& t) {
    if (coin(0.25)) return "the " + plural(pick(t.things));
    if (coin(0.3)) return "the " + std::string(pick(t.qualities)) + " " + std::string(pick(t.things));
    return "the " + std::string(pick(t.things));
  }

  /// Narrative sentence inside one topic.
  std::string narrative(const Topic& t) {
    const std::string p(pick(t.people));
    switch (std::uniform_int_distribution<int>(0, 4)(rng_)) {
      case 0: return "my " + p + " " + past(pick(t.verbs)) + " " + thing_phrase(t) + " " + when() + " .";
      case 1: return "the " + p + " is " + gerund(pick(t.verbs)) + " " + thing_phrase(t) + " at the " +
                     std::string(pick(t.places)) + " .";
      case 2: return "every day my " + p + " " + third(pick(t.verbs)) + " " + thing_phrase(t) + " .";
      case 3: return "we will " + std::string(pick(t.verbs)) + " " + thing_phrase(t) + " with the " +
                     std::string(pick(t.people)) + " " + later() + " .";
      default: return "the " + std::string(pick(t.qualities)) + " " + p + " " + past(pick(t.verbs)) + " " +
                      thing_phrase(t) + " and " + past(pick(t.verbs)) + " " + thing_phrase(t) + " .";
    }
  }

  struct Utterance {
    std::string text;
    std::size_t topic;
    std::string person;
  };

  Utterance utterance(std::string_view fine) {
    const std::size_t ti = std::uniform_int_distribution<std::size_t>(0, topics().size() - 1)(rng_);
    const auto& t = topics()[ti];
    const std::string p(pick(t.people));
    const std::string kw(pick(keywords(fine)));
    std::string s;
    switch (std::uniform_int_distribution<int>(0, 3)(rng_)) {
      case 0: s = when() + " my " + p + " " + past(pick(t.verbs)) + " " + thing_phrase(t) + " and i felt " + kw; break;
      case 1: s = "i am " + kw + " because my " + p + " will " + std::string(pick(t.verbs)) + " " +
                  thing_phrase(t) + " " + later(); break;
      case 2: s = "i was so " + kw + " when my " + p + " " + past(pick(t.verbs)) + " " + thing_phrase(t); break;
      default: s = "my " + p + " " + past(pick(t.verbs)) + " " + thing_phrase(t) + " at the " +
                   std::string(pick(t.places)) + " . i am " + kw; break;
    }
    return {s + " .", ti, p};
  }

  std::string response(EmotionGroup g, const Utterance& u) {
    const auto& t = topics()[u.topic];
    const auto gi = static_cast<std::size_t>(g);
    std::string s(pick(openers()[gi]));
    const std::string v(pick(t.verbs));
    switch (gi) {
      case 0: s += coin(0.5) ? " did your " + u.person + " " + v + " " + thing_phrase(t) + " again ?"
                             : " you must be proud of your " + u.person + " ."; break;
      case 1: s += " your " + u.person + " really cares about " + thing_phrase(t) + " ."; break;
      case 2: s += " what did your " + u.person + " do with " + thing_phrase(t) + " ?"; break;
      case 3: s += " i hope your " + u.person + " can " + v + " " + thing_phrase(t) + " soon ."; break;
      case 4: s += " your " + u.person + " should not " + v + " " + thing_phrase(t) + " like that ."; break;
      default: s += " i hope " + thing_phrase(t) + " is safe with your " + u.person + " ."; break;
    }
    if (coin(0.3)) s += " " + narrative(t);
    return s;
  }

  DialogueSample dialogue() {
    const auto& fe = pick(kFineEmotions);
    const auto u = utterance(fe.name);
    return {EmotionLabel{std::string(fe.name), fe.group}, u.text, response(fe.group, u)};
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline std::vector<DialogueSample> dialogues(std::size_t n, std::uint64_t seed) {
  Generator g(seed);
  std::vector<DialogueSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(g.dialogue());
  return out;
}

/// Donor pretraining text: narrative sentences plus utterance- and
/// response-like lines from the same grammar (never the dialogue pairs).
inline std::vector<std::string> pretrain_corpus(std::size_t n, std::uint64_t seed) {
  Generator g(seed);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::uniform_real_distribution<double>(0, 1)(g.rng());
    if (r < 0.4) {
      out.push_back(g.narrative(g.pick(topics())));
    } else {
      auto d = g.dialogue();
      out.push_back(r < 0.7 ? d.utterance : d.response);
    }
  }
  return out;
}

/// Separable classification task: random filler words with exactly one
/// group keyword inserted at a random position.
inline std::vector<DialogueSample> keyword_task(std::size_t n, std::uint64_t seed) {
  Generator g(seed);
  static const std::array<std::string_view, 12> filler = {"the", "a", "my", "was", "day", "and",
                                                          "then", "it", "we", "so", "very", "today"};
  std::vector<DialogueSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& fe = g.pick(kFineEmotions);
    std::vector<std::string> words;
    for (int j = 0; j < 6; ++j) words.emplace_back(g.pick(filler));
    const auto pos = std::uniform_int_distribution<std::size_t>(0, words.size())(g.rng());
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos), std::string(group_name(fe.group)));
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    out.push_back({EmotionLabel{std::string(fe.name), fe.group}, text, "ok ."});
  }
  return out;
}

}  // namespace b2b::synthetic
