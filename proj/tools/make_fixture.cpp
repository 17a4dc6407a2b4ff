// Writes the bundled desk-scale fixture: a dialogue CSV and a plain-text
// pretraining corpus drawn from the synthetic generator.
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "b2b/dataset.hpp"
#include "b2b/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic fixture corpus", "make_fixture"};
  std::string out = "data/fixture";
  std::size_t pairs = 2400, sentences = 20000;
  std::uint64_t dialogue_seed = 7, corpus_seed = 8;
  app.add_option("--out", out, "output directory");
  app.add_option("--pairs", pairs, "dialogue pairs");
  app.add_option("--sentences", sentences, "pretraining sentences");
  app.add_option("--dialogue-seed", dialogue_seed);
  app.add_option("--corpus-seed", corpus_seed);
  CLI11_PARSE(app, argc, argv);

  std::filesystem::create_directories(out);
  {
    std::ofstream os(std::filesystem::path(out) / "dialogues.csv", std::ios::binary);
    b2b::write_dataset(os, b2b::synthetic::dialogues(pairs, dialogue_seed));
  }
  std::ofstream os(std::filesystem::path(out) / "pretrain.txt", std::ios::binary);
  for (const auto& line : b2b::synthetic::pretrain_corpus(sentences, corpus_seed)) os << line << '\n';
  std::cout << "wrote " << pairs << " pairs and " << sentences << " sentences to " << out << '\n';
}
