// Writes the planted-bias synthetic study (corpora, embeddings, lexicons,
// explanations, templates and exref.conf) into a directory.

#include <iostream>

#include "CLI11.hpp"
#include "exref/error.hpp"
#include "exref/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic planted-bias study"};
  exref::SynthConfig cfg;
  std::string dir = "synth";
  app.add_option("dir", dir, "output directory");
  app.add_option("--seed", cfg.seed, "generator seed");
  app.add_option("--dim", cfg.dim, "embedding dimension");
  app.add_option("--source-train", cfg.source_train);
  app.add_option("--target-unlabeled", cfg.target_unlabeled);
  app.add_option("--target-test", cfg.target_test);
  app.add_option("--hate-rate", cfg.target_hate_rate, "hate rate in the target splits");
  CLI11_PARSE(app, argc, argv);
  try {
    exref::write_world(exref::make_world(cfg), dir);
  } catch (const exref::DataError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
