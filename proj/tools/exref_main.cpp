// exref: parse explanations, match them over a corpus, refine a classifier
// and evaluate it. Every subcommand reads the same flat config file.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "exref/error.hpp"
#include "exref/pipeline.hpp"

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::string preset;
  std::string seed;
  std::vector<std::string> overrides;
};

exref::RunConfig build_config(const Globals& g) {
  exref::RunConfig cfg = g.config.empty() ? exref::RunConfig(".") : exref::RunConfig::load(g.config);
  for (const auto& o : g.overrides) cfg.apply_override(o);
  // Flags are applied last so they beat both the file and --set.
  if (!g.out.empty()) cfg.set("out", g.out);
  if (!g.preset.empty()) cfg.set("preset", g.preset);
  if (!g.seed.empty()) cfg.set("seed", g.seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compile explanations into rules, match them and refine a classifier"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config, "key = value config file");
  app.add_option("--out", g.out, "output directory (config key: out)");
  app.add_option("--preset", g.preset, "refinement preset, e.g. R_soft+C_strict");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--set", g.overrides, "extra key=value override, repeatable");

  using Cmd = int (*)(const exref::RunConfig&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Cmd>> commands = {
      {"parse", "parse and pre-validate explanations", exref::cmd_parse},
      {"match", "generalize rules over the unlabeled target split", exref::cmd_match},
      {"train", "train the source model", exref::cmd_train},
      {"refine", "refine the source model on matched data", exref::cmd_refine},
      {"eval", "write metrics and heat maps", exref::cmd_eval},
      {"pipeline", "parse, match, train if needed, refine and eval", exref::cmd_pipeline},
  };
  Cmd chosen = nullptr;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&chosen, fn = fn] { chosen = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    return chosen(build_config(g), std::cerr);
  } catch (const exref::ParseError& e) {
    std::cerr << "error: parse: " << e.offset() << ": " << e.what() << "\n";
    return 1;
  } catch (const exref::DataError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return 1;
  } catch (const exref::TrainingError& e) {
    std::cerr << "error: training: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 2;
  }
}
