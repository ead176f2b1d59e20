#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "exref/error.hpp"
#include "exref/io_util.hpp"
#include "exref/matcher.hpp"
#include "exref/pipeline.hpp"
#include "exref/synth.hpp"
#include "fixtures.hpp"
#include "json.hpp"

using namespace exref;
namespace fs = std::filesystem;

namespace {

// One synthetic world on disk, shared by the tests below.
const fs::path& world_dir() {
  static const fs::path dir = [] {
    auto d = fixtures::temp_dir("pipeline_world");
    SynthConfig sc;
    sc.seed = 2;
    write_world(make_world(sc), d.string());
    return d;
  }();
  return dir;
}

RunConfig world_config(const std::string& out) {
  RunConfig cfg = RunConfig::load((world_dir() / "exref.conf").string());
  cfg.set("out", out);
  return cfg;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(EXREF_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(RunConfig, ParsesOverridesAndResolvesPaths) {
  RunConfig cfg = RunConfig::parse("# comment\na = 1\nname=  two words \nflag = yes\n", "/data/run");
  EXPECT_EQ(cfg.get_int("a", 0), 1);
  EXPECT_EQ(cfg.get("name"), "two words");
  EXPECT_TRUE(cfg.get_bool("flag", false));
  EXPECT_EQ(cfg.seed(), 7u);
  cfg.apply_override("a=5");
  EXPECT_EQ(cfg.get_int("a", 0), 5);
  cfg.set("corpus", "c.jsonl");
  EXPECT_EQ(fs::path(cfg.path("corpus")), fs::path("/data/run/c.jsonl"));
  cfg.set("abs", "/x/y");
  EXPECT_EQ(cfg.path("abs"), "/x/y");
  EXPECT_FALSE(cfg.optional_path("missing").has_value());
  EXPECT_THROW(cfg.path("missing"), DataError);
  EXPECT_THROW(cfg.apply_override("novalue"), DataError);
  try {
    RunConfig::parse("a = 1\nbroken line\n", ".", "x.conf");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  cfg.set("a", "abc");
  EXPECT_THROW(cfg.get_int("a", 0), DataError);
}

TEST(Presets, EveryArmResolves) {
  for (const auto& name : preset_names()) EXPECT_EQ(preset_by_name(name).name, name);
  EXPECT_EQ(preset_by_name("C_strict-only").alpha, std::optional<double>(0.0));
  EXPECT_EQ(preset_by_name("R_soft").labels, RecordSource::kNone);
  EXPECT_EQ(preset_by_name("R_soft+C_strict").labels, RecordSource::kStrict);
  EXPECT_EQ(preset_by_name("distill").transfer, TransferKind::kDistill);
  EXPECT_THROW(preset_by_name("R_hard"), DataError);
}

TEST(BuildExamples, HighestConfidenceLabelAndLastAdviceWin) {
  std::vector<AnnotatedInstance> xs = {fixtures::sentence("a", "x y z")};
  const Corpus corpus(std::move(xs));
  EmbeddingTable table(2, {0.0f, 0.0f});
  for (int i = 0; i < 3; ++i) table.set_row("a", i, {1.0f, static_cast<float>(i)});
  MatchRecord low, high, adv1, adv2;
  low.instance_id = high.instance_id = adv1.instance_id = adv2.instance_id = "a";
  low.label = 0;
  low.z = 0.8;
  high.label = 1;
  high.z = 0.9;
  adv1.advice = {{AdviceAtom::Kind::kAttribution, {0, 1}, {}, 1, 1.0}};
  adv2.advice = {{AdviceAtom::Kind::kAttribution, {0, 1}, {}, 1, 0.0}};
  std::vector<std::string> warnings;
  const auto ex = build_examples({low, high}, {adv1, adv2}, corpus, table, &warnings);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].label, std::optional<int>(1));
  EXPECT_EQ(ex[0].z, 0.9);
  ASSERT_EQ(ex[0].advice.size(), 1u);
  EXPECT_EQ(ex[0].advice[0].target, 0.0);
  EXPECT_EQ(warnings.size(), 2u);
  EXPECT_EQ(ex[0].X.rows(), 3);

  const auto w = balanced_class_weights(ex, 2);
  EXPECT_EQ(w[1], 0.5);  // one example, two classes: 1 / (2 * 1)
  EXPECT_EQ(w[0], 1.0);
}

TEST(Pipeline, EndToEndWritesEveryArtifact) {
  const auto out = fixtures::temp_dir("pipeline_e2e");
  std::ostringstream err;
  ASSERT_EQ(cmd_pipeline(world_config(out.string()), err), 0) << err.str();
  for (const char* f : {"rules.txt", "matches_strict.jsonl", "matches_soft.jsonl", "negatives.jsonl",
                        "match_summary.json", "source.ckpt", "model.ckpt", "train_log.jsonl", "metrics.json",
                        "metrics_source.json", "heatmap.html"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto summary = nlohmann::json::parse(read_file((out / "match_summary.json").string()));
  EXPECT_TRUE(summary.at("soft_superset_of_strict").get<bool>());
  EXPECT_GT(summary.at("strict").get<int>(), 0);
  EXPECT_GE(summary.at("soft").get<int>(), summary.at("strict").get<int>());

  const auto strict = load_match_records((out / "matches_strict.jsonl").string());
  const auto soft = load_match_records((out / "matches_soft.jsonl").string());
  for (const auto& s : strict) {
    const bool found = std::any_of(soft.begin(), soft.end(), [&](const MatchRecord& m) {
      return m.instance_id == s.instance_id && m.rule_id == s.rule_id && m.z == 1.0;
    });
    EXPECT_TRUE(found) << s.instance_id;
  }
  const auto metrics = nlohmann::json::parse(read_file((out / "metrics.json").string()));
  for (const char* k : {"source_f1", "target_f1", "fprd", "match_precision"}) EXPECT_TRUE(metrics.contains(k)) << k;
}

TEST(Pipeline, RepeatedRunsAreByteIdentical) {
  const auto a = fixtures::temp_dir("pipeline_det_a");
  const auto b = fixtures::temp_dir("pipeline_det_b");
  std::ostringstream err;
  ASSERT_EQ(cmd_pipeline(world_config(a.string()), err), 0);
  ASSERT_EQ(cmd_pipeline(world_config(b.string()), err), 0);
  for (const char* f : {"matches_strict.jsonl", "matches_soft.jsonl", "negatives.jsonl", "source.ckpt", "model.ckpt",
                        "metrics.json", "metrics_source.json", "train_log.jsonl", "heatmap.html"}) {
    EXPECT_EQ(read_file((a / f).string()), read_file((b / f).string())) << f;
  }
}

TEST(Pipeline, LabelOnlyPresetIsLabelledAsFineTuning) {
  const auto out = fixtures::temp_dir("pipeline_c_only");
  RunConfig cfg = world_config(out.string());
  cfg.set("preset", "C_strict-only");
  std::ostringstream err;
  ASSERT_EQ(cmd_pipeline(cfg, err), 0);
  EXPECT_NE(read_file((out / "train_log.jsonl").string()).find("fine-tune (C)"), std::string::npos);
}

TEST(Pipeline, StepwiseCommandsAndMissingInputs) {
  const auto out = fixtures::temp_dir("pipeline_steps");
  const RunConfig cfg = world_config(out.string());
  std::ostringstream err;
  EXPECT_THROW(cmd_refine(cfg, err), DataError);  // nothing matched yet
  EXPECT_EQ(cmd_parse(cfg, err), 0) << err.str();
  EXPECT_EQ(cmd_match(cfg, err), 0);
  EXPECT_THROW(cmd_refine(cfg, err), DataError);  // no source model yet
  EXPECT_EQ(cmd_train(cfg, err), 0);
  EXPECT_EQ(cmd_refine(cfg, err), 0);
  EXPECT_EQ(cmd_eval(cfg, err), 0);
  EXPECT_TRUE(fs::exists(out / "metrics.json"));
}

TEST(Pipeline, BadExplanationIsReportedNotFatal) {
  const auto dir = fixtures::temp_dir("pipeline_bad_expl");
  const std::string good = read_file((world_dir() / "explanations.txt").string());
  write_file((dir / "expl.txt").string(),
             good + "\nRule: broken\nReference: tgt-un-0000\nX is 'muslims'. X is gorgeously purple.\n"
                    "Label: hate.\nAttribution score of X should be increased.\n");
  RunConfig cfg = world_config((dir / "out").string());
  cfg.set("explanations", (dir / "expl.txt").string());
  std::ostringstream err;
  EXPECT_EQ(cmd_parse(cfg, err), 1);
  EXPECT_NE(err.str().find("rule broken:"), std::string::npos) << err.str();
  EXPECT_EQ(read_file((dir / "out" / "rules.txt").string()),
            [&] {
              std::ostringstream e2;
              const auto clean = world_config((dir / "clean").string());
              cmd_parse(clean, e2);
              return read_file((dir / "clean" / "rules.txt").string());
            }());
}

TEST(Cli, ExitCodes) {
  const std::string conf = (world_dir() / "exref.conf").string();
  const auto out = fixtures::temp_dir("cli_out");
  EXPECT_EQ(run_cli("-c " + conf + " --out " + out.string() + " parse"), 0);
  EXPECT_EQ(run_cli("-c " + conf + " --out " + out.string() + " --set source_train=missing.jsonl parse"), 1);
  EXPECT_EQ(run_cli("-c " + conf + " --out " + out.string() + " --preset nonsense pipeline"), 1);
  EXPECT_NE(run_cli("-c " + conf + " no-such-command"), 0);
}
