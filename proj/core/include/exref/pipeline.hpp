#ifndef EXREF_PIPELINE_HPP_
#define EXREF_PIPELINE_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "exref/corpus.hpp"
#include "exref/expl_lang.hpp"
#include "exref/loss.hpp"
#include "exref/matcher.hpp"
#include "exref/metrics.hpp"
#include "exref/model.hpp"
#include "exref/trainer.hpp"

namespace exref {

// Flat "key = value" settings. Relative paths resolve against the directory
// of the config file; later set() calls win, so flags override the file.
class RunConfig {
 public:
  RunConfig() = default;
  explicit RunConfig(std::string base_dir) : base_dir_(std::move(base_dir)) {}

  static RunConfig load(const std::string& path);
  static RunConfig parse(std::string_view text, const std::string& base_dir,
                         const std::string& source_name = "<memory>");

  void set(const std::string& key, const std::string& value);
  // "key=value"; throws DataError without '='.
  void apply_override(std::string_view assignment);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback = "") const;
  std::string require(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t seed() const;

  // Resolved path for `key`; throws DataError when unset.
  std::string path(const std::string& key) const;
  std::optional<std::string> optional_path(const std::string& key) const;
  std::string out_dir() const;
  std::string out_path(const std::string& name) const;
  const std::string& base_dir() const { return base_dir_; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string resolve(const std::string& p) const;

  std::string base_dir_ = ".";
  std::map<std::string, std::string> values_;
};

enum class RecordSource { kNone, kStrict, kSoft };

// Which match records feed labels (C) and advice (R), after the ablation
// arms: R_soft, R_soft+C_strict, R_soft+C_soft, C_strict-only, C_soft-only,
// l2, distill.
struct Preset {
  std::string name;
  RecordSource advice = RecordSource::kNone;
  RecordSource labels = RecordSource::kNone;
  std::optional<double> alpha;  // forced value, e.g. 0 for label-only arms
  TransferKind transfer = TransferKind::kNone;
};

Preset preset_by_name(std::string_view name);
const std::vector<std::string>& preset_names();

// Everything a run reads, loaded once: corpora with lexicon flags applied
// and the embedding table bound to them.
struct Workspace {
  ClassList classes;
  int positive = 1;
  int negative = 0;
  LexiconSet lexicons;
  Corpus source_train, source_dev, source_test;
  Corpus target_unlabeled, target_dev, target_test;
  EmbeddingTable table;

  static Workspace load(const RunConfig& cfg);
  std::vector<const Corpus*> corpora() const;
  // Looks up `id` in the unlabeled target split first, then every other split.
  const AnnotatedInstance* find(std::string_view id) const;
};

struct ParsedRules {
  std::vector<Rule> accepted;
  std::vector<std::string> diagnostics;  // "rule <id>: <offset>: <message>"
};

ExplLexicon load_run_lexicon(const RunConfig& cfg);
ParsedRules parse_rules(const RunConfig& cfg, const Workspace& ws);

MatchParams match_params(const RunConfig& cfg, MatchMode mode);

struct MatchOutput {
  std::vector<MatchRecord> strict, soft, negatives;
};

MatchOutput run_matching(const RunConfig& cfg, const Workspace& ws, const std::vector<Rule>& rules);
std::string match_summary_json(const MatchOutput& out);

// Groups records by instance. Labels come from the highest-z record of
// `label_records` (ties: first seen); advice is last-writer-wins per
// (kind, spans, class). Conflicts are appended to `warnings`.
std::vector<TrainingExample> build_examples(const std::vector<MatchRecord>& label_records,
                                            const std::vector<MatchRecord>& advice_records,
                                            const Corpus& corpus, const EmbeddingTable& table,
                                            std::vector<std::string>* warnings = nullptr);

// N / (C n_c) per class over labeled examples; 1 for absent classes.
std::vector<double> balanced_class_weights(const std::vector<TrainingExample>& data, int classes);

// Reads "<prefix>lr", "<prefix>batch_size", ... plus the shared loss.* and attr.* keys.
TrainConfig train_config(const RunConfig& cfg, const std::string& prefix, int positive);
DevSet make_dev_set(const Corpus& corpus, const EmbeddingTable& table);

ModelState train_source_model(const RunConfig& cfg, const Workspace& ws, std::vector<LogEntry>* log = nullptr);

struct RefineOutput {
  TrainResult result;
  std::string run_label;
  std::vector<std::string> warnings;
};

RefineOutput refine(const RunConfig& cfg, const Workspace& ws, const ModelState& source, const MatchOutput& matches);

struct EvalMetrics {
  std::optional<double> source_f1;
  double target_f1 = 0.0;
  std::optional<FprdResult> fprd;
  std::optional<double> strict_precision, soft_precision;
};

EvalMetrics evaluate(const RunConfig& cfg, const Workspace& ws, const ModelState& model,
                     const MatchOutput* matches);
std::string metrics_json(const EvalMetrics& m);

std::string render_before_after(const RunConfig& cfg, const Workspace& ws, const ModelState& before,
                                const ModelState& after, const std::vector<std::string>& ids);

// Subcommands. Each returns its exit code (0 success, 1 when the command ran
// but rejected some input) and lets DataError / TrainingError escape for the
// caller to map onto exit codes.
int cmd_parse(const RunConfig& cfg, std::ostream& err);
int cmd_match(const RunConfig& cfg, std::ostream& err);
int cmd_train(const RunConfig& cfg, std::ostream& err);
int cmd_refine(const RunConfig& cfg, std::ostream& err);
int cmd_eval(const RunConfig& cfg, std::ostream& err);
int cmd_pipeline(const RunConfig& cfg, std::ostream& err);

// Verbosity from EXREF_LOG: "quiet", "info" (default) or "debug".
enum class LogLevel { kQuiet, kInfo, kDebug };
LogLevel log_level();
void log_line(LogLevel level, const std::string& message);

}  // namespace exref

#endif  // EXREF_PIPELINE_HPP_
