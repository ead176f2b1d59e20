#include "exref/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

#include "exref/attribution.hpp"
#include "exref/error.hpp"
#include "exref/heatmap.hpp"
#include "exref/io_util.hpp"
#include "json.hpp"

namespace exref {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- logging -----------------------------------------------------------------

LogLevel log_level() {
  const char* v = std::getenv("EXREF_LOG");
  if (v == nullptr) return LogLevel::kInfo;
  const std::string s = case_fold(v);
  if (s == "quiet" || s == "0" || s == "off") return LogLevel::kQuiet;
  if (s == "debug" || s == "2") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

void log_line(LogLevel level, const std::string& message) {
  if (level == LogLevel::kQuiet || static_cast<int>(level) > static_cast<int>(log_level())) return;
  std::cerr << "exref: " << message << "\n";
}

// ---- config ------------------------------------------------------------------

RunConfig RunConfig::load(const std::string& path) {
  const fs::path p(path);
  const std::string dir = p.has_parent_path() ? p.parent_path().string() : ".";
  return parse(read_file(path), dir, path);
}

RunConfig RunConfig::parse(std::string_view text, const std::string& base_dir, const std::string& source_name) {
  RunConfig cfg(base_dir);
  std::size_t lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(source_name, lineno, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw FormatError(source_name, lineno, "empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

void RunConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw DataError("override '" + std::string(assignment) + "' is not key=value");
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw DataError("override with empty key");
  values_[key] = trim(assignment.substr(eq + 1));
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string RunConfig::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) throw DataError("config key '" + key + "' is required");
  return it->second;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw DataError("config key '" + key + "' expects an integer, got '" + v + "'");
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw DataError("config key '" + key + "' expects a number, got '" + v + "'");
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = case_fold(get(key));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw DataError("config key '" + key + "' expects true or false, got '" + v + "'");
}

std::uint64_t RunConfig::seed() const {
  const std::string v = get("seed", "7");
  try {
    std::size_t used = 0;
    const unsigned long long s = std::stoull(v, &used);
    if (used == v.size()) return s;
  } catch (const std::exception&) {
  }
  throw DataError("seed must be a non-negative integer, got '" + v + "'");
}

std::string RunConfig::resolve(const std::string& p) const {
  const fs::path path(p);
  if (path.is_absolute()) return p;
  return (fs::path(base_dir_) / path).lexically_normal().string();
}

std::string RunConfig::path(const std::string& key) const { return resolve(require(key)); }

std::optional<std::string> RunConfig::optional_path(const std::string& key) const {
  if (!has(key) || get(key).empty()) return std::nullopt;
  return resolve(get(key));
}

std::string RunConfig::out_dir() const { return resolve(get("out", "out")); }

std::string RunConfig::out_path(const std::string& name) const { return (fs::path(out_dir()) / name).string(); }

// ---- presets -----------------------------------------------------------------

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"R_soft",       "R_soft+C_strict", "R_soft+C_soft", "C_strict-only",
                                                 "C_soft-only",  "l2",              "distill"};
  return names;
}

Preset preset_by_name(std::string_view name) {
  using RS = RecordSource;
  if (name == "R_soft") return {"R_soft", RS::kSoft, RS::kNone, std::nullopt, TransferKind::kNone};
  if (name == "R_soft+C_strict") return {"R_soft+C_strict", RS::kSoft, RS::kStrict, std::nullopt, TransferKind::kNone};
  if (name == "R_soft+C_soft") return {"R_soft+C_soft", RS::kSoft, RS::kSoft, std::nullopt, TransferKind::kNone};
  if (name == "C_strict-only") return {"C_strict-only", RS::kNone, RS::kStrict, 0.0, TransferKind::kNone};
  if (name == "C_soft-only") return {"C_soft-only", RS::kNone, RS::kSoft, 0.0, TransferKind::kNone};
  if (name == "l2") return {"l2", RS::kNone, RS::kStrict, std::nullopt, TransferKind::kL2};
  if (name == "distill") return {"distill", RS::kNone, RS::kStrict, std::nullopt, TransferKind::kDistill};
  std::string known;
  for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  throw DataError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

// ---- workspace ---------------------------------------------------------------

namespace {

Corpus load_split(const RunConfig& cfg, const std::string& key) {
  auto p = cfg.optional_path(key);
  if (!p) return Corpus();
  return load_corpus(*p);
}

std::string source_model_path(const RunConfig& cfg) {
  if (auto p = cfg.optional_path("source_model")) return *p;
  return cfg.out_path("source.ckpt");
}

void ensure_out_dir(const RunConfig& cfg) { fs::create_directories(cfg.out_dir()); }

}  // namespace

Workspace Workspace::load(const RunConfig& cfg) {
  Workspace ws;
  std::vector<std::string> names;
  for (const auto& n : split(cfg.get("classes", "non-hate,hate"), ',')) {
    if (!trim(n).empty()) names.push_back(trim(n));
  }
  if (names.size() < 2) throw DataError("class list needs at least two classes");
  ws.classes = ClassList(names);
  ws.positive = ws.classes.index_of(cfg.get("positive_class", names.back()));
  ws.negative = ws.classes.index_of(cfg.get("negative_class", names.front()));
  if (ws.positive == ws.negative) throw DataError("positive_class and negative_class must differ");

  ws.lexicons = load_lexicons(cfg.path("sentiment_lexicon"), cfg.path("identity_lexicon"),
                              cfg.path("hateful_lexicon"));
  ws.source_train = load_split(cfg, "source_train");
  ws.source_dev = load_split(cfg, "source_dev");
  ws.source_test = load_split(cfg, "source_test");
  ws.target_unlabeled = load_corpus(cfg.path("target_unlabeled"));
  ws.target_dev = load_split(cfg, "target_dev");
  ws.target_test = load_split(cfg, "target_test");
  for (Corpus* c : {&ws.source_train, &ws.source_dev, &ws.source_test, &ws.target_unlabeled, &ws.target_dev,
                    &ws.target_test}) {
    c->apply_lexicons(ws.lexicons);
    for (const auto& x : *c) {
      if (x.gold_label && *x.gold_label >= ws.classes.size()) {
        throw DataError("instance " + x.id + " has gold label " + std::to_string(*x.gold_label) +
                        " outside the class list");
      }
    }
  }

  ws.table = load_embeddings(cfg.path("embeddings"));
  const std::size_t substituted = ws.table.bind(ws.corpora(), cfg.get_bool("allow_missing_embeddings", false));
  if (substituted > 0) log_line(LogLevel::kInfo, std::to_string(substituted) + " missing embedding rows replaced by the baseline");
  return ws;
}

std::vector<const Corpus*> Workspace::corpora() const {
  return {&source_train, &source_dev, &source_test, &target_unlabeled, &target_dev, &target_test};
}

const AnnotatedInstance* Workspace::find(std::string_view id) const {
  for (const Corpus* c : corpora()) {
    if (const auto* x = c->find(id)) return x;
  }
  return nullptr;
}

// ---- parsing -----------------------------------------------------------------

ExplLexicon load_run_lexicon(const RunConfig& cfg) {
  ExplLexicon lex;
  if (auto p = cfg.optional_path("expl_lexicon")) {
    lex.merge(load_expl_lexicon(*p));
  } else if (fs::exists(EXREF_DATA_DIR "/lexicon.tsv")) {
    lex.merge(load_expl_lexicon(EXREF_DATA_DIR "/lexicon.tsv"));
  }
  return lex;
}

ParsedRules parse_rules(const RunConfig& cfg, const Workspace& ws) {
  ParsedRules out;
  const ExplLexicon lex = load_run_lexicon(cfg);
  const std::string text = read_file(cfg.path("explanations"));
  std::set<std::string> seen;
  for (const auto& block : split_explanation_file(text)) {
    auto diag = [&](std::size_t offset, const std::string& msg) {
      out.diagnostics.push_back("rule " + block.id + ": " + std::to_string(offset) + ": " + msg);
    };
    if (!seen.insert(block.id).second) {
      diag(block.offset, "duplicate rule id");
      continue;
    }
    if (block.ref_id.empty()) {
      diag(block.offset, "missing Reference line");
      continue;
    }
    const AnnotatedInstance* ref = ws.find(block.ref_id);
    if (ref == nullptr) {
      diag(block.offset, "reference instance '" + block.ref_id + "' not found");
      continue;
    }
    Rule rule;
    try {
      rule = parse_explanation(block.text, lex, *ref, ws.classes, block.id, block.offset);
    } catch (const ParseError& e) {
      diag(e.offset(), e.what());
      continue;
    }
    const Validation v = validate_rule(rule, *ref);
    if (!v.accepted) {
      diag(block.offset, "discarded: " + v.reason);
      continue;
    }
    out.accepted.push_back(std::move(rule));
  }
  return out;
}

// ---- matching ----------------------------------------------------------------

MatchParams match_params(const RunConfig& cfg, MatchMode mode) {
  MatchParams p;
  p.mode = mode;
  p.threshold = cfg.get_double("match.threshold", p.threshold);
  p.cos_floor = cfg.get_double("match.cos_floor", p.cos_floor);
  p.k = cfg.get_int("match.k", p.k);
  p.threads = cfg.get_int("match.threads", p.threads);
  if (p.k < 1) throw DataError("match.k must be at least 1");
  if (p.threads < 1) throw DataError("match.threads must be at least 1");
  if (p.threshold < 0.0 || p.threshold > 1.0) throw DataError("match.threshold must lie in [0,1]");
  return p;
}

MatchOutput run_matching(const RunConfig& cfg, const Workspace& ws, const std::vector<Rule>& rules) {
  std::vector<PreparedRule> prepared;
  for (const auto& r : rules) {
    const AnnotatedInstance* ref = ws.find(r.ref_instance);
    if (ref == nullptr) throw DataError("rule " + r.id + ": reference instance '" + r.ref_instance + "' not found");
    prepared.push_back(prepare_rule(r, *ref, &ws.table));
  }
  MatchOutput out;
  out.strict = generalize(prepared, ws.target_unlabeled, &ws.table, match_params(cfg, MatchMode::kStrict));
  out.soft = generalize(prepared, ws.target_unlabeled, &ws.table, match_params(cfg, MatchMode::kSoft));

  // Reference instances and anything either mode matched are off limits for
  // negative sampling.
  std::vector<MatchRecord> taken = out.soft;
  taken.insert(taken.end(), out.strict.begin(), out.strict.end());
  for (const auto& r : rules) {
    MatchRecord m;
    m.instance_id = r.ref_instance;
    taken.push_back(m);
  }
  std::set<std::string> strict_ids, taken_ids;
  for (const auto& m : out.strict) strict_ids.insert(m.instance_id);
  for (const auto& m : taken) {
    if (ws.target_unlabeled.find(m.instance_id)) taken_ids.insert(m.instance_id);
  }
  const std::string neg = cfg.get("negatives", "auto");
  std::size_t n = neg == "auto" ? strict_ids.size() : static_cast<std::size_t>(std::max(cfg.get_int("negatives", 0), 0));
  const std::size_t available = ws.target_unlabeled.size() - taken_ids.size();
  if (n > available) {
    log_line(LogLevel::kInfo, "only " + std::to_string(available) + " unmatched instances for " + std::to_string(n) +
                                  " requested negatives");
    n = available;
  }
  out.negatives = balance_negatives(ws.target_unlabeled, taken, n, ws.negative, cfg.seed() ^ 0x6e656761746976ULL);
  return out;
}

std::string match_summary_json(const MatchOutput& out) {
  std::map<std::pair<std::string, std::string>, double> soft_z;
  for (const auto& m : out.soft) soft_z[{m.instance_id, m.rule_id}] = m.z;
  bool superset = true;
  for (const auto& m : out.strict) {
    auto it = soft_z.find({m.instance_id, m.rule_id});
    if (it == soft_z.end() || it->second != 1.0) superset = false;
  }
  std::set<std::string> strict_ids;
  for (const auto& m : out.strict) strict_ids.insert(m.instance_id);

  std::map<std::string, std::pair<int, int>> rule_counts;
  for (const auto& m : out.strict) rule_counts[m.rule_id].first++;
  for (const auto& m : out.soft) rule_counts[m.rule_id].second++;
  json per_rule = json::object();
  for (const auto& [id, c] : rule_counts) per_rule[id] = {{"strict", c.first}, {"soft", c.second}};

  std::vector<int> counts(10, 0);
  for (const auto& m : out.soft) counts[std::min(static_cast<int>(m.z * 10.0), 9)]++;
  std::vector<double> edges;
  for (int i = 0; i <= 10; ++i) edges.push_back(i / 10.0);

  json j;
  j["strict"] = out.strict.size();
  j["soft"] = out.soft.size();
  j["negatives"] = out.negatives.size();
  j["balanced"] = strict_ids.size() + out.negatives.size();
  j["soft_superset_of_strict"] = superset;
  j["per_rule"] = per_rule;
  j["z_histogram"] = {{"edges", edges}, {"counts", counts}};
  return j.dump(2) + "\n";
}

// ---- training data -----------------------------------------------------------

std::vector<TrainingExample> build_examples(const std::vector<MatchRecord>& label_records,
                                            const std::vector<MatchRecord>& advice_records,
                                            const Corpus& corpus, const EmbeddingTable& table,
                                            std::vector<std::string>* warnings) {
  struct Pending {
    std::optional<int> label;
    double z = 0.0;
    std::string label_rule;
    std::vector<AdviceTarget> advice;
    std::vector<std::string> advice_rules;
  };
  std::map<std::string, Pending> by_id;
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };

  for (const auto& m : label_records) {
    Pending& p = by_id[m.instance_id];
    if (!p.label) {
      p.label = m.label;
      p.z = m.z;
      p.label_rule = m.rule_id;
      continue;
    }
    if (*p.label != m.label) {
      warn("instance " + m.instance_id + ": rules " + p.label_rule + " and " + m.rule_id +
           " disagree on the label; keeping the higher-confidence one");
    }
    if (m.z > p.z) {
      p.label = m.label;
      p.z = m.z;
      p.label_rule = m.rule_id;
    }
  }
  for (const auto& m : advice_records) {
    Pending& p = by_id[m.instance_id];
    if (!p.label) p.z = std::max(p.z, m.z);
    for (const auto& a : m.advice) {
      bool replaced = false;
      for (std::size_t i = 0; i < p.advice.size(); ++i) {
        auto& old = p.advice[i];
        if (old.kind != a.kind || old.p != a.p || old.q != a.q || old.cls != a.cls) continue;
        if (old.target != a.target) {
          warn("instance " + m.instance_id + ": advice from " + m.rule_id + " overrides " + p.advice_rules[i]);
        }
        old = a;
        p.advice_rules[i] = m.rule_id;
        replaced = true;
      }
      if (!replaced) {
        p.advice.push_back(a);
        p.advice_rules.push_back(m.rule_id);
      }
    }
  }

  std::vector<TrainingExample> out;
  const Vector baseline = to_vector(table.baseline());
  for (auto& [id, p] : by_id) {
    if (!p.label && p.advice.empty()) continue;
    const AnnotatedInstance* x = corpus.find(id);
    if (x == nullptr) throw DataError("match record names unknown instance '" + id + "'");
    TrainingExample ex;
    ex.id = id;
    ex.X = embed(*x, table);
    ex.baseline = baseline;
    ex.label = p.label;
    ex.z = p.z;
    ex.advice = std::move(p.advice);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<double> balanced_class_weights(const std::vector<TrainingExample>& data, int classes) {
  std::vector<double> counts(classes, 0.0);
  double n = 0.0;
  for (const auto& ex : data) {
    if (!ex.label) continue;
    counts.at(*ex.label) += 1.0;
    n += 1.0;
  }
  std::vector<double> w(classes, 1.0);
  for (int c = 0; c < classes; ++c) {
    if (counts[c] > 0.0) w[c] = n / (classes * counts[c]);
  }
  return w;
}

TrainConfig train_config(const RunConfig& cfg, const std::string& prefix, int positive) {
  TrainConfig t;
  t.lr = cfg.get_double(prefix + "lr", t.lr);
  t.batch_size = cfg.get_int(prefix + "batch_size", t.batch_size);
  t.max_epochs = cfg.get_int(prefix + "max_epochs", t.max_epochs);
  t.eval_every = cfg.get_int(prefix + "eval_every", t.eval_every);
  t.patience = cfg.get_int(prefix + "patience", t.patience);
  t.lr_patience = cfg.get_int(prefix + "lr_patience", t.lr_patience);
  t.positive_class = positive;
  t.seed = cfg.seed();
  t.loss.alpha = cfg.get_double("loss.alpha", t.loss.alpha);
  t.loss.z_weighting = cfg.get_bool("loss.z_weighting", t.loss.z_weighting);
  t.loss.attr.method = parse_method(cfg.get("attr.method", std::string(method_name(t.loss.attr.method))));
  t.loss.attr.ig_steps = cfg.get_int("attr.ig_steps", t.loss.attr.ig_steps);
  t.loss.attr.delta = cfg.get_int("attr.delta", t.loss.attr.delta);
  t.loss.attr.n_samples = cfg.get_int("attr.n_samples", t.loss.attr.n_samples);
  t.loss.attr.seed = cfg.seed();
  if (t.loss.alpha < 0.0) throw DataError("loss.alpha must be non-negative");
  return t;
}

DevSet make_dev_set(const Corpus& corpus, const EmbeddingTable& table) {
  DevSet dev;
  for (const auto& x : corpus) {
    if (!x.gold_label) continue;
    dev.X.push_back(embed(x, table));
    dev.gold.push_back(*x.gold_label);
  }
  if (dev.X.empty()) throw DataError("dev split has no gold labels");
  return dev;
}

ModelState train_source_model(const RunConfig& cfg, const Workspace& ws, std::vector<LogEntry>* log) {
  if (ws.source_train.size() == 0) throw DataError("config key 'source_train' is required to train a source model");
  const ModelMode mode = parse_mode(cfg.get("model.mode", "mlp"));
  const int hidden = cfg.get_int("model.hidden", 16);
  if (hidden < 1) throw DataError("model.hidden must be positive");
  const ModelState init = ModelState::create(mode, ws.table.dim(), hidden, ws.classes.size(), cfg.seed());

  std::vector<TrainingExample> data;
  for (const auto& x : ws.source_train) {
    if (!x.gold_label) throw DataError("source training instance " + x.id + " has no gold label");
    TrainingExample ex;
    ex.id = x.id;
    ex.X = embed(x, ws.table);
    ex.label = *x.gold_label;
    data.push_back(std::move(ex));
  }
  TrainConfig t = train_config(cfg, "source.", ws.positive);
  t.loss.alpha = 0.0;
  t.max_epochs = cfg.get_int("source.max_epochs", 30);
  const DevSet dev = make_dev_set(ws.source_dev.size() > 0 ? ws.source_dev : ws.source_train, ws.table);
  TrainResult r = train_refine(init, data, dev, t);
  if (log) *log = r.log;
  log_line(LogLevel::kInfo, "source model: dev F1 " + format_double(r.best_dev_f1) + " at step " +
                                std::to_string(r.best_step) + " of " + std::to_string(r.steps));
  return r.model;
}

namespace {

ReplacementSet replacements_for(const RunConfig& cfg, const Workspace& ws, const AttributionConfig& attr) {
  if (attr.method != AttrMethod::kSOC || attr.delta == 0) return ReplacementSet();
  if (auto p = cfg.optional_path("replacements")) return ReplacementSet::load(*p, ws.table.dim());
  return ReplacementSet::from_corpus(ws.target_unlabeled, ws.table,
                                     static_cast<std::size_t>(cfg.get_int("attr.replacements", 256)), cfg.seed());
}

}  // namespace

RefineOutput refine(const RunConfig& cfg, const Workspace& ws, const ModelState& source, const MatchOutput& matches) {
  const Preset preset = preset_by_name(cfg.get("preset", "R_soft+C_strict"));
  auto pick = [&](RecordSource s) -> const std::vector<MatchRecord>& {
    static const std::vector<MatchRecord> kNone;
    if (s == RecordSource::kStrict) return matches.strict;
    if (s == RecordSource::kSoft) return matches.soft;
    return kNone;
  };
  std::vector<MatchRecord> label_records = pick(preset.labels);
  if (preset.labels != RecordSource::kNone) {
    label_records.insert(label_records.end(), matches.negatives.begin(), matches.negatives.end());
  }

  RefineOutput out;
  std::vector<TrainingExample> data =
      build_examples(label_records, pick(preset.advice), ws.target_unlabeled, ws.table, &out.warnings);
  for (const auto& w : out.warnings) log_line(LogLevel::kInfo, "warning: " + w);
  if (data.empty()) throw DataError("preset " + preset.name + " produced no training examples");

  TrainConfig t = train_config(cfg, "train.", ws.positive);
  if (preset.alpha) t.loss.alpha = *preset.alpha;
  t.loss.transfer = preset.transfer;
  const std::string weights = cfg.get("loss.class_weights", "auto");
  if (weights == "auto") {
    t.loss.class_weights = balanced_class_weights(data, ws.classes.size());
  } else if (weights != "none") {
    for (const auto& w : split(weights, ',')) {
      try {
        t.loss.class_weights.push_back(std::stod(trim(w)));
      } catch (const std::exception&) {
        throw DataError("loss.class_weights: '" + w + "' is not a number");
      }
    }
    if (static_cast<int>(t.loss.class_weights.size()) != ws.classes.size()) {
      throw DataError("loss.class_weights needs one weight per class");
    }
  }
  if (preset.transfer == TransferKind::kDistill) {
    for (auto& ex : data) ex.source_probs = forward(source, ex.X);
  }

  const ReplacementSet repl = replacements_for(cfg, ws, t.loss.attr);
  const DevSet dev = make_dev_set(ws.target_dev.size() > 0 ? ws.target_dev : ws.target_test, ws.table);
  out.result = train_refine(source, data, dev, t, &repl);
  out.run_label = (t.loss.alpha == 0.0 && preset.transfer == TransferKind::kNone) ? "fine-tune (C)" : preset.name;
  log_line(LogLevel::kInfo, out.run_label + ": " + std::to_string(data.size()) + " examples, dev F1 " +
                                format_double(out.result.best_dev_f1) + " at step " +
                                std::to_string(out.result.best_step));
  return out;
}

// ---- evaluation --------------------------------------------------------------

EvalMetrics evaluate(const RunConfig& cfg, const Workspace& ws, const ModelState& model,
                     const MatchOutput* matches) {
  if (model.dim() != ws.table.dim() || model.classes() != ws.classes.size()) {
    throw DataError("checkpoint shape does not match the embeddings or class list");
  }
  EvalMetrics m;
  if (ws.source_test.size() > 0) m.source_f1 = evaluate_f1(model, ws.source_test, ws.table, ws.positive).f1;
  if (ws.target_test.size() == 0) throw DataError("config key 'target_test' is required for evaluation");
  m.target_f1 = evaluate_f1(model, ws.target_test, ws.table, ws.positive).f1;
  if (cfg.has("templates") && cfg.has("identity_terms")) {
    const TemplateSet templates = load_templates(cfg.path("templates"), cfg.path("identity_terms"), ws.classes);
    const WordVectors vectors(ws.corpora(), ws.table, cfg.seed());
    m.fprd = fprd(model, templates, vectors, ws.positive);
  }
  if (matches != nullptr) {
    auto precision = [&](const std::vector<MatchRecord>& recs) -> std::optional<double> {
      for (const auto& r : recs) {
        const auto* x = ws.target_unlabeled.find(r.instance_id);
        if (x == nullptr || !x->gold_label) return std::nullopt;
      }
      return matching_precision(recs, ws.target_unlabeled);
    };
    m.strict_precision = precision(matches->strict);
    m.soft_precision = precision(matches->soft);
  }
  return m;
}

std::string metrics_json(const EvalMetrics& m) {
  json j = json::object();
  if (m.source_f1) j["source_f1"] = *m.source_f1;
  j["target_f1"] = m.target_f1;
  if (m.fprd) {
    j["fprd"] = m.fprd->fprd;
    j["overall_fpr"] = m.fprd->overall_fpr;
    j["per_term"] = m.fprd->per_term;
  }
  if (m.strict_precision || m.soft_precision) {
    json p = json::object();
    if (m.strict_precision) p["strict"] = *m.strict_precision;
    if (m.soft_precision) p["soft"] = *m.soft_precision;
    j["match_precision"] = p;
  }
  return j.dump(2) + "\n";
}

std::string render_before_after(const RunConfig& cfg, const Workspace& ws, const ModelState& before,
                                const ModelState& after, const std::vector<std::string>& ids) {
  TrainConfig t = train_config(cfg, "train.", ws.positive);
  const ReplacementSet repl = replacements_for(cfg, ws, t.loss.attr);
  const Vector baseline = to_vector(ws.table.baseline());
  std::vector<HeatmapPanel> panels;
  for (const auto& id : ids) {
    const AnnotatedInstance* x = ws.find(id);
    if (x == nullptr) throw DataError("heat map instance '" + id + "' not found");
    const Matrix X = embed(*x, ws.table);
    for (const auto& [name, model] : {std::pair<std::string, const ModelState*>{"before", &before},
                                      std::pair<std::string, const ModelState*>{"after", &after}}) {
      HeatmapPanel p;
      p.title = id + " (" + name + " refinement)";
      for (const auto& tok : x->tokens) p.tokens.push_back(tok.text);
      const int c = argmax(forward(*model, X));
      p.scores = token_attributions(*model, X, baseline, c, t.loss.attr, &repl, id);
      p.predicted = ws.classes.name(c);
      p.predicted_is_positive = c == ws.positive;
      panels.push_back(std::move(p));
    }
  }
  return render_heatmap(panels, "Attributions before and after refinement");
}

// ---- subcommands -------------------------------------------------------------

namespace {

void report(const ParsedRules& rules, std::ostream& err) {
  for (const auto& d : rules.diagnostics) err << d << "\n";
  log_line(LogLevel::kInfo, std::to_string(rules.accepted.size()) + " rule(s) accepted, " +
                                std::to_string(rules.diagnostics.size()) + " rejected");
}

std::string rules_text(const std::vector<Rule>& rules, const ClassList& classes) {
  std::string out;
  for (const auto& r : rules) {
    if (!out.empty()) out += "\n";
    out += print_rule(r, classes);
  }
  return out;
}

MatchOutput do_match(const RunConfig& cfg, const Workspace& ws, const std::vector<Rule>& rules) {
  if (rules.empty()) throw DataError("no rule survived parsing and validation");
  MatchOutput m = run_matching(cfg, ws, rules);
  ensure_out_dir(cfg);
  write_file(cfg.out_path("matches_strict.jsonl"), serialize_records(m.strict));
  write_file(cfg.out_path("matches_soft.jsonl"), serialize_records(m.soft));
  write_file(cfg.out_path("negatives.jsonl"), serialize_records(m.negatives));
  write_file(cfg.out_path("match_summary.json"), match_summary_json(m));
  log_line(LogLevel::kInfo, "matched " + std::to_string(m.strict.size()) + " strict, " +
                                std::to_string(m.soft.size()) + " soft, " + std::to_string(m.negatives.size()) +
                                " negatives");
  return m;
}

ModelState do_train(const RunConfig& cfg, const Workspace& ws) {
  std::vector<LogEntry> log;
  ModelState model = train_source_model(cfg, ws, &log);
  ensure_out_dir(cfg);
  const std::string path = source_model_path(cfg);
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  save_checkpoint(model, path);
  write_file(cfg.out_path("source_train_log.jsonl"), log_to_jsonl(log, "source"));
  return model;
}

ModelState do_refine(const RunConfig& cfg, const Workspace& ws, const ModelState& source, const MatchOutput& m) {
  RefineOutput r = refine(cfg, ws, source, m);
  ensure_out_dir(cfg);
  save_checkpoint(r.result.model, cfg.out_path("model.ckpt"));
  write_file(cfg.out_path("train_log.jsonl"), log_to_jsonl(r.result.log, r.run_label));
  return r.result.model;
}

std::vector<std::string> heatmap_ids(const RunConfig& cfg) {
  std::vector<std::string> ids;
  if (cfg.has("heatmap.ids")) {
    for (const auto& id : split(cfg.get("heatmap.ids"), ',')) {
      if (!trim(id).empty()) ids.push_back(trim(id));
    }
    return ids;
  }
  for (const auto& b : split_explanation_file(read_file(cfg.path("explanations")))) {
    if (!b.ref_id.empty() && std::find(ids.begin(), ids.end(), b.ref_id) == ids.end()) ids.push_back(b.ref_id);
  }
  return ids;
}

void do_eval(const RunConfig& cfg, const Workspace& ws, const ModelState* source, const ModelState* refined,
             const MatchOutput* matches) {
  ensure_out_dir(cfg);
  if (source) write_file(cfg.out_path("metrics_source.json"), metrics_json(evaluate(cfg, ws, *source, matches)));
  if (refined) write_file(cfg.out_path("metrics.json"), metrics_json(evaluate(cfg, ws, *refined, matches)));
  if (source && refined && cfg.has("explanations")) {
    const auto ids = heatmap_ids(cfg);
    if (!ids.empty()) write_file(cfg.out_path("heatmap.html"), render_before_after(cfg, ws, *source, *refined, ids));
  }
}

std::optional<MatchOutput> load_matches(const RunConfig& cfg) {
  const std::string s = cfg.out_path("matches_strict.jsonl");
  const std::string f = cfg.out_path("matches_soft.jsonl");
  const std::string n = cfg.out_path("negatives.jsonl");
  if (!fs::exists(s) || !fs::exists(f) || !fs::exists(n)) return std::nullopt;
  return MatchOutput{load_match_records(s), load_match_records(f), load_match_records(n)};
}

}  // namespace

int cmd_parse(const RunConfig& cfg, std::ostream& err) {
  const Workspace ws = Workspace::load(cfg);
  const ParsedRules rules = parse_rules(cfg, ws);
  report(rules, err);
  ensure_out_dir(cfg);
  write_file(cfg.out_path("rules.txt"), rules_text(rules.accepted, ws.classes));
  return rules.diagnostics.empty() ? 0 : 1;
}

int cmd_match(const RunConfig& cfg, std::ostream& err) {
  const Workspace ws = Workspace::load(cfg);
  const ParsedRules rules = parse_rules(cfg, ws);
  report(rules, err);
  do_match(cfg, ws, rules.accepted);
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream&) {
  const Workspace ws = Workspace::load(cfg);
  do_train(cfg, ws);
  return 0;
}

int cmd_refine(const RunConfig& cfg, std::ostream&) {
  const Workspace ws = Workspace::load(cfg);
  const auto matches = load_matches(cfg);
  if (!matches) throw DataError("no match files in " + cfg.out_dir() + "; run `exref match` first");
  const std::string src = source_model_path(cfg);
  if (!fs::exists(src)) throw DataError("source model " + src + " not found; run `exref train` first");
  do_refine(cfg, ws, load_checkpoint(src), *matches);
  return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream&) {
  const Workspace ws = Workspace::load(cfg);
  std::optional<ModelState> source, refined;
  if (fs::exists(source_model_path(cfg))) source = load_checkpoint(source_model_path(cfg));
  if (auto p = cfg.optional_path("eval.model")) {
    refined = load_checkpoint(*p);
  } else if (fs::exists(cfg.out_path("model.ckpt"))) {
    refined = load_checkpoint(cfg.out_path("model.ckpt"));
  }
  if (!source && !refined) throw DataError("no checkpoint to evaluate");
  const auto matches = load_matches(cfg);
  do_eval(cfg, ws, source ? &*source : nullptr, refined ? &*refined : nullptr, matches ? &*matches : nullptr);
  return 0;
}

int cmd_pipeline(const RunConfig& cfg, std::ostream& err) {
  const Workspace ws = Workspace::load(cfg);
  const ParsedRules rules = parse_rules(cfg, ws);
  report(rules, err);
  ensure_out_dir(cfg);
  write_file(cfg.out_path("rules.txt"), rules_text(rules.accepted, ws.classes));
  const MatchOutput matches = do_match(cfg, ws, rules.accepted);
  const std::string src = source_model_path(cfg);
  const ModelState source = cfg.has("source_model") && fs::exists(src) ? load_checkpoint(src) : do_train(cfg, ws);
  const ModelState refined = do_refine(cfg, ws, source, matches);
  do_eval(cfg, ws, &source, &refined, &matches);
  return 0;
}

}  // namespace exref
