#include "exref/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <random>
#include <sstream>

#include "exref/error.hpp"
#include "exref/io_util.hpp"
#include "json.hpp"

namespace exref {

using nlohmann::json;

std::string_view polarity_name(Polarity p) {
  switch (p) {
    case Polarity::kPositive:
      return "positive";
    case Polarity::kNegative:
      return "negative";
    case Polarity::kNeutral:
      break;
  }
  return "neutral";
}

Polarity Token::polarity() const {
  if (has(kFlagPositive)) return Polarity::kPositive;
  if (has(kFlagNegative)) return Polarity::kNegative;
  return Polarity::kNeutral;
}

int AnnotatedInstance::head_of(int token) const {
  for (const auto& e : deps) {
    if (e.dependent == token) return e.head;
  }
  return -1;
}

int AnnotatedInstance::tree_distance(int from, int to) const {
  if (from == to) return 0;
  const int n = size();
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : deps) {
    if (e.head < 0) continue;
    adj[e.head].push_back(e.dependent);
    adj[e.dependent].push_back(e.head);
  }
  std::vector<int> dist(n, -1);
  std::deque<int> queue{from};
  dist[from] = 0;
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    for (int next : adj[cur]) {
      if (dist[next] >= 0) continue;
      dist[next] = dist[cur] + 1;
      if (next == to) return dist[next];
      queue.push_back(next);
    }
  }
  return -1;
}

std::string AnnotatedInstance::span_text(const Span& s) const {
  std::string out;
  for (int i = s.begin; i < s.end && i < size(); ++i) {
    if (!out.empty()) out += ' ';
    out += tokens[i].text;
  }
  return out;
}

std::string case_fold(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

Polarity LexiconSet::lookup(std::string_view word) const {
  auto it = sentiment.find(case_fold(word));
  return it == sentiment.end() ? Polarity::kNeutral : it->second;
}

namespace {

// Yields (line number, content) for non-empty, non-comment lines.
template <typename Fn>
void for_each_entry(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    fn(lineno, line);
  }
}

std::set<std::vector<std::string>> load_phrase_set(const std::string& path) {
  std::set<std::vector<std::string>> out;
  for_each_entry(path, [&](std::size_t, const std::string& line) {
    const auto tab = line.find('\t');
    auto words = split_words(case_fold(line.substr(0, tab)));
    if (!words.empty()) out.insert(std::move(words));
  });
  return out;
}

void mark_phrases(AnnotatedInstance& x, const std::set<std::vector<std::string>>& phrases,
                  TokenFlag flag) {
  if (phrases.empty()) return;
  std::size_t max_len = 0;
  for (const auto& p : phrases) max_len = std::max(max_len, p.size());
  std::vector<std::string> folded;
  folded.reserve(x.tokens.size());
  for (const auto& t : x.tokens) folded.push_back(case_fold(t.text));
  const std::size_t n = folded.size();
  std::vector<std::string> window;
  for (std::size_t i = 0; i < n; ++i) {
    window.clear();
    for (std::size_t len = 1; len <= max_len && i + len <= n; ++len) {
      window.push_back(folded[i + len - 1]);
      if (phrases.count(window)) {
        for (std::size_t k = i; k < i + len; ++k) x.tokens[k].flags |= flag;
      }
    }
  }
}

}  // namespace

LexiconSet load_lexicons(const std::string& sentiment_path, const std::string& identity_path,
                         const std::string& hateful_path) {
  LexiconSet lex;
  for_each_entry(sentiment_path, [&](std::size_t lineno, const std::string& line) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(sentiment_path, lineno, "expected <word><TAB><polarity>");
    }
    const std::string word = case_fold(trim(line.substr(0, tab)));
    const std::string tag = case_fold(trim(line.substr(tab + 1)));
    Polarity p;
    if (tag == "positive") {
      p = Polarity::kPositive;
    } else if (tag == "negative") {
      p = Polarity::kNegative;
    } else if (tag == "neutral") {
      p = Polarity::kNeutral;
    } else {
      throw FormatError(sentiment_path, lineno, "unknown polarity tag '" + tag + "'");
    }
    lex.sentiment[word] = p;
  });
  lex.identity = load_phrase_set(identity_path);
  lex.hateful = load_phrase_set(hateful_path);
  return lex;
}

void apply_lexicons(AnnotatedInstance& x, const LexiconSet& lex) {
  for (auto& t : x.tokens) {
    t.flags = 0;
    auto it = lex.sentiment.find(case_fold(t.text));
    if (it == lex.sentiment.end()) it = lex.sentiment.find(case_fold(t.lemma));
    if (it != lex.sentiment.end()) {
      if (it->second == Polarity::kPositive) t.flags |= kFlagPositive;
      if (it->second == Polarity::kNegative) t.flags |= kFlagNegative;
    }
  }
  mark_phrases(x, lex.identity, kFlagIdentity);
  mark_phrases(x, lex.hateful, kFlagHateful);
}

Corpus::Corpus(std::vector<AnnotatedInstance> instances) : instances_(std::move(instances)) {
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    if (!index_.emplace(instances_[i].id, i).second) {
      throw DataError("duplicate instance id '" + instances_[i].id + "'");
    }
  }
}

const AnnotatedInstance* Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &instances_[it->second];
}

const AnnotatedInstance& Corpus::at(std::string_view id) const {
  const auto* x = find(id);
  if (x == nullptr) throw DataError("unknown instance id '" + std::string(id) + "'");
  return *x;
}

void Corpus::apply_lexicons(const LexiconSet& lexicons) {
  for (auto& x : instances_) exref::apply_lexicons(x, lexicons);
}

void validate_instance(const AnnotatedInstance& x) {
  const int n = x.size();
  if (x.id.empty()) throw DataError("instance without id");
  if (n == 0) throw DataError("instance '" + x.id + "' has no tokens");
  std::vector<int> heads(n, 0);
  for (const auto& e : x.deps) {
    if (e.dependent < 0 || e.dependent >= n) {
      throw DataError("dependent index " + std::to_string(e.dependent) + " out of range for " +
                      std::to_string(n) + " tokens");
    }
    if (e.head < -1 || e.head >= n) {
      throw DataError("head index " + std::to_string(e.head) + " out of range for " +
                      std::to_string(n) + " tokens");
    }
    if (++heads[e.dependent] > 1) {
      throw DataError("token " + std::to_string(e.dependent) + " has more than one head");
    }
  }
  for (const auto& t : x.tokens) {
    if (t.has(kFlagPositive) && t.has(kFlagNegative)) {
      throw DataError("token '" + t.text + "' flagged both positive and negative");
    }
  }
}

namespace {

AnnotatedInstance instance_from_json(const json& j) {
  AnnotatedInstance x;
  x.id = j.at("id").get<std::string>();
  for (const auto& tj : j.at("tokens")) {
    Token t;
    t.text = tj.at("text").get<std::string>();
    t.lemma = tj.contains("lemma") ? tj["lemma"].get<std::string>() : case_fold(t.text);
    t.pos = tj.contains("pos") ? tj["pos"].get<std::string>() : "X";
    t.ner = tj.contains("ner") ? tj["ner"].get<std::string>() : "";
    if (t.ner == "O" || t.ner == "NONE") t.ner.clear();
    x.tokens.push_back(std::move(t));
  }
  if (j.contains("dep")) {
    for (const auto& ej : j["dep"]) {
      if (!ej.is_array() || ej.size() != 3) throw DataError("dep edge must be [head, dep, label]");
      x.deps.push_back({ej[0].get<int>(), ej[1].get<int>(), ej[2].get<std::string>()});
    }
  }
  if (j.contains("label") && !j["label"].is_null()) x.gold_label = j["label"].get<int>();
  return x;
}

}  // namespace

Corpus parse_corpus(std::string_view text, const std::string& source_name) {
  std::vector<AnnotatedInstance> out;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (nl == text.size()) break;
      continue;
    }
    AnnotatedInstance x;
    try {
      x = instance_from_json(json::parse(line));
      validate_instance(x);
    } catch (const json::exception& e) {
      throw FormatError(source_name, lineno, std::string("malformed record: ") + e.what());
    } catch (const DataError& e) {
      throw FormatError(source_name, lineno, e.what());
    }
    if (!seen.emplace(x.id, lineno).second) {
      throw FormatError(source_name, lineno, "duplicate id '" + x.id + "'");
    }
    out.push_back(std::move(x));
    if (nl == text.size()) break;
  }
  return Corpus(std::move(out));
}

Corpus load_corpus(const std::string& path) { return parse_corpus(read_file(path), path); }

std::string instance_to_json_line(const AnnotatedInstance& x) {
  json j = json::object();
  j["id"] = x.id;
  json toks = json::array();
  for (const auto& t : x.tokens) {
    toks.push_back({{"text", t.text}, {"lemma", t.lemma}, {"pos", t.pos}, {"ner", t.ner}});
  }
  j["tokens"] = std::move(toks);
  json deps = json::array();
  for (const auto& e : x.deps) deps.push_back(json::array({e.head, e.dependent, e.label}));
  j["dep"] = std::move(deps);
  if (x.gold_label) j["label"] = *x.gold_label;
  return j.dump();
}

std::string serialize(const Corpus& corpus) {
  std::ostringstream out;
  for (const auto& x : corpus) {
    out << instance_to_json_line(x) << '\t';
    for (const auto& t : x.tokens) out << static_cast<int>(t.flags) << ',';
    out << '\n';
  }
  return out.str();
}

EmbeddingTable::EmbeddingTable(int dim, std::vector<float> baseline)
    : dim_(dim), baseline_(std::move(baseline)) {
  if (dim_ <= 0) throw DataError("embedding dim must be positive");
  if (static_cast<int>(baseline_.size()) != dim_) throw DataError("baseline length != dim");
}

std::vector<double> EmbeddingTable::baseline_d() const {
  return {baseline_.begin(), baseline_.end()};
}

bool EmbeddingTable::has_instance(std::string_view id) const { return rows_.find(id) != rows_.end(); }

bool EmbeddingTable::has_row(std::string_view id, int token) const {
  auto it = rows_.find(id);
  if (it == rows_.end() || token < 0 || token >= static_cast<int>(it->second.size())) return false;
  return !it->second[token].empty();
}

std::span<const float> EmbeddingTable::row(std::string_view id, int token) const {
  auto it = rows_.find(id);
  if (it == rows_.end() || token < 0 || token >= static_cast<int>(it->second.size()) ||
      it->second[token].empty()) {
    throw DataError("missing embedding row for " + std::string(id) + "#" + std::to_string(token));
  }
  return it->second[token];
}

void EmbeddingTable::set_row(const std::string& id, int token, std::vector<float> values) {
  if (static_cast<int>(values.size()) != dim_) throw DataError("embedding row length != dim");
  if (token < 0) throw DataError("negative token index");
  auto& rows = rows_[id];
  if (static_cast<int>(rows.size()) <= token) rows.resize(token + 1);
  rows[token] = std::move(values);
}

std::size_t EmbeddingTable::row_count() const {
  std::size_t n = 0;
  for (const auto& [id, rows] : rows_) {
    for (const auto& r : rows) n += r.empty() ? 0 : 1;
  }
  return n;
}

std::size_t EmbeddingTable::bind(const std::vector<const Corpus*>& corpora, bool allow_missing) {
  std::unordered_map<std::string, int> lengths;
  for (const Corpus* c : corpora) {
    for (const auto& x : *c) lengths[x.id] = x.size();
  }
  for (const auto& [id, rows] : rows_) {
    auto it = lengths.find(id);
    if (it == lengths.end()) throw DataError("embedding rows for unknown instance '" + id + "'");
    if (static_cast<int>(rows.size()) > it->second) {
      throw DataError("embedding row index " + std::to_string(rows.size() - 1) +
                      " out of range for instance '" + id + "'");
    }
  }
  std::size_t substituted = 0;
  for (const Corpus* c : corpora) {
    for (const auto& x : *c) {
      auto& rows = rows_[x.id];
      if (static_cast<int>(rows.size()) < x.size()) rows.resize(x.size());
      for (int i = 0; i < x.size(); ++i) {
        if (!rows[i].empty()) continue;
        if (!allow_missing) {
          throw DataError("missing embedding row for " + x.id + "#" + std::to_string(i));
        }
        rows[i] = baseline_;
        ++substituted;
      }
    }
  }
  warnings_ += substituted;
  return substituted;
}

void EmbeddingTable::write(std::ostream& out) const {
  out << "EMB v1 " << dim_ << ' ' << row_count() << '\n';
  auto emit = [&](const std::vector<float>& v) {
    for (int k = 0; k < dim_; ++k) {
      if (k) out << ' ';
      out << format_float(v[k]);
    }
    out << '\n';
  };
  for (const auto& [id, rows] : rows_) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].empty()) continue;
      out << id << '\t' << i << '\t';
      emit(rows[i]);
    }
  }
  out << "BASELINE\t";
  emit(baseline_);
}

namespace {

std::vector<float> parse_floats(std::string_view s, const std::string& src, std::size_t lineno) {
  std::vector<float> out;
  for (const auto& w : split_words(s)) {
    char* end = nullptr;
    const float v = std::strtof(w.c_str(), &end);
    if (end != w.c_str() + w.size()) throw FormatError(src, lineno, "bad float '" + w + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

EmbeddingTable parse_embeddings(std::string_view text, const std::string& src) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw FormatError(src, 1, "missing EMB header");
  ++lineno;
  const auto header = split_words(line);
  int dim = 0;
  long count = -1;
  if (header.size() != 4 || header[0] != "EMB" || header[1] != "v1") {
    throw FormatError(src, lineno, "expected header 'EMB v1 <dim> <count>'");
  }
  try {
    dim = std::stoi(header[2]);
    count = std::stol(header[3]);
  } catch (const std::exception&) {
    throw FormatError(src, lineno, "bad header numbers");
  }
  if (dim <= 0) throw FormatError(src, lineno, "dim must be positive");
  if (count < 0) throw FormatError(src, lineno, "count must be non-negative");

  std::vector<std::tuple<std::string, int, std::vector<float>>> rows;
  std::optional<std::vector<float>> baseline;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    if (t1 == std::string::npos) throw FormatError(src, lineno, "expected tab-separated row");
    const std::string first = line.substr(0, t1);
    if (first == "BASELINE") {
      auto v = parse_floats(std::string_view(line).substr(t1 + 1), src, lineno);
      if (static_cast<int>(v.size()) != dim) {
        throw FormatError(src, lineno, "baseline has " + std::to_string(v.size()) +
                                           " values, header dim is " + std::to_string(dim));
      }
      baseline = std::move(v);
      continue;
    }
    if (baseline) throw FormatError(src, lineno, "row after BASELINE");
    const auto t2 = line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw FormatError(src, lineno, "expected id<TAB>index<TAB>values");
    int token = 0;
    const std::string idx = line.substr(t1 + 1, t2 - t1 - 1);
    auto [p, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), token);
    if (ec != std::errc() || p != idx.data() + idx.size() || token < 0) {
      throw FormatError(src, lineno, "bad token index '" + idx + "'");
    }
    auto v = parse_floats(std::string_view(line).substr(t2 + 1), src, lineno);
    if (static_cast<int>(v.size()) != dim) {
      throw FormatError(src, lineno, "row " + std::to_string(rows.size()) + " has " +
                                         std::to_string(v.size()) + " values, header dim is " +
                                         std::to_string(dim));
    }
    rows.emplace_back(first, token, std::move(v));
  }
  if (!baseline) throw FormatError(src, lineno, "missing BASELINE row");
  if (static_cast<long>(rows.size()) != count) {
    throw FormatError(src, lineno, "header declares " + std::to_string(count) + " rows, found " +
                                       std::to_string(rows.size()));
  }
  EmbeddingTable table(dim, std::move(*baseline));
  for (auto& [id, token, v] : rows) {
    if (table.has_row(id, token)) {
      throw DataError(src + ": duplicate embedding row " + id + "#" + std::to_string(token));
    }
    table.set_row(id, token, std::move(v));
  }
  return table;
}

EmbeddingTable load_embeddings(const std::string& path) {
  return parse_embeddings(read_file(path), path);
}

std::vector<double> phrase_vector(const AnnotatedInstance& x, const Span& span,
                                  const EmbeddingTable& table) {
  if (span.empty() || span.begin < 0 || span.end > x.size()) {
    throw DataError("invalid span [" + std::to_string(span.begin) + "," +
                    std::to_string(span.end) + ") for instance '" + x.id + "'");
  }
  std::vector<double> out(table.dim(), 0.0);
  for (int i = span.begin; i < span.end; ++i) {
    const auto row = table.row(x.id, i);
    for (int k = 0; k < table.dim(); ++k) out[k] += row[k];
  }
  const double n = span.length();
  for (double& v : out) v /= n;
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

WordVectors::WordVectors(const std::vector<const Corpus*>& corpora, const EmbeddingTable& table,
                         std::uint64_t seed)
    : dim_(table.dim()), seed_(seed) {
  std::map<std::string, std::pair<std::vector<double>, int>> acc;
  for (const Corpus* c : corpora) {
    for (const auto& x : *c) {
      for (int i = 0; i < x.size(); ++i) {
        if (!table.has_row(x.id, i)) continue;
        auto& [sum, n] = acc[case_fold(x.tokens[i].text)];
        if (sum.empty()) sum.assign(dim_, 0.0);
        const auto row = table.row(x.id, i);
        for (int k = 0; k < dim_; ++k) sum[k] += row[k];
        ++n;
      }
    }
  }
  for (auto& [word, entry] : acc) {
    std::vector<float> v(dim_);
    for (int k = 0; k < dim_; ++k) v[k] = static_cast<float>(entry.first[k] / entry.second);
    vectors_.emplace(word, std::move(v));
  }
}

bool WordVectors::contains(std::string_view word) const {
  return vectors_.count(case_fold(word)) > 0;
}

std::vector<float> WordVectors::lookup(std::string_view word) const {
  const std::string key = case_fold(word);
  if (auto it = vectors_.find(key); it != vectors_.end()) return it->second;
  std::mt19937_64 rng(seed_ ^ fnv1a(key));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim_)));
  std::vector<float> v(dim_);
  for (auto& f : v) f = static_cast<float>(normal(rng));
  return v;
}

}  // namespace exref
