#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "exref/error.hpp"
#include "exref/expl_lang.hpp"
#include "exref/io_util.hpp"

namespace exref {

// ---- classes & AST helpers ----------------------------------------------------

ClassList::ClassList(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw DataError("class list is empty");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw DataError("empty class name");
    if (!seen.insert(case_fold(n)).second) throw DataError("duplicate class name '" + n + "'");
  }
}

std::optional<int> ClassList::find(std::string_view name) const {
  const std::string folded = case_fold(trim(name));
  for (int i = 0; i < size(); ++i) {
    if (case_fold(names_[i]) == folded) return i;
  }
  int idx = 0;
  auto [p, ec] = std::from_chars(folded.data(), folded.data() + folded.size(), idx);
  if (!folded.empty() && ec == std::errc() && p == folded.data() + folded.size() && idx >= 0 &&
      idx < size()) {
    return idx;
  }
  return std::nullopt;
}

int ClassList::index_of(std::string_view name) const {
  auto idx = find(name);
  if (!idx) throw DataError("unknown class '" + std::string(name) + "'");
  return *idx;
}

PredicateExpr PredicateExpr::make_leaf(LeafPredicate p) {
  PredicateExpr e;
  e.kind = Kind::kLeaf;
  e.leaf = std::move(p);
  return e;
}

PredicateExpr PredicateExpr::make_and(std::vector<PredicateExpr> children) {
  PredicateExpr e;
  e.kind = Kind::kAnd;
  e.children = std::move(children);
  return e;
}

PredicateExpr PredicateExpr::make_or(std::vector<PredicateExpr> children) {
  PredicateExpr e;
  e.kind = Kind::kOr;
  e.children = std::move(children);
  return e;
}

std::size_t PredicateExpr::leaf_count() const {
  if (kind == Kind::kLeaf) return 1;
  std::size_t n = 0;
  for (const auto& c : children) n += c.leaf_count();
  return n;
}

const VarDecl* Rule::find_var(std::string_view name) const {
  for (const auto& v : vars) {
    if (v.name == name) return &v;
  }
  return nullptr;
}

namespace {

void collect_vars(const LeafPredicate& leaf, std::vector<std::string>& out) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Relation>) {
          out.push_back(p.a);
          out.push_back(p.b);
        } else {
          out.push_back(p.var);
        }
      },
      leaf.pred);
}

void check_expr(const PredicateExpr& e, const Rule& rule) {
  if (e.kind == PredicateExpr::Kind::kLeaf) {
    if (!e.leaf || !e.children.empty()) throw DataError("malformed leaf node");
    std::vector<std::string> vars;
    collect_vars(*e.leaf, vars);
    for (const auto& v : vars) {
      if (rule.find_var(v) == nullptr) throw DataError("undeclared variable '" + v + "'");
    }
    if (const auto* r = std::get_if<Relation>(&e.leaf->pred)) {
      if (r->a == r->b) throw DataError("relation between a variable and itself");
      if (r->k < 0) throw DataError("negative distance bound");
    }
    return;
  }
  if (e.leaf) throw DataError("logic node carrying a leaf");
  for (const auto& c : e.children) check_expr(c, rule);
}

}  // namespace

void check_rule(const Rule& rule, int class_count) {
  if (rule.noisy_label < 0 || rule.noisy_label >= class_count) {
    throw DataError("rule '" + rule.id + "': noisy label out of range");
  }
  std::set<std::string> names;
  for (const auto& v : rule.vars) {
    if (!names.insert(v.name).second) throw DataError("variable declared twice: " + v.name);
    if (v.span.empty()) throw DataError("variable " + v.name + " has an empty reference span");
  }
  check_expr(rule.body, rule);
  for (const auto& a : rule.head) {
    if (a.cls < 0 || a.cls >= class_count) throw DataError("advice class out of range");
    if (rule.find_var(a.a) == nullptr) throw DataError("undeclared variable '" + a.a + "'");
    if (a.kind == AdviceAtom::Kind::kInteraction && rule.find_var(a.b) == nullptr) {
      throw DataError("undeclared variable '" + a.b + "'");
    }
  }
}

// ---- file splitting -----------------------------------------------------------

namespace {

bool starts_with_folded(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  return case_fold(s.substr(0, prefix.size())) == prefix;
}

std::string header_value(std::string_view line, std::size_t colon) {
  std::string v = trim(line.substr(colon + 1));
  while (!v.empty() && v.back() == '.') v.pop_back();
  return trim(v);
}

}  // namespace

std::vector<ExplanationBlock> split_explanation_file(std::string_view text) {
  std::vector<ExplanationBlock> blocks;
  std::size_t pos = 0;
  ExplanationBlock cur;
  bool open = false;
  auto close = [&] {
    if (!open) return;
    if (cur.id.empty()) cur.id = "rule" + std::to_string(blocks.size() + 1);
    blocks.push_back(std::move(cur));
    cur = ExplanationBlock{};
    open = false;
  };
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    const std::string t = trim(line);
    if (t.empty()) {
      close();
    } else if (t[0] == '#' && !open) {
      // comment between blocks
    } else {
      if (!open) {
        open = true;
        cur.offset = pos;
      }
      cur.text.append(text.substr(pos, std::min(nl + 1, text.size()) - pos));
      if (starts_with_folded(t, "rule:")) cur.id = header_value(t, t.find(':'));
      if (starts_with_folded(t, "reference:")) cur.ref_id = header_value(t, t.find(':'));
    }
    pos = nl + 1;
  }
  close();
  return blocks;
}

// ---- parsing ------------------------------------------------------------------

namespace {

struct Word {
  std::string text;
  std::string folded;
  std::size_t offset = 0;
  bool quoted = false;
};

bool is_var_name(const Word& w) {
  if (w.quoted || w.text.empty() || !std::isupper(static_cast<unsigned char>(w.text[0]))) {
    return false;
  }
  return std::all_of(w.text.begin() + 1, w.text.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool is_soft_marker(const Word& w) {
  return !w.quoted && (w.folded == "(soft)" || w.folded == "(strict)");
}

const std::set<std::string>& fillers() {
  static const std::set<std::string> k = {"a",    "an",    "the",    "is",    "are",
                                          "be",   "word",  "words",  "term",  "token",
                                          "phrase", "entity"};
  return k;
}

std::optional<int> parse_number(const std::string& w) {
  static const char* kWords[] = {"zero",    "one",     "two",      "three",    "four",
                                 "five",    "six",     "seven",    "eight",    "nine",
                                 "ten",     "eleven",  "twelve",   "thirteen", "fourteen",
                                 "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
                                 "twenty"};
  for (int i = 0; i <= 20; ++i) {
    if (w == kWords[i]) return i;
  }
  int v = 0;
  auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
  if (w.empty() || ec != std::errc() || p != w.data() + w.size() || v < 0 || v > 100000) {
    return std::nullopt;
  }
  return v;
}

// Opening quote at text[i]: returns (closing sequence, opener length).
std::optional<std::pair<std::string, std::size_t>> opening_quote(std::string_view text,
                                                                 std::size_t i) {
  if (text.substr(i, 2) == "``") return std::make_pair(std::string("''"), std::size_t{2});
  if (text.substr(i, 3) == "\xE2\x80\x9C") return std::make_pair(std::string("\xE2\x80\x9D"), std::size_t{3});
  if (text.substr(i, 3) == "\xE2\x80\x98") return std::make_pair(std::string("\xE2\x80\x99"), std::size_t{3});
  if (text[i] == '"') return std::make_pair(std::string("\""), std::size_t{1});
  if (text[i] == '\'') return std::make_pair(std::string("'"), std::size_t{1});
  return std::nullopt;
}

bool at_word_start(std::string_view text, std::size_t i) {
  return i == 0 || std::isspace(static_cast<unsigned char>(text[i - 1])) || text[i - 1] == '(';
}

// Finds the closing sequence for a quote opened before `from`.
std::size_t find_close(std::string_view text, std::size_t from, const std::string& close) {
  std::size_t pos = from;
  while (true) {
    pos = text.find(close, pos);
    if (pos == std::string_view::npos) return pos;
    if (close != "'") return pos;
    // A single quote closes only when not followed by a letter (so "don't" survives).
    const std::size_t after = pos + 1;
    if (after >= text.size() || !std::isalnum(static_cast<unsigned char>(text[after]))) return pos;
    pos = after;
  }
}

struct Sentence {
  std::string text;
  std::size_t offset = 0;
};

// Splits one line into sentences on '.' outside quotes ('..' and digit.digit stay inside).
std::vector<Sentence> split_sentences(std::string_view line, std::size_t line_offset) {
  std::vector<Sentence> out;
  std::size_t start = 0;
  std::size_t i = 0;
  auto emit = [&](std::size_t end) {
    const std::string_view raw = line.substr(start, end - start);
    const auto b = raw.find_first_not_of(" \t\r");
    if (b != std::string_view::npos) {
      const auto e = raw.find_last_not_of(" \t\r");
      out.push_back({std::string(raw.substr(b, e - b + 1)), line_offset + start + b});
    }
  };
  while (i < line.size()) {
    if (at_word_start(line, i)) {
      if (auto q = opening_quote(line, i)) {
        const std::size_t close = find_close(line, i + q->second, q->first);
        if (close == std::string_view::npos) {
          throw ParseError(line_offset + i, "unterminated quoted literal");
        }
        i = close + q->first.size();
        continue;
      }
    }
    if (line[i] == '.') {
      if (i + 1 < line.size() && line[i + 1] == '.') {
        i += 2;
        continue;
      }
      if (i > 0 && i + 1 < line.size() && std::isdigit(static_cast<unsigned char>(line[i - 1])) &&
          std::isdigit(static_cast<unsigned char>(line[i + 1]))) {
        ++i;
        continue;
      }
      emit(i);
      start = i + 1;
    }
    ++i;
  }
  emit(line.size());
  return out;
}

std::vector<Word> tokenize(std::string_view s, std::size_t base) {
  std::vector<Word> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (std::isspace(static_cast<unsigned char>(s[i]))) {
      ++i;
      continue;
    }
    if (auto q = at_word_start(s, i) ? opening_quote(s, i) : std::nullopt) {
      const std::size_t close = find_close(s, i + q->second, q->first);
      if (close == std::string_view::npos) throw ParseError(base + i, "unterminated quoted literal");
      Word w;
      w.text = std::string(s.substr(i + q->second, close - i - q->second));
      w.folded = case_fold(w.text);
      w.offset = base + i;
      w.quoted = true;
      out.push_back(std::move(w));
      i = close + q->first.size();
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    std::string raw(s.substr(i, j - i));
    const std::size_t word_offset = base + i;
    const std::string folded_raw = case_fold(raw);
    if (folded_raw != "(soft)" && folded_raw != "(strict)") {
      while (!raw.empty() && std::string_view(",;:!?").find(raw.back()) != std::string_view::npos) {
        raw.pop_back();
      }
    }
    if (!raw.empty()) out.push_back({raw, case_fold(raw), word_offset, false});
    i = j;
  }
  return out;
}

struct Segment {
  std::size_t entry = 0;
  std::map<std::string, std::string> slots;  // slot -> surface word (original case)
  std::size_t offset = 0;
};

std::optional<Segment> match_entry(const ExplLexicon& lex, std::size_t idx,
                                   const std::vector<Word>& words, std::size_t at) {
  const LexEntry& e = lex.entries()[idx];
  if (at + e.surface.size() > words.size()) return std::nullopt;
  Segment seg;
  seg.entry = idx;
  seg.offset = words[at].offset;
  for (std::size_t j = 0; j < e.surface.size(); ++j) {
    const Word& w = words[at + j];
    if (w.quoted) return std::nullopt;
    const std::string& s = e.surface[j];
    if (s == "{k}") {
      if (!parse_number(w.folded)) return std::nullopt;
      seg.slots[s] = w.folded;
    } else if (s == "{type}") {
      if (is_var_name(w)) return std::nullopt;
      seg.slots[s] = w.text;
    } else if (s != w.folded) {
      return std::nullopt;
    }
  }
  return seg;
}

std::vector<Segment> segment(const ExplLexicon& lex, const std::vector<Word>& words) {
  std::vector<Segment> out;
  std::size_t i = 0;
  while (i < words.size()) {
    std::optional<Segment> best;
    std::size_t best_len = 0;
    auto consider = [&](const std::vector<std::size_t>& candidates) {
      for (std::size_t idx : candidates) {
        const std::size_t len = lex.entries()[idx].surface.size();
        if (len <= best_len) continue;
        if (auto seg = match_entry(lex, idx, words, i)) {
          best = std::move(seg);
          best_len = len;
        }
      }
    };
    if (!words[i].quoted) consider(lex.starting_with(words[i].folded));
    consider(lex.slot_initial());
    if (best) {
      out.push_back(std::move(*best));
      i += best_len;
      continue;
    }
    if (!words[i].quoted && fillers().count(words[i].folded)) {
      ++i;
      continue;
    }
    std::string rest;
    for (std::size_t j = i; j < words.size(); ++j) {
      if (!rest.empty()) rest += ' ';
      rest += words[j].folded;
    }
    throw ParseError(words[i].offset, "unknown phrase '" + words[i].text + "' (nearest lexicon entry: '" +
                                          lex.nearest(rest) + "')");
  }
  return out;
}

std::string to_upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

struct DeclInfo {
  std::string name;
  std::string literal;
  std::size_t offset = 0;
  bool explicit_span = false;
  int first = 0;
  int last = 0;
};

class ExplParser {
 public:
  ExplParser(const ExplLexicon& lex, const AnnotatedInstance& ref, const ClassList& classes)
      : lex_(lex), ref_(ref), classes_(classes) {}

  Rule parse(std::string_view text, std::string_view rule_id) {
    Rule rule;
    rule.id = std::string(rule_id);
    rule.ref_instance = ref_.id;

    std::vector<Sentence> patterns;
    std::vector<Sentence> advice;
    std::optional<std::pair<std::string, std::size_t>> label;

    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      const std::string_view line = text.substr(pos, nl - pos);
      const std::string t = trim(line);
      const std::size_t lead = line.find_first_not_of(" \t");
      if (t.empty() || t[0] == '#') {
        // blank or comment
      } else if (starts_with_folded(t, "rule:")) {
        const std::string id = header_value(t, t.find(':'));
        if (id.empty()) throw ParseError(pos + lead, "empty rule id");
        rule.id = id;
      } else if (starts_with_folded(t, "reference:")) {
        const std::string ref_id = header_value(t, t.find(':'));
        if (ref_id != ref_.id) {
          throw ParseError(pos + lead, "reference '" + ref_id + "' does not match instance '" +
                                           ref_.id + "'");
        }
      } else {
        for (auto& s : split_sentences(line, pos)) classify(std::move(s), patterns, advice, label);
      }
      pos = nl + 1;
    }

    if (!label) throw ParseError(text.size(), "missing label line");
    const auto cls = classes_.find(label->first);
    if (!cls) throw ParseError(label->second, "unknown class '" + label->first + "'");
    rule.noisy_label = *cls;

    std::vector<std::vector<std::vector<std::vector<Word>>>> sentences;
    for (const auto& s : patterns) sentences.push_back(split_clauses(tokenize(s.text, s.offset), s.offset));

    for (const auto& sent : sentences) {
      for (const auto& part : sent) {
        for (const auto& clause : part) collect_decl(clause);
      }
    }
    if (decls_.empty()) throw ParseError(0, "no variable declarations (e.g. X is 'word'.)");

    std::vector<PredicateExpr> body;
    for (const auto& sent : sentences) {
      std::vector<PredicateExpr> parts;
      for (const auto& part : sent) {
        std::vector<PredicateExpr> clauses;
        for (const auto& clause : part) clauses.push_back(build_clause(clause));
        parts.push_back(clauses.size() == 1 ? std::move(clauses[0])
                                            : PredicateExpr::make_and(std::move(clauses)));
      }
      body.push_back(parts.size() == 1 ? std::move(parts[0])
                                       : PredicateExpr::make_or(std::move(parts)));
    }
    rule.body = PredicateExpr::make_and(std::move(body));

    if (advice.empty()) throw ParseError(text.size(), "missing refinement advice sentence");
    for (const auto& s : advice) rule.head.push_back(parse_advice(s, rule.noisy_label));

    for (const auto& d : decls_) rule.vars.push_back(resolve(d));
    return rule;
  }

 private:
  void classify(Sentence s, std::vector<Sentence>& patterns, std::vector<Sentence>& advice,
                std::optional<std::pair<std::string, std::size_t>>& label) {
    static const char* kPrefixes[] = {"spurious pattern:", "refinement advice:", "pattern:",
                                      "advice:", "explanation:"};
    for (const char* p : kPrefixes) {
      if (starts_with_folded(s.text, p)) {
        const std::size_t n = std::string_view(p).size();
        const std::string rest = trim(std::string_view(s.text).substr(n));
        s.offset += s.text.size() - rest.size();
        s.text = rest;
        break;
      }
    }
    if (s.text.empty()) return;
    const std::string folded = case_fold(s.text);
    for (std::string_view p : {"label:", "noisy label:"}) {
      if (folded.rfind(p, 0) == 0) {
        if (label) throw ParseError(s.offset, "more than one label line");
        label = std::make_pair(trim(std::string_view(s.text).substr(p.size())), s.offset);
        return;
      }
    }
    const auto first = folded.substr(0, folded.find_first_of(" \t"));
    if (first == "attribution" || first == "importance" || first == "interaction") {
      advice.push_back(std::move(s));
      return;
    }
    patterns.push_back(std::move(s));
  }

  // sentence -> OR parts -> AND clauses -> words
  std::vector<std::vector<std::vector<Word>>> split_clauses(const std::vector<Word>& words,
                                                            std::size_t offset) {
    std::vector<std::vector<std::vector<Word>>> parts(1);
    parts.back().emplace_back();
    for (const auto& w : words) {
      if (!w.quoted && w.folded == "or") {
        parts.emplace_back();
        parts.back().emplace_back();
      } else if (!w.quoted && w.folded == "and") {
        parts.back().emplace_back();
      } else {
        parts.back().back().push_back(w);
      }
    }
    for (const auto& part : parts) {
      for (const auto& clause : part) {
        if (clause.empty()) throw ParseError(offset, "empty clause around 'and'/'or'");
      }
    }
    return parts;
  }

  void collect_decl(const std::vector<Word>& c) {
    if (c.size() < 3 || !is_var_name(c[0])) return;
    std::size_t n = c.size();
    if (is_soft_marker(c[n - 1])) --n;
    DeclInfo d;
    d.name = c[0].text;
    d.offset = c[0].offset;
    if (c[1].text == "=" && !c[1].quoted) {
      if (n != 4 || (c[2].folded != "tokens" && c[2].folded != "token")) {
        throw ParseError(c[1].offset, "expected 'X = tokens i..j'");
      }
      const std::string& range = c[3].folded;
      const auto dots = range.find("..");
      auto first = parse_number(range.substr(0, dots));
      auto last = dots == std::string::npos ? first : parse_number(range.substr(dots + 2));
      if (!first || !last || *last < *first) {
        throw ParseError(c[3].offset, "bad token range '" + c[3].text + "'");
      }
      d.explicit_span = true;
      d.first = *first;
      d.last = *last;
    } else if (n == 3 && (c[1].folded == "is" || c[1].folded == "are") && c[2].quoted) {
      d.literal = c[2].text;
      if (trim(d.literal).empty()) throw ParseError(c[2].offset, "empty literal");
    } else {
      return;
    }
    for (const auto& prev : decls_) {
      if (prev.name != d.name) continue;
      if (d.explicit_span || prev.explicit_span) {
        if (!(d.explicit_span && prev.explicit_span && d.first == prev.first &&
              d.last == prev.last)) {
          throw ParseError(d.offset, "variable " + d.name + " redeclared");
        }
      }
      return;
    }
    decls_.push_back(std::move(d));
  }

  const DeclInfo& decl(const Word& w) const {
    for (const auto& d : decls_) {
      if (d.name == w.text) return d;
    }
    throw ParseError(w.offset, "undeclared variable '" + w.text + "'");
  }

  std::string decl_literal(const DeclInfo& d) const {
    if (!d.explicit_span) return d.literal;
    if (d.last >= ref_.size()) return {};
    return ref_.span_text({d.first, d.last + 1});
  }

  PredicateExpr build_clause(std::vector<Word> c) {
    if (c.empty()) throw ParseError(0, "empty clause");
    if (!is_var_name(c[0])) {
      throw ParseError(c[0].offset, "clause must start with a variable (e.g. X), got '" + c[0].text + "'");
    }
    const DeclInfo& d = decl(c[0]);
    std::optional<bool> soft;
    if (is_soft_marker(c.back())) {
      soft = c.back().folded == "(soft)";
      c.pop_back();
    }
    if (c.size() < 2) throw ParseError(c[0].offset, "incomplete clause");
    if (c[1].text == "=" && !c[1].quoted) {
      return PredicateExpr::make_leaf({Existence{d.name, decl_literal(d)}, soft});
    }
    if (c.size() == 3 && (c[1].folded == "is" || c[1].folded == "are") && c[2].quoted) {
      return PredicateExpr::make_leaf({Existence{d.name, c[2].text}, soft});
    }
    std::vector<Word> rest(c.begin() + 1, c.end());
    std::optional<std::string> other;
    if (is_var_name(rest.back())) {
      other = decl(rest.back()).name;
      rest.pop_back();
    }
    for (const auto& w : rest) {
      if (w.quoted) throw ParseError(w.offset, "unexpected quoted literal in clause");
      if (is_var_name(w)) throw ParseError(w.offset, "unexpected variable '" + w.text + "'");
    }
    const std::size_t clause_offset = c[0].offset;
    const auto segs = segment(lex_, rest);
    if (segs.empty()) throw ParseError(clause_offset, "no predicate in clause");
    if (segs.size() > 1) {
      throw ParseError(segs[1].offset, "more than one predicate in a clause; use separate sentences");
    }
    const LexEntry& e = lex_.entries()[segs[0].entry];
    auto arg = [&](std::size_t i) -> std::string {
      const std::string& a = e.args.at(i);
      auto it = segs[0].slots.find(a);
      return it == segs[0].slots.end() ? a : it->second;
    };
    auto number_arg = [&](std::size_t i, int min) {
      auto v = parse_number(case_fold(arg(i)));
      if (!v || *v < min) throw ParseError(segs[0].offset, "bad distance '" + arg(i) + "'");
      return *v;
    };
    if (e.binary() != other.has_value()) {
      throw ParseError(segs[0].offset, e.binary() ? "relation needs a second variable"
                                                  : "characteristic takes a single variable");
    }
    const std::string& tn = e.template_name;
    if (!e.binary()) {
      Characteristic ch{d.name, CharKind::kNer, ""};
      if (tn == "ner") {
        ch.value = to_upper(arg(0));
      } else if (tn == "pos") {
        ch.kind = CharKind::kPos;
        ch.value = to_upper(arg(0));
      } else if (tn == "sentiment") {
        ch.kind = CharKind::kSentiment;
        ch.value = case_fold(arg(0));
      } else if (tn == "identity") {
        ch.kind = CharKind::kIdentity;
      } else {
        ch.kind = CharKind::kHateful;
      }
      return PredicateExpr::make_leaf({ch, soft});
    }
    if (*other == d.name) throw ParseError(clause_offset, "relation between a variable and itself");
    Relation r{d.name, *other, RelationKind::kImmediatelyBefore, 0};
    if (tn == "immediately_before") {
      // defaults
    } else if (tn == "before") {
      r.kind = RelationKind::kWithinBefore;
      r.k = number_arg(0, 1);
    } else if (tn == "after") {
      r.kind = RelationKind::kWithinAfter;
      r.k = number_arg(0, 1);
    } else if (tn == "near") {
      const int k = number_arg(0, 1);
      return PredicateExpr::make_or(
          {PredicateExpr::make_leaf({Relation{d.name, *other, RelationKind::kWithinBefore, k}, soft}),
           PredicateExpr::make_leaf({Relation{d.name, *other, RelationKind::kWithinAfter, k}, soft})});
    } else if (tn == "modifies") {
      r.kind = RelationKind::kModifies;
    } else if (tn == "subject_of") {
      r.kind = RelationKind::kSubjectOf;
    } else {
      r.kind = RelationKind::kDependencyWithin;
      r.k = number_arg(0, 0);
    }
    return PredicateExpr::make_leaf({r, soft});
  }

  AdviceAtom parse_advice(const Sentence& s, int default_class) {
    const auto words = tokenize(s.text, s.offset);
    AdviceAtom atom;
    std::size_t i = 0;
    auto at = [&](std::size_t k) -> const Word& {
      if (k >= words.size()) throw ParseError(s.offset + s.text.size(), "incomplete advice sentence");
      return words[k];
    };
    auto expect_var = [&](std::size_t k) -> std::string {
      const Word& w = at(k);
      if (!is_var_name(w)) throw ParseError(w.offset, "expected a variable, got '" + w.text + "'");
      return decl(w).name;
    };
    const std::string head = at(0).folded;
    atom.kind = head == "interaction" ? AdviceAtom::Kind::kInteraction : AdviceAtom::Kind::kAttribution;
    i = 1;
    if (at(i).folded == "score" || at(i).folded == "scores") ++i;
    if (atom.kind == AdviceAtom::Kind::kAttribution) {
      if (at(i).folded == "of" || at(i).folded == "for") ++i;
      atom.a = expect_var(i++);
    } else {
      if (at(i).folded == "between" || at(i).folded == "of") ++i;
      atom.a = expect_var(i++);
      if (at(i).folded != "and") throw ParseError(at(i).offset, "expected 'and'");
      ++i;
      atom.b = expect_var(i++);
      if (atom.a == atom.b) throw ParseError(at(i - 1).offset, "interaction of a variable with itself");
    }
    if (at(i).folded != "should") throw ParseError(at(i).offset, "expected 'should'");
    ++i;
    if (at(i).folded == "be") ++i;
    const Word& dir = at(i++);
    static const std::set<std::string> kUp = {"increased", "increase", "raised", "raise", "higher"};
    static const std::set<std::string> kDown = {"decreased", "decrease", "lowered", "lower", "reduced"};
    if (kUp.count(dir.folded)) {
      atom.direction = Direction::kIncrease;
    } else if (kDown.count(dir.folded)) {
      atom.direction = Direction::kDecrease;
    } else {
      throw ParseError(dir.offset, "unknown direction '" + dir.text + "' (use increased/decreased)");
    }
    atom.cls = default_class;
    if (i < words.size()) {
      const Word& prep = words[i];
      if (prep.folded != "for" && prep.folded != "towards" && prep.folded != "toward" &&
          prep.folded != "to") {
        throw ParseError(prep.offset, "unexpected '" + prep.text + "' after direction");
      }
      std::string name;
      for (std::size_t k = i + 1; k < words.size(); ++k) {
        if (!name.empty()) name += ' ';
        name += words[k].text;
      }
      if (name.empty()) throw ParseError(prep.offset, "missing class name");
      const auto cls = classes_.find(name);
      if (!cls) throw ParseError(words[i + 1].offset, "unknown class '" + name + "'");
      atom.cls = *cls;
    }
    return atom;
  }

  VarDecl resolve(const DeclInfo& d) const {
    VarDecl v;
    v.name = d.name;
    v.explicit_span = d.explicit_span;
    if (d.explicit_span) {
      if (d.last >= ref_.size()) {
        throw ParseError(d.offset, "token range for " + d.name + " exceeds reference instance '" +
                                       ref_.id + "' (" + std::to_string(ref_.size()) + " tokens)");
      }
      v.span = {d.first, d.last + 1};
      v.literal = ref_.span_text(v.span);
    } else {
      v.literal = d.literal;
      const auto words = split_words(case_fold(d.literal));
      if (words.empty()) throw ParseError(d.offset, "empty literal");
      bool found = false;
      for (int i = 0; i + static_cast<int>(words.size()) <= ref_.size() && !found; ++i) {
        bool ok = true;
        for (std::size_t k = 0; k < words.size() && ok; ++k) {
          const Token& t = ref_.tokens[i + k];
          ok = case_fold(t.text) == words[k] || case_fold(t.lemma) == words[k];
        }
        if (ok) {
          v.span = {i, i + static_cast<int>(words.size())};
          found = true;
        }
      }
      if (!found) {
        throw ParseError(d.offset, "literal '" + d.literal + "' for " + d.name +
                                       " not found in reference instance '" + ref_.id + "'");
      }
    }
    v.ref_tokens.assign(ref_.tokens.begin() + v.span.begin, ref_.tokens.begin() + v.span.end);
    return v;
  }

  const ExplLexicon& lex_;
  const AnnotatedInstance& ref_;
  const ClassList& classes_;
  std::vector<DeclInfo> decls_;
};

}  // namespace

Rule parse_explanation(std::string_view text, const ExplLexicon& lexicon, const AnnotatedInstance& ref,
                       const ClassList& classes, std::string_view rule_id, std::size_t base_offset) {
  try {
    ExplParser parser(lexicon, ref, classes);
    Rule rule = parser.parse(text, rule_id.empty() ? std::string_view("rule") : rule_id);
    check_rule(rule, classes.size());
    return rule;
  } catch (const ParseError& e) {
    if (base_offset == 0) throw;
    throw ParseError(e.offset() + base_offset, e.what());
  } catch (const DataError& e) {
    throw ParseError(base_offset, e.what());
  }
}

// ---- printing -----------------------------------------------------------------

namespace {

std::string quote(const std::string& lit) {
  if (lit.find('\'') == std::string::npos) return "'" + lit + "'";
  if (lit.find('"') == std::string::npos) return "\"" + lit + "\"";
  return "``" + lit + "''";
}

std::string marker(const std::optional<bool>& soft) {
  if (!soft) return "";
  return *soft ? " (soft)" : " (strict)";
}

std::string relation_phrase(const Relation& r) {
  switch (r.kind) {
    case RelationKind::kImmediatelyBefore:
      return r.a + " is immediately before " + r.b;
    case RelationKind::kWithinBefore:
      return r.a + " is within " + std::to_string(r.k) + " words before " + r.b;
    case RelationKind::kWithinAfter:
      return r.a + " is within " + std::to_string(r.k) + " words after " + r.b;
    case RelationKind::kModifies:
      return r.a + " modifies " + r.b;
    case RelationKind::kSubjectOf:
      return r.a + " is the subject of " + r.b;
    case RelationKind::kDependencyWithin:
      return r.a + " is within " + std::to_string(r.k) + " dependency hops of " + r.b;
  }
  return {};
}

std::string characteristic_phrase(const Characteristic& c) {
  switch (c.kind) {
    case CharKind::kNer:
      return c.var + " is a " + c.value + " entity";
    case CharKind::kPos:
      return c.var + " is tagged " + c.value;
    case CharKind::kSentiment:
      return c.var + " is " + c.value;
    case CharKind::kIdentity:
      return c.var + " is identity";
    case CharKind::kHateful:
      return c.var + " is hateful";
  }
  return {};
}

// OR(WithinBefore(a,b,k), WithinAfter(a,b,k)) as produced by "within k words of".
const Relation* near_shape(const PredicateExpr& e) {
  if (e.kind != PredicateExpr::Kind::kOr || e.children.size() != 2) return nullptr;
  const auto& l = e.children[0];
  const auto& r = e.children[1];
  if (l.kind != PredicateExpr::Kind::kLeaf || r.kind != PredicateExpr::Kind::kLeaf) return nullptr;
  const auto* a = std::get_if<Relation>(&l.leaf->pred);
  const auto* b = std::get_if<Relation>(&r.leaf->pred);
  if (a == nullptr || b == nullptr || l.leaf->soft != r.leaf->soft) return nullptr;
  if (a->kind != RelationKind::kWithinBefore || b->kind != RelationKind::kWithinAfter) return nullptr;
  if (a->a != b->a || a->b != b->b || a->k != b->k) return nullptr;
  return a;
}

class Printer {
 public:
  explicit Printer(const Rule* rule) : rule_(rule) {}

  std::string leaf(const LeafPredicate& lp) {
    std::string s = std::visit(
        [&](const auto& p) -> std::string {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Existence>) {
            const VarDecl* v = rule_ ? rule_->find_var(p.var) : nullptr;
            if (v != nullptr && v->explicit_span && !declared_.count(p.var) && p.literal == v->literal) {
              declared_.insert(p.var);
              if (v->span.length() == 1) return p.var + " = token " + std::to_string(v->span.begin);
              return p.var + " = tokens " + std::to_string(v->span.begin) + ".." +
                     std::to_string(v->span.end - 1);
            }
            declared_.insert(p.var);
            return p.var + " is " + quote(p.literal);
          } else if constexpr (std::is_same_v<T, Characteristic>) {
            return characteristic_phrase(p);
          } else {
            return relation_phrase(p);
          }
        },
        lp.pred);
    return s + marker(lp.soft);
  }

  // Node inside a sentence: a leaf or a near-shaped OR.
  std::string atom(const PredicateExpr& e) {
    if (e.kind == PredicateExpr::Kind::kLeaf) return leaf(*e.leaf);
    if (const Relation* r = near_shape(e)) {
      return r->a + " is within " + std::to_string(r->k) + " words of " + r->b +
             marker(e.children[0].leaf->soft);
    }
    return "(" + sentence(e) + ")";
  }

  std::string conj(const PredicateExpr& e) {
    if (e.kind != PredicateExpr::Kind::kAnd) return atom(e);
    std::string out;
    for (const auto& c : e.children) {
      if (!out.empty()) out += " and ";
      out += atom(c);
    }
    return out;
  }

  std::string sentence(const PredicateExpr& e) {
    if (e.kind == PredicateExpr::Kind::kOr && near_shape(e) == nullptr) {
      std::string out;
      for (const auto& c : e.children) {
        if (!out.empty()) out += " or ";
        out += conj(c);
      }
      return out;
    }
    return conj(e);
  }

 private:
  const Rule* rule_;
  std::set<std::string> declared_;
};

}  // namespace

std::string describe_leaf(const LeafPredicate& leaf) {
  return std::visit(
      [](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Existence>) {
          return "Existence(" + p.var + ")";
        } else if constexpr (std::is_same_v<T, Characteristic>) {
          return "Characteristic(" + characteristic_phrase(p) + ")";
        } else {
          return "Relation(" + relation_phrase(p) + ")";
        }
      },
      leaf.pred);
}

std::string print_expr(const PredicateExpr& expr) {
  Printer p(nullptr);
  if (expr.kind == PredicateExpr::Kind::kAnd) {
    std::string out;
    for (const auto& c : expr.children) out += p.sentence(c) + ". ";
    if (!out.empty()) out.pop_back();
    return out;
  }
  return p.sentence(expr) + ".";
}

std::string print_rule(const Rule& rule, const ClassList& classes) {
  std::ostringstream out;
  out << "Rule: " << rule.id << "\n";
  out << "Reference: " << rule.ref_instance << "\n";
  Printer p(&rule);
  const auto& top = rule.body;
  if (top.kind == PredicateExpr::Kind::kAnd) {
    for (const auto& c : top.children) out << p.sentence(c) << ".\n";
  } else {
    out << p.sentence(top) << ".\n";
  }
  out << "Label: " << classes.name(rule.noisy_label) << ".\n";
  for (const auto& a : rule.head) {
    const char* dir = a.direction == Direction::kIncrease ? "increased" : "decreased";
    if (a.kind == AdviceAtom::Kind::kAttribution) {
      out << "Attribution score of " << a.a << " should be " << dir;
    } else {
      out << "Interaction score between " << a.a << " and " << a.b << " should be " << dir;
    }
    out << " for " << classes.name(a.cls) << ".\n";
  }
  return out.str();
}

}  // namespace exref
