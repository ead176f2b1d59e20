#include <algorithm>
#include <sstream>

#include "exref/error.hpp"
#include "exref/expl_lang.hpp"
#include "exref/io_util.hpp"

namespace exref {

namespace {

struct TemplateSpec {
  std::string_view name;
  bool binary;
  std::size_t args;
};

constexpr TemplateSpec kTemplates[] = {
    {"ner", false, 1},         {"pos", false, 1},        {"sentiment", false, 1},
    {"identity", false, 0},    {"hateful", false, 0},    {"immediately_before", true, 0},
    {"before", true, 1},       {"after", true, 1},       {"near", true, 1},
    {"modifies", true, 0},     {"subject_of", true, 0},  {"dep_within", true, 1},
};

const TemplateSpec* find_template(std::string_view name) {
  for (const auto& t : kTemplates) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

bool is_slot(const std::string& w) { return w == "{k}" || w == "{type}"; }

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

void check_entry(const LexEntry& e) {
  const TemplateSpec* spec = find_template(e.template_name);
  if (spec == nullptr) throw DataError("unknown template '" + e.template_name + "'");
  if (e.args.size() != spec->args) {
    throw DataError("template '" + e.template_name + "' takes " + std::to_string(spec->args) +
                    " argument(s)");
  }
  if (e.surface.empty()) throw DataError("empty surface phrase");
  for (const auto& a : e.args) {
    if (is_slot(a) && std::find(e.surface.begin(), e.surface.end(), a) == e.surface.end()) {
      throw DataError("argument " + a + " has no matching slot in '" + join(e.surface) + "'");
    }
  }
  if (e.template_name == "sentiment" && e.args[0] != "positive" && e.args[0] != "negative") {
    throw DataError("sentiment template expects positive or negative");
  }
}

}  // namespace

bool LexEntry::binary() const {
  const TemplateSpec* spec = find_template(template_name);
  return spec != nullptr && spec->binary;
}

ExplLexicon::ExplLexicon() {
  const std::vector<std::tuple<std::string, std::string, std::vector<std::string>>> builtin = {
      {"immediately before", "immediately_before", {}},
      {"within {k} words before", "before", {"{k}"}},
      {"within {k} words after", "after", {"{k}"}},
      {"within {k} words of", "near", {"{k}"}},
      {"modifies", "modifies", {}},
      {"the subject of", "subject_of", {}},
      {"within {k} dependency hops of", "dep_within", {"{k}"}},
      {"a {type} entity", "ner", {"{type}"}},
      {"tagged {type}", "pos", {"{type}"}},
      {"positive", "sentiment", {"positive"}},
      {"negative", "sentiment", {"negative"}},
      {"identity", "identity", {}},
      {"hateful", "hateful", {}},
  };
  for (const auto& [surface, name, args] : builtin) {
    entries_.push_back({split_words(surface), name, args});
  }
  reindex();
}

void ExplLexicon::add(LexEntry entry) {
  for (auto& w : entry.surface) {
    if (!is_slot(w)) w = case_fold(w);
  }
  check_entry(entry);
  for (const auto& e : entries_) {
    if (e.surface != entry.surface) continue;
    if (e.template_name == entry.template_name && e.args == entry.args) return;
    throw DataError("surface phrase '" + join(entry.surface) + "' already maps to '" +
                    e.template_name + "'");
  }
  entries_.push_back(std::move(entry));
  reindex();
}

void ExplLexicon::merge(const ExplLexicon& other) {
  for (const auto& e : other.entries_) add(e);
}

void ExplLexicon::reindex() {
  by_first_.clear();
  slot_initial_.clear();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (is_slot(entries_[i].surface.front())) {
      slot_initial_.push_back(i);
    } else {
      by_first_[entries_[i].surface.front()].push_back(i);
    }
  }
  auto longest_first = [this](std::size_t ia, std::size_t ib) {
    const LexEntry& a = entries_[ia];
    const LexEntry& b = entries_[ib];
    if (a.surface.size() != b.surface.size()) return a.surface.size() > b.surface.size();
    const auto slots = [](const LexEntry& e) {
      return std::count_if(e.surface.begin(), e.surface.end(), is_slot);
    };
    return slots(a) < slots(b);
  };
  for (auto& [w, list] : by_first_) std::stable_sort(list.begin(), list.end(), longest_first);
  std::stable_sort(slot_initial_.begin(), slot_initial_.end(), longest_first);
}

const std::vector<std::size_t>& ExplLexicon::starting_with(const std::string& word) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = by_first_.find(word);
  return it == by_first_.end() ? kEmpty : it->second;
}

std::string ExplLexicon::nearest(std::string_view phrase) const {
  const std::string folded = case_fold(phrase);
  std::string best;
  std::size_t best_d = static_cast<std::size_t>(-1);
  for (const auto& e : entries_) {
    const std::string s = join(e.surface);
    const std::size_t d = edit_distance(folded, s);
    if (d < best_d) {
      best_d = d;
      best = s;
    }
  }
  return best;
}

ExplLexicon parse_expl_lexicon(std::string_view text, const std::string& source_name) {
  ExplLexicon lex;
  std::size_t lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() < 2 || cols.size() > 3) {
      throw FormatError(source_name, lineno, "expected <phrase><TAB><template>[<TAB><args>]");
    }
    LexEntry e;
    e.surface = split_words(cols[0]);
    e.template_name = trim(cols[1]);
    if (cols.size() == 3) e.args = split_words(cols[2]);
    try {
      lex.add(std::move(e));
    } catch (const FormatError&) {
      throw;
    } catch (const DataError& err) {
      throw FormatError(source_name, lineno, err.what());
    }
  }
  return lex;
}

ExplLexicon load_expl_lexicon(const std::string& path) {
  return parse_expl_lexicon(read_file(path), path);
}

}  // namespace exref
