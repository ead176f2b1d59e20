#ifndef EXREF_EXPL_LANG_HPP_
#define EXREF_EXPL_LANG_HPP_

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "exref/corpus.hpp"

namespace exref {

// Ordered class names; a class index is a position in this list.
class ClassList {
 public:
  ClassList() = default;
  explicit ClassList(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int index) const { return names_.at(index); }
  // Case-insensitive lookup of a name or a decimal index.
  std::optional<int> find(std::string_view name) const;
  int index_of(std::string_view name) const;  // throws DataError
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

// ---- rule AST --------------------------------------------------------------

struct Existence {
  std::string var;
  std::string literal;
  friend bool operator==(const Existence&, const Existence&) = default;
};

enum class CharKind { kNer, kPos, kSentiment, kIdentity, kHateful };

struct Characteristic {
  std::string var;
  CharKind kind = CharKind::kNer;
  std::string value;  // NER type, POS tag, or "positive"/"negative"
  friend bool operator==(const Characteristic&, const Characteristic&) = default;
};

enum class RelationKind {
  kImmediatelyBefore,
  kWithinBefore,
  kWithinAfter,
  kModifies,
  kSubjectOf,
  kDependencyWithin,
};

struct Relation {
  std::string a;
  std::string b;
  RelationKind kind = RelationKind::kImmediatelyBefore;
  int k = 0;
  friend bool operator==(const Relation&, const Relation&) = default;
};

struct LeafPredicate {
  std::variant<Existence, Characteristic, Relation> pred;
  // Explicit per-clause "(soft)" / "(strict)" marker; nullopt when absent.
  std::optional<bool> soft;
  friend bool operator==(const LeafPredicate&, const LeafPredicate&) = default;
};

struct PredicateExpr {
  enum class Kind { kAnd, kOr, kLeaf };
  Kind kind = Kind::kAnd;
  std::vector<PredicateExpr> children;
  std::optional<LeafPredicate> leaf;

  static PredicateExpr make_leaf(LeafPredicate p);
  static PredicateExpr make_and(std::vector<PredicateExpr> children);
  static PredicateExpr make_or(std::vector<PredicateExpr> children);

  std::size_t leaf_count() const;
  friend bool operator==(const PredicateExpr&, const PredicateExpr&) = default;
};

enum class Direction { kIncrease, kDecrease };

struct AdviceAtom {
  enum class Kind { kAttribution, kInteraction };
  Kind kind = Kind::kAttribution;
  std::string a;
  std::string b;  // interaction only
  int cls = 0;
  Direction direction = Direction::kIncrease;
  friend bool operator==(const AdviceAtom&, const AdviceAtom&) = default;
};

struct VarDecl {
  std::string name;
  std::string literal;
  Span span;                    // location in the reference instance
  std::vector<Token> ref_tokens;  // copy of the reference tokens under `span`
  bool explicit_span = false;   // declared as "X = tokens i..j"

  friend bool operator==(const VarDecl& a, const VarDecl& b) {
    return a.name == b.name && a.literal == b.literal && a.span == b.span &&
           a.explicit_span == b.explicit_span;
  }
};

struct Rule {
  std::string id;
  std::string ref_instance;
  std::vector<VarDecl> vars;
  PredicateExpr body;
  std::vector<AdviceAtom> head;
  int noisy_label = 0;

  const VarDecl* find_var(std::string_view name) const;
  friend bool operator==(const Rule&, const Rule&) = default;
};

// Throws DataError when a variable is undeclared, a class is out of range or
// the body is malformed.
void check_rule(const Rule& rule, int class_count);

// ---- lexicon -----------------------------------------------------------------

// A predicate template. Args may reference the surface slots "{k}" (a number)
// and "{type}" (any single word).
struct LexEntry {
  std::vector<std::string> surface;  // case-folded words
  std::string template_name;
  std::vector<std::string> args;

  bool binary() const;
  friend bool operator==(const LexEntry&, const LexEntry&) = default;
};

class ExplLexicon {
 public:
  // Starts with the built-in canonical phrases the printer emits.
  ExplLexicon();

  // Throws DataError if the phrase is already mapped to a different template.
  void add(LexEntry entry);
  void merge(const ExplLexicon& other);

  const std::vector<LexEntry>& entries() const { return entries_; }
  // Indices of entries whose first word is `word`, longest surface first.
  const std::vector<std::size_t>& starting_with(const std::string& word) const;
  // Indices of entries whose first word is a slot.
  const std::vector<std::size_t>& slot_initial() const { return slot_initial_; }
  std::string nearest(std::string_view phrase) const;

 private:
  void reindex();

  std::vector<LexEntry> entries_;
  std::map<std::string, std::vector<std::size_t>> by_first_;
  std::vector<std::size_t> slot_initial_;
};

ExplLexicon load_expl_lexicon(const std::string& path);
ExplLexicon parse_expl_lexicon(std::string_view text, const std::string& source_name = "<memory>");

// ---- parsing -----------------------------------------------------------------

struct ExplanationBlock {
  std::string id;      // from "Rule: <id>", or rule<N> by position
  std::string ref_id;  // from "Reference: <id>"; empty when absent
  std::string text;
  std::size_t offset = 0;  // of `text` within the file
};

std::vector<ExplanationBlock> split_explanation_file(std::string_view text);

// Parses one explanation document against its reference instance.
// Offsets in thrown ParseErrors are relative to `text` plus `base_offset`.
Rule parse_explanation(std::string_view text, const ExplLexicon& lexicon,
                       const AnnotatedInstance& ref, const ClassList& classes,
                       std::string_view rule_id = "", std::size_t base_offset = 0);

// Canonical text that re-parses to a structurally identical rule.
std::string print_rule(const Rule& rule, const ClassList& classes);
std::string print_expr(const PredicateExpr& expr);
std::string describe_leaf(const LeafPredicate& leaf);

// ---- pre-validation ---------------------------------------------------------

struct Validation {
  bool accepted = false;
  std::string reason;
};

// Strictly executes the body on `ref`; discarded iff the outcome is false.
Validation validate_rule(const Rule& rule, const AnnotatedInstance& ref);

}  // namespace exref

#endif  // EXREF_EXPL_LANG_HPP_
