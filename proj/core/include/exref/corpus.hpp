#ifndef EXREF_CORPUS_HPP_
#define EXREF_CORPUS_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace exref {

// Half-open token range [begin, end).
struct Span {
  int begin = 0;
  int end = 0;

  int length() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(int i) const { return i >= begin && i < end; }
  bool overlaps(const Span& o) const { return begin < o.end && o.begin < end; }

  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

enum TokenFlag : std::uint8_t {
  kFlagPositive = 1 << 0,
  kFlagNegative = 1 << 1,
  kFlagIdentity = 1 << 2,
  kFlagHateful = 1 << 3,
};

enum class Polarity { kNeutral, kPositive, kNegative };

std::string_view polarity_name(Polarity p);

struct Token {
  std::string text;
  std::string lemma;
  std::string pos;  // coarse tag, e.g. NOUN
  std::string ner;  // entity type, empty when none
  std::uint8_t flags = 0;

  bool has(TokenFlag f) const { return (flags & f) != 0; }
  Polarity polarity() const;
};

struct DepEdge {
  int head = -1;  // -1 is the root sentinel
  int dependent = 0;
  std::string label;

  friend bool operator==(const DepEdge&, const DepEdge&) = default;
};

struct AnnotatedInstance {
  std::string id;
  std::vector<Token> tokens;
  std::vector<DepEdge> deps;
  std::optional<int> gold_label;

  int size() const { return static_cast<int>(tokens.size()); }
  Span full_span() const { return {0, size()}; }
  // Head of `token`, or -1 when the token is a root or unattached.
  int head_of(int token) const;
  // Undirected distance in the dependency graph; -1 when disconnected.
  int tree_distance(int from, int to) const;
  std::string span_text(const Span& s) const;
};

// Lowercases ASCII letters; other bytes pass through.
std::string case_fold(std::string_view s);
std::vector<std::string> split_words(std::string_view s);

struct LexiconSet {
  std::unordered_map<std::string, Polarity> sentiment;
  // Phrases are stored as case-folded token sequences.
  std::set<std::vector<std::string>> identity;
  std::set<std::vector<std::string>> hateful;

  Polarity lookup(std::string_view word) const;
};

LexiconSet load_lexicons(const std::string& sentiment_path,
                         const std::string& identity_path,
                         const std::string& hateful_path);

// Recomputes every token's flags from the lexicons. Sentiment is looked up
// on the token text, then on the lemma; identity and hateful flags mark
// every token covered by an occurrence of a listed phrase.
void apply_lexicons(AnnotatedInstance& instance, const LexiconSet& lexicons);

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<AnnotatedInstance> instances);

  const std::vector<AnnotatedInstance>& instances() const { return instances_; }
  std::size_t size() const { return instances_.size(); }
  const AnnotatedInstance* find(std::string_view id) const;
  const AnnotatedInstance& at(std::string_view id) const;

  auto begin() const { return instances_.begin(); }
  auto end() const { return instances_.end(); }

  void apply_lexicons(const LexiconSet& lexicons);

 private:
  std::vector<AnnotatedInstance> instances_;
  std::unordered_map<std::string, std::size_t> index_;
};

Corpus load_corpus(const std::string& path);
Corpus parse_corpus(std::string_view text, const std::string& source_name = "<memory>");
void validate_instance(const AnnotatedInstance& instance);
std::string instance_to_json_line(const AnnotatedInstance& instance);
// Canonical dump of every field including flags.
std::string serialize(const Corpus& corpus);

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(int dim, std::vector<float> baseline);

  int dim() const { return dim_; }
  std::span<const float> baseline() const { return baseline_; }
  std::vector<double> baseline_d() const;

  bool has_instance(std::string_view id) const;
  // Row for (instance, token). Throws DataError if missing.
  std::span<const float> row(std::string_view id, int token) const;
  bool has_row(std::string_view id, int token) const;

  void set_row(const std::string& id, int token, std::vector<float> values);
  std::size_t row_count() const;
  std::size_t warnings() const { return warnings_; }

  // Checks the table against the tokens of `corpora`. Missing rows are an
  // error unless `allow_missing`, in which case the baseline is substituted
  // and the warning counter incremented. Rows for unknown instances or
  // out-of-range tokens are errors. Returns the number of substitutions.
  std::size_t bind(const std::vector<const Corpus*>& corpora, bool allow_missing);

  void write(std::ostream& out) const;

 private:
  int dim_ = 0;
  std::vector<float> baseline_;
  std::map<std::string, std::vector<std::vector<float>>, std::less<>> rows_;
  std::size_t warnings_ = 0;
};

EmbeddingTable load_embeddings(const std::string& path);
EmbeddingTable parse_embeddings(std::string_view text, const std::string& source_name = "<memory>");

// Mean of the token vectors over `span`.
std::vector<double> phrase_vector(const AnnotatedInstance& instance, const Span& span,
                                  const EmbeddingTable& table);

double cosine(std::span<const double> a, std::span<const double> b);

// Case-folded word -> mean vector over every occurrence in the corpora.
// Words absent from the index get a deterministic pseudo-random vector.
class WordVectors {
 public:
  WordVectors(const std::vector<const Corpus*>& corpora, const EmbeddingTable& table,
              std::uint64_t seed);

  std::vector<float> lookup(std::string_view word) const;
  bool contains(std::string_view word) const;
  int dim() const { return dim_; }

 private:
  int dim_;
  std::uint64_t seed_;
  std::unordered_map<std::string, std::vector<float>> vectors_;
};

}  // namespace exref

#endif  // EXREF_CORPUS_HPP_
