#ifndef EXREF_MATCHER_HPP_
#define EXREF_MATCHER_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exref/corpus.hpp"
#include "exref/expl_lang.hpp"

namespace exref {

enum class MatchMode { kStrict, kSoft };

struct MatchParams {
  MatchMode mode = MatchMode::kStrict;
  double threshold = 0.7;   // z*
  double cos_floor = 0.6;   // τ_cos
  int k = 3;                // candidate cap per variable
  int threads = 1;
};

struct ScoredSpan {
  Span span;
  double score = 0.0;
  friend bool operator==(const ScoredSpan&, const ScoredSpan&) = default;
};

// ---- logic -------------------------------------------------------------------

// Łukasiewicz connectives. Inputs outside [0,1] (or NaN) throw DataError.
double soft_and(double a, double b);
double soft_or(double a, double b);
double soft_and(std::span<const double> zs);  // empty -> 1
double soft_or(std::span<const double> zs);   // empty -> 0

// 1 when d <= d_ref, else max(1 - ((d - d_ref) / (|d_ref| + 1))^2 / 4, 0).
double interaction_soft(int d, int d_ref);

// ---- atomic units ------------------------------------------------------------

// Strict candidates for a reference phrase, best first: exact lemma matches,
// then spans sharing a semantic type (NER, polarity, identity, hateful), then
// same-POS tokens for a single untyped content word. At most `cap` entries.
std::vector<Span> strict_candidates(std::span<const Token> q_ref, const AnnotatedInstance& x,
                                    int cap);

std::optional<Span> individuality_strict(const AnnotatedInstance& ref, const Span& q_ref,
                                         const AnnotatedInstance& x);

// Strict candidates with score 1 plus the top-k spans by clipped cosine,
// filtered by `cos_floor`, sorted by (score desc, start, length).
std::vector<ScoredSpan> soft_candidates(std::span<const Token> q_ref, std::span<const double> q_vec,
                                        const AnnotatedInstance& x, const EmbeddingTable& table,
                                        int k, double cos_floor);

std::vector<ScoredSpan> individuality_soft(const AnnotatedInstance& ref, const Span& q_ref,
                                           const AnnotatedInstance& x, const EmbeddingTable& table,
                                           int k, double cos_floor);

bool characteristic_holds(const Characteristic& c, const AnnotatedInstance& x, const Span& s);
bool characteristic_holds(const Characteristic& c, std::span<const Token> tokens);

bool interaction_strict(const Relation& rel, const Span& a, const Span& b, const AnnotatedInstance& x);
double interaction_soft(const Relation& rel, const Span& a, const Span& b, const AnnotatedInstance& x);

// ---- records -----------------------------------------------------------------

struct AdviceTarget {
  AdviceAtom::Kind kind = AdviceAtom::Kind::kAttribution;
  Span p;
  Span q;  // interaction only
  int cls = 0;
  double target = 0.0;  // 0 or 1
  friend bool operator==(const AdviceTarget&, const AdviceTarget&) = default;
};

struct MatchRecord {
  std::string instance_id;
  std::string rule_id;
  int label = 0;
  double z = 1.0;
  std::map<std::string, Span> bindings;
  std::map<std::string, double> binding_scores;
  std::vector<AdviceTarget> advice;
  friend bool operator==(const MatchRecord&, const MatchRecord&) = default;
};

std::string record_to_json_line(const MatchRecord& record);
std::vector<MatchRecord> parse_match_records(std::string_view text,
                                             const std::string& source_name = "<memory>");
std::vector<MatchRecord> load_match_records(const std::string& path);
std::string serialize_records(const std::vector<MatchRecord>& records);

// ---- execution ---------------------------------------------------------------

// A rule with its variables' reference phrase vectors precomputed. The
// vectors are only needed for soft matching; `table` may be null otherwise.
// Borrows the rule: it must outlive the PreparedRule.
struct PreparedRule {
  const Rule* rule = nullptr;
  std::vector<std::vector<double>> var_vectors;  // parallel to rule->vars
};

PreparedRule prepare_rule(const Rule& rule, const AnnotatedInstance& ref, const EmbeddingTable* table);

std::optional<MatchRecord> execute_rule(const PreparedRule& rule, const AnnotatedInstance& x,
                                        MatchMode mode, const EmbeddingTable* table,
                                        const MatchParams& params);

// Records with z >= params.threshold for every (instance, rule), skipping each
// rule's own reference instance; sorted by (instance id, rule id).
std::vector<MatchRecord> generalize(const std::vector<PreparedRule>& rules, const Corpus& corpus,
                                    const EmbeddingTable* table, const MatchParams& params);

// `n` distinct instances not in `matched`, sampled uniformly without
// replacement, labeled `negative_class` with no advice and z = 1.
std::vector<MatchRecord> balance_negatives(const Corpus& corpus, const std::vector<MatchRecord>& matched,
                                           std::size_t n, int negative_class, std::uint64_t seed);

}  // namespace exref

#endif  // EXREF_MATCHER_HPP_
