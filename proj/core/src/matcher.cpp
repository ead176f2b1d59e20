#include "exref/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <random>
#include <set>
#include <thread>

#include "exref/error.hpp"
#include "exref/io_util.hpp"

namespace exref {

// ---- logic -------------------------------------------------------------------

namespace {

void check_unit(double z) {
  if (!(z >= 0.0 && z <= 1.0)) throw DataError("soft logic input outside [0,1]: " + format_double(z));
}

}  // namespace

double soft_and(double a, double b) {
  check_unit(a);
  check_unit(b);
  return std::max(a + b - 1.0, 0.0);
}

double soft_or(double a, double b) {
  check_unit(a);
  check_unit(b);
  return std::min(a + b, 1.0);
}

double soft_and(std::span<const double> zs) {
  double acc = 1.0;
  for (double z : zs) acc = soft_and(acc, z);
  return acc;
}

double soft_or(std::span<const double> zs) {
  double acc = 0.0;
  for (double z : zs) acc = soft_or(acc, z);
  return acc;
}

double interaction_soft(int d, int d_ref) {
  if (d < 0 || d_ref < 0) throw DataError("distances must be non-negative");
  if (d <= d_ref) return 1.0;
  const double r = static_cast<double>(d - d_ref) / (std::abs(d_ref) + 1);
  return std::max(1.0 - 0.25 * r * r, 0.0);
}

// ---- individuality -------------------------------------------------------------

namespace {

bool is_content_pos(const std::string& pos) {
  return pos == "NOUN" || pos == "VERB" || pos == "ADJ" || pos == "ADV" || pos == "PROPN";
}

std::string lemma_key(const Token& t) { return case_fold(t.lemma.empty() ? t.text : t.lemma); }

// Maximal runs of tokens satisfying `pred`.
template <typename Pred>
void runs(const AnnotatedInstance& x, Pred pred, std::vector<Span>& out) {
  int i = 0;
  while (i < x.size()) {
    if (!pred(x.tokens[i])) {
      ++i;
      continue;
    }
    int j = i;
    while (j < x.size() && pred(x.tokens[j])) ++j;
    out.push_back({i, j});
    i = j;
  }
}

std::string shared_ner(std::span<const Token> q) {
  if (q.empty() || q[0].ner.empty()) return {};
  for (const auto& t : q) {
    if (t.ner != q[0].ner) return {};
  }
  return q[0].ner;
}

Polarity span_polarity(std::span<const Token> q) {
  for (const auto& t : q) {
    if (t.polarity() != Polarity::kNeutral) return t.polarity();
  }
  return Polarity::kNeutral;
}

bool any_flag(std::span<const Token> q, TokenFlag f) {
  return std::any_of(q.begin(), q.end(), [f](const Token& t) { return t.has(f); });
}

void push_unique(std::vector<Span>& out, const Span& s) {
  if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
}

}  // namespace

std::vector<Span> strict_candidates(std::span<const Token> q, const AnnotatedInstance& x, int cap) {
  std::vector<Span> out;
  if (q.empty() || cap <= 0) return out;
  const int len = static_cast<int>(q.size());

  for (int i = 0; i + len <= x.size(); ++i) {
    bool ok = true;
    for (int j = 0; j < len && ok; ++j) ok = lemma_key(x.tokens[i + j]) == lemma_key(q[j]);
    if (ok) push_unique(out, {i, i + len});
  }

  std::vector<Span> typed;
  const std::string ner = shared_ner(q);
  if (!ner.empty()) runs(x, [&](const Token& t) { return t.ner == ner; }, typed);
  const Polarity pol = span_polarity(q);
  if (pol != Polarity::kNeutral) {
    for (int i = 0; i < x.size(); ++i) {
      if (x.tokens[i].polarity() == pol) typed.push_back({i, i + 1});
    }
  }
  const bool identity = any_flag(q, kFlagIdentity);
  const bool hateful = any_flag(q, kFlagHateful);
  if (identity) runs(x, [](const Token& t) { return t.has(kFlagIdentity); }, typed);
  if (hateful) runs(x, [](const Token& t) { return t.has(kFlagHateful); }, typed);
  for (const auto& s : typed) push_unique(out, s);

  const bool untyped = ner.empty() && pol == Polarity::kNeutral && !identity && !hateful;
  if (untyped && len == 1 && is_content_pos(q[0].pos)) {
    for (int i = 0; i < x.size(); ++i) {
      if (x.tokens[i].pos == q[0].pos) push_unique(out, {i, i + 1});
    }
  }
  if (static_cast<int>(out.size()) > cap) out.resize(cap);
  return out;
}

std::optional<Span> individuality_strict(const AnnotatedInstance& ref, const Span& q_ref,
                                         const AnnotatedInstance& x) {
  if (q_ref.empty() || q_ref.begin < 0 || q_ref.end > ref.size()) throw DataError("invalid reference span");
  const std::span<const Token> q(ref.tokens.data() + q_ref.begin, q_ref.length());
  auto c = strict_candidates(q, x, 1);
  if (c.empty()) return std::nullopt;
  return c.front();
}

std::vector<ScoredSpan> soft_candidates(std::span<const Token> q, std::span<const double> q_vec,
                                        const AnnotatedInstance& x, const EmbeddingTable& table, int k,
                                        double cos_floor) {
  std::vector<ScoredSpan> out;
  for (const auto& s : strict_candidates(q, x, k)) out.push_back({s, 1.0});

  // Only strict evidence earns a full score, so soft matching at z* = 1
  // reproduces strict matching exactly.
  const double below_one = std::nextafter(1.0, 0.0);
  std::vector<ScoredSpan> cos;
  const int max_len = std::min<int>(static_cast<int>(q.size()) + 1, x.size());
  for (int len = 1; len <= max_len; ++len) {
    for (int i = 0; i + len <= x.size(); ++i) {
      const Span s{i, i + len};
      if (std::any_of(out.begin(), out.end(), [&](const ScoredSpan& o) { return o.span == s; })) continue;
      const auto v = phrase_vector(x, s, table);
      const double score = std::min(std::max(cosine(v, q_vec), 0.0), below_one);
      if (score >= cos_floor && score > 0.0) cos.push_back({s, score});
    }
  }
  auto order = [](const ScoredSpan& a, const ScoredSpan& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.span.begin != b.span.begin) return a.span.begin < b.span.begin;
    return a.span.length() < b.span.length();
  };
  std::sort(cos.begin(), cos.end(), order);
  if (static_cast<int>(cos.size()) > k) cos.resize(std::max(k, 0));
  out.insert(out.end(), cos.begin(), cos.end());
  std::stable_sort(out.begin(), out.end(), order);
  return out;
}

std::vector<ScoredSpan> individuality_soft(const AnnotatedInstance& ref, const Span& q_ref,
                                           const AnnotatedInstance& x, const EmbeddingTable& table, int k,
                                           double cos_floor) {
  const auto q_vec = phrase_vector(ref, q_ref, table);
  const std::span<const Token> q(ref.tokens.data() + q_ref.begin, q_ref.length());
  return soft_candidates(q, q_vec, x, table, k, cos_floor);
}

bool characteristic_holds(const Characteristic& c, std::span<const Token> tokens) {
  if (tokens.empty()) return false;
  switch (c.kind) {
    case CharKind::kNer:
      return std::all_of(tokens.begin(), tokens.end(), [&](const Token& t) { return t.ner == c.value; });
    case CharKind::kPos:
      return std::all_of(tokens.begin(), tokens.end(), [&](const Token& t) { return t.pos == c.value; });
    case CharKind::kSentiment: {
      const Polarity want = c.value == "positive" ? Polarity::kPositive : Polarity::kNegative;
      return std::any_of(tokens.begin(), tokens.end(), [&](const Token& t) { return t.polarity() == want; });
    }
    case CharKind::kIdentity:
      return any_flag(tokens, kFlagIdentity);
    case CharKind::kHateful:
      return any_flag(tokens, kFlagHateful);
  }
  return false;
}

bool characteristic_holds(const Characteristic& c, const AnnotatedInstance& x, const Span& s) {
  if (s.empty() || s.begin < 0 || s.end > x.size()) return false;
  return characteristic_holds(c, std::span<const Token>(x.tokens.data() + s.begin, s.length()));
}

// ---- interaction ---------------------------------------------------------------

namespace {

bool label_in(const std::string& label, std::initializer_list<std::string_view> set) {
  const std::string base = case_fold(label.substr(0, label.find(':')));
  return std::find(set.begin(), set.end(), base) != set.end();
}

bool is_modifier_label(const std::string& label) {
  return label_in(label, {"amod", "advmod", "nmod", "npadvmod", "nummod", "compound", "acl", "relcl",
                          "appos", "poss", "obl", "advcl"});
}

bool is_subject_label(const std::string& label) {
  return label_in(label, {"nsubj", "nsubjpass", "csubj", "csubjpass"});
}

bool has_edge(const AnnotatedInstance& x, const Span& dependent, const Span& head,
              bool (*label_ok)(const std::string&)) {
  for (const auto& e : x.deps) {
    if (e.head >= 0 && head.contains(e.head) && dependent.contains(e.dependent) && label_ok(e.label)) {
      return true;
    }
  }
  return false;
}

// Shortest undirected path between any token of `a` and any token of `b`.
int span_tree_distance(const AnnotatedInstance& x, const Span& a, const Span& b) {
  if (a.overlaps(b)) return 0;
  const int n = x.size();
  std::vector<std::vector<int>> adj(n);
  for (const auto& e : x.deps) {
    if (e.head < 0) continue;
    adj[e.head].push_back(e.dependent);
    adj[e.dependent].push_back(e.head);
  }
  std::vector<int> dist(n, -1);
  std::deque<int> queue;
  for (int i = a.begin; i < a.end; ++i) {
    dist[i] = 0;
    queue.push_back(i);
  }
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    if (b.contains(cur)) return dist[cur];
    for (int next : adj[cur]) {
      if (dist[next] >= 0) continue;
      dist[next] = dist[cur] + 1;
      queue.push_back(next);
    }
  }
  return -1;
}

// Words strictly between `first` and `second`, or -1 when not in that order.
int gap(const Span& first, const Span& second) {
  if (first.end > second.begin) return -1;
  return second.begin - first.end;
}

}  // namespace

bool interaction_strict(const Relation& rel, const Span& a, const Span& b, const AnnotatedInstance& x) {
  switch (rel.kind) {
    case RelationKind::kImmediatelyBefore:
      return gap(a, b) == 0;
    case RelationKind::kWithinBefore: {
      const int g = gap(a, b);
      return g >= 0 && g + 1 <= rel.k;
    }
    case RelationKind::kWithinAfter: {
      const int g = gap(b, a);
      return g >= 0 && g + 1 <= rel.k;
    }
    case RelationKind::kModifies:
      return has_edge(x, a, b, is_modifier_label);
    case RelationKind::kSubjectOf:
      return has_edge(x, a, b, is_subject_label);
    case RelationKind::kDependencyWithin: {
      const int d = span_tree_distance(x, a, b);
      return d >= 0 && d <= rel.k;
    }
  }
  return false;
}

double interaction_soft(const Relation& rel, const Span& a, const Span& b, const AnnotatedInstance& x) {
  switch (rel.kind) {
    case RelationKind::kImmediatelyBefore: {
      const int g = gap(a, b);
      return g < 0 ? 0.0 : interaction_soft(g, 0);
    }
    case RelationKind::kWithinBefore: {
      const int g = gap(a, b);
      return g < 0 ? 0.0 : interaction_soft(g, std::max(rel.k - 1, 0));
    }
    case RelationKind::kWithinAfter: {
      const int g = gap(b, a);
      return g < 0 ? 0.0 : interaction_soft(g, std::max(rel.k - 1, 0));
    }
    case RelationKind::kModifies:
    case RelationKind::kSubjectOf: {
      if (interaction_strict(rel, a, b, x)) return 1.0;
      const int d = span_tree_distance(x, a, b);
      return d < 0 ? 0.0 : interaction_soft(std::max(d, 2), 1);
    }
    case RelationKind::kDependencyWithin: {
      const int d = span_tree_distance(x, a, b);
      return d < 0 ? 0.0 : interaction_soft(d, rel.k);
    }
  }
  return 0.0;
}

// ---- execution ---------------------------------------------------------------

PreparedRule prepare_rule(const Rule& rule, const AnnotatedInstance& ref, const EmbeddingTable* table) {
  if (ref.id != rule.ref_instance) {
    throw DataError("rule '" + rule.id + "' references '" + rule.ref_instance + "', got '" + ref.id + "'");
  }
  PreparedRule p;
  p.rule = &rule;
  for (const auto& v : rule.vars) {
    if (v.span.empty() || v.span.end > ref.size()) {
      throw DataError("rule '" + rule.id + "': span of " + v.name + " outside reference instance");
    }
    p.var_vectors.push_back(table != nullptr ? phrase_vector(ref, v.span, *table) : std::vector<double>{});
  }
  return p;
}

namespace {

struct Candidate {
  Span span;
  double score = 1.0;
};

// On the reference instance the declared span is tried first, provided the
// instance still carries the declared words there.
bool declared_span_present(const VarDecl& v, const AnnotatedInstance& x, const Rule& rule) {
  if (x.id != rule.ref_instance || v.span.empty() || v.span.end > x.size()) return false;
  if (static_cast<int>(v.ref_tokens.size()) != v.span.length()) return false;
  for (int i = 0; i < v.span.length(); ++i) {
    if (x.tokens[v.span.begin + i].text != v.ref_tokens[i].text) return false;
  }
  return true;
}

// How each variable's Existence leaves ask to be executed in soft mode.
void soft_preferences(const PredicateExpr& e, std::map<std::string, bool>& strict_only) {
  if (e.kind != PredicateExpr::Kind::kLeaf) {
    for (const auto& c : e.children) soft_preferences(c, strict_only);
    return;
  }
  if (const auto* ex = std::get_if<Existence>(&e.leaf->pred)) {
    if (e.leaf->soft.has_value() && !*e.leaf->soft) strict_only.emplace(ex->var, true);
  }
}

class BodyEvaluator {
 public:
  BodyEvaluator(const Rule& rule, const AnnotatedInstance& x, MatchMode mode,
                const std::vector<std::optional<Candidate>>& binding)
      : rule_(rule), x_(x), mode_(mode), binding_(binding) {}

  double eval(const PredicateExpr& e) const {
    switch (e.kind) {
      case PredicateExpr::Kind::kLeaf:
        return leaf(*e.leaf);
      case PredicateExpr::Kind::kAnd: {
        double acc = 1.0;
        for (const auto& c : e.children) {
          acc = soft_and(acc, eval(c));
          if (acc == 0.0) return 0.0;
        }
        return acc;
      }
      case PredicateExpr::Kind::kOr: {
        double acc = 0.0;
        for (const auto& c : e.children) {
          acc = soft_or(acc, eval(c));
          if (acc == 1.0) return 1.0;
        }
        return acc;
      }
    }
    return 0.0;
  }

 private:
  const std::optional<Candidate>& bound(const std::string& var) const {
    for (std::size_t i = 0; i < rule_.vars.size(); ++i) {
      if (rule_.vars[i].name == var) return binding_[i];
    }
    throw DataError("undeclared variable '" + var + "'");
  }

  const VarDecl& decl(const std::string& var) const { return *rule_.find_var(var); }

  double leaf(const LeafPredicate& lp) const {
    const bool soft = mode_ == MatchMode::kSoft;
    if (const auto* ex = std::get_if<Existence>(&lp.pred)) {
      const auto& b = bound(ex->var);
      if (!b) return 0.0;
      if (ex->literal == decl(ex->var).literal) return soft ? b->score : 1.0;
      // A secondary literal on an already-bound variable is compared verbatim.
      const auto words = split_words(case_fold(ex->literal));
      if (static_cast<int>(words.size()) != b->span.length()) return 0.0;
      for (int i = 0; i < b->span.length(); ++i) {
        const Token& t = x_.tokens[b->span.begin + i];
        if (case_fold(t.text) != words[i] && lemma_key(t) != words[i]) return 0.0;
      }
      return 1.0;
    }
    if (const auto* ch = std::get_if<Characteristic>(&lp.pred)) {
      const auto& b = bound(ch->var);
      if (!b) return 0.0;
      if (characteristic_holds(*ch, x_, b->span)) return 1.0;
      if (soft && lp.soft.value_or(false) && characteristic_holds(*ch, decl(ch->var).ref_tokens)) {
        return b->score;
      }
      return 0.0;
    }
    const auto& rel = std::get<Relation>(lp.pred);
    const auto& a = bound(rel.a);
    const auto& b = bound(rel.b);
    if (!a || !b || a->span.overlaps(b->span)) return 0.0;
    if (!soft || !lp.soft.value_or(true)) return interaction_strict(rel, a->span, b->span, x_) ? 1.0 : 0.0;
    return interaction_soft(rel, a->span, b->span, x_);
  }

  const Rule& rule_;
  const AnnotatedInstance& x_;
  MatchMode mode_;
  const std::vector<std::optional<Candidate>>& binding_;
};

}  // namespace

std::optional<MatchRecord> execute_rule(const PreparedRule& prepared, const AnnotatedInstance& x,
                                        MatchMode mode, const EmbeddingTable* table,
                                        const MatchParams& params) {
  const Rule& rule = *prepared.rule;
  std::map<std::string, bool> strict_only;
  soft_preferences(rule.body, strict_only);

  std::vector<std::vector<Candidate>> lists;
  for (std::size_t i = 0; i < rule.vars.size(); ++i) {
    const VarDecl& v = rule.vars[i];
    std::vector<Candidate> list;
    if (declared_span_present(v, x, rule)) list.push_back({v.span, 1.0});
    if (mode == MatchMode::kSoft && !strict_only.count(v.name)) {
      if (table == nullptr) throw DataError("soft matching needs an embedding table");
      for (const auto& s : soft_candidates(v.ref_tokens, prepared.var_vectors.at(i), x, *table, params.k,
                                           params.cos_floor)) {
        list.push_back({s.span, s.score});
      }
    } else {
      for (const auto& s : strict_candidates(v.ref_tokens, x, params.k)) list.push_back({s, 1.0});
    }
    // Keep the first occurrence of each span, then enumerate by position.
    std::vector<Candidate> unique;
    for (const auto& c : list) {
      if (std::none_of(unique.begin(), unique.end(), [&](const Candidate& u) { return u.span == c.span; })) {
        unique.push_back(c);
      }
    }
    if (!declared_span_present(v, x, rule)) {
      std::stable_sort(unique.begin(), unique.end(), [](const Candidate& a, const Candidate& b) {
        if (a.span.begin != b.span.begin) return a.span.begin < b.span.begin;
        return a.span.length() < b.span.length();
      });
    }
    lists.push_back(std::move(unique));
  }

  std::vector<std::optional<Candidate>> current(rule.vars.size());
  std::vector<std::optional<Candidate>> best_binding;
  double best = -1.0;
  bool done = false;

  std::function<void(std::size_t)> search = [&](std::size_t i) {
    if (done) return;
    if (i == lists.size()) {
      const double z = BodyEvaluator(rule, x, mode, current).eval(rule.body);
      if (z > best) {
        best = z;
        best_binding = current;
        if (z >= 1.0) done = true;
      }
      return;
    }
    if (lists[i].empty()) {
      current[i].reset();
      search(i + 1);
      return;
    }
    for (const auto& c : lists[i]) {
      bool clash = false;
      for (std::size_t j = 0; j < i && !clash; ++j) clash = current[j] && current[j]->span.overlaps(c.span);
      if (clash) continue;
      current[i] = c;
      search(i + 1);
      if (done) return;
    }
    current[i].reset();
  };
  search(0);

  const bool matched = mode == MatchMode::kStrict ? best >= 1.0 : best > 0.0;
  if (!matched) return std::nullopt;

  MatchRecord rec;
  rec.instance_id = x.id;
  rec.rule_id = rule.id;
  rec.label = rule.noisy_label;
  rec.z = mode == MatchMode::kStrict ? 1.0 : std::clamp(best, 0.0, 1.0);
  for (std::size_t i = 0; i < rule.vars.size(); ++i) {
    if (!best_binding[i]) continue;
    rec.bindings[rule.vars[i].name] = best_binding[i]->span;
    rec.binding_scores[rule.vars[i].name] = mode == MatchMode::kStrict ? 1.0 : best_binding[i]->score;
  }
  for (const auto& atom : rule.head) {
    AdviceTarget t;
    t.kind = atom.kind;
    t.cls = atom.cls;
    t.target = atom.direction == Direction::kIncrease ? 1.0 : 0.0;
    auto a = rec.bindings.find(atom.a);
    if (a == rec.bindings.end()) continue;
    t.p = a->second;
    if (atom.kind == AdviceAtom::Kind::kInteraction) {
      auto b = rec.bindings.find(atom.b);
      if (b == rec.bindings.end()) continue;
      t.q = b->second;
    }
    rec.advice.push_back(t);
  }
  return rec;
}

Validation validate_rule(const Rule& rule, const AnnotatedInstance& ref) {
  PreparedRule p;
  p.rule = &rule;
  p.var_vectors.resize(rule.vars.size());
  if (execute_rule(p, ref, MatchMode::kStrict, nullptr, MatchParams{})) return {true, ""};
  for (const auto& v : rule.vars) {
    if (declared_span_present(v, ref, rule)) continue;
    if (strict_candidates(v.ref_tokens, ref, 1).empty()) return {false, "Existence(" + v.name + ") failed"};
  }
  return {false, "body is false on the reference instance"};
}

// ---- corpus-level ------------------------------------------------------------

std::vector<MatchRecord> generalize(const std::vector<PreparedRule>& rules, const Corpus& corpus,
                                    const EmbeddingTable* table, const MatchParams& params) {
  const auto& xs = corpus.instances();
  std::vector<std::vector<MatchRecord>> per_instance(xs.size());
  auto work = [&](std::size_t from, std::size_t step) {
    for (std::size_t i = from; i < xs.size(); i += step) {
      for (const auto& r : rules) {
        if (xs[i].id == r.rule->ref_instance) continue;
        auto rec = execute_rule(r, xs[i], params.mode, table, params);
        if (rec && rec->z >= params.threshold) per_instance[i].push_back(std::move(*rec));
      }
    }
  };
  const std::size_t threads = static_cast<std::size_t>(std::max(params.threads, 1));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  std::vector<MatchRecord> out;
  for (auto& v : per_instance) {
    for (auto& r : v) out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const MatchRecord& a, const MatchRecord& b) {
    if (a.instance_id != b.instance_id) return a.instance_id < b.instance_id;
    return a.rule_id < b.rule_id;
  });
  return out;
}

std::vector<MatchRecord> balance_negatives(const Corpus& corpus, const std::vector<MatchRecord>& matched,
                                           std::size_t n, int negative_class, std::uint64_t seed) {
  std::set<std::string> taken;
  for (const auto& r : matched) taken.insert(r.instance_id);
  std::vector<const AnnotatedInstance*> pool;
  for (const auto& x : corpus) {
    if (!taken.count(x.id)) pool.push_back(&x);
  }
  if (n > pool.size()) {
    throw DataError("requested " + std::to_string(n) + " negatives but only " + std::to_string(pool.size()) +
                    " unmatched instances exist");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n);
  std::sort(pool.begin(), pool.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<MatchRecord> out;
  for (const auto* x : pool) {
    MatchRecord r;
    r.instance_id = x->id;
    r.rule_id = "negative-sampling";
    r.label = negative_class;
    r.z = 1.0;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace exref
