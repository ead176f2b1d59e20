#include "exref/attribution.hpp"

#include <random>
#include <sstream>

#include "exref/error.hpp"
#include "exref/io_util.hpp"

namespace exref {

std::string_view method_name(AttrMethod m) { return m == AttrMethod::kIG ? "ig" : "soc"; }

AttrMethod parse_method(std::string_view name) {
  const std::string n = case_fold(name);
  if (n == "ig") return AttrMethod::kIG;
  if (n == "soc" || n == "occlusion") return AttrMethod::kSOC;
  throw DataError("unknown attribution method '" + std::string(name) + "' (expected ig or soc)");
}

ReplacementSet::ReplacementSet(std::vector<Vector> vectors) : vectors_(std::move(vectors)) {}

ReplacementSet ReplacementSet::from_corpus(const Corpus& corpus, const EmbeddingTable& table, std::size_t size,
                                           std::uint64_t seed) {
  std::vector<std::pair<const AnnotatedInstance*, int>> tokens;
  for (const auto& x : corpus) {
    for (int i = 0; i < x.size(); ++i) tokens.emplace_back(&x, i);
  }
  std::vector<Vector> out;
  if (tokens.empty()) return ReplacementSet(std::move(out));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, tokens.size() - 1);
  for (std::size_t k = 0; k < size; ++k) {
    const auto& [x, i] = tokens[pick(rng)];
    out.push_back(to_vector(table.row(x->id, i)));
  }
  return ReplacementSet(std::move(out));
}

ReplacementSet ReplacementSet::load(const std::string& path, int dim) {
  std::vector<Vector> out;
  std::size_t lineno = 0;
  for (const auto& line : split(read_file(path), '\n')) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream in(t);
    std::vector<double> v;
    double f = 0;
    while (in >> f) v.push_back(f);
    if (!in.eof()) throw FormatError(path, lineno, "expected whitespace-separated numbers");
    if (static_cast<int>(v.size()) != dim) {
      throw FormatError(path, lineno, "vector has " + std::to_string(v.size()) + " values, expected " +
                                          std::to_string(dim));
    }
    out.push_back(Eigen::Map<Vector>(v.data(), dim));
  }
  return ReplacementSet(std::move(out));
}

// ---- probes ------------------------------------------------------------------

double AttributionProbe::value(const ModelState& model) const {
  double v = 0.0;
  for (const auto& t : forward_terms) v += t.coef * forward(model, t.X)(cls);
  for (const auto& t : directional_terms) v += t.coef * directional_derivative(model, t.u, t.a, cls);
  return v;
}

void AttributionProbe::accumulate_grad(const ModelState& model, double scale, ModelState& grads) const {
  for (const auto& t : forward_terms) {
    Vector g_p = Vector::Zero(model.classes());
    g_p(cls) = scale * t.coef;
    accumulate_prob_grad(model, t.X, g_p, grads);
  }
  for (const auto& t : directional_terms) {
    accumulate_directional_grad(model, t.u, t.a, cls, scale * t.coef, grads);
  }
}

void AttributionProbe::append(const AttributionProbe& other, double sign) {
  for (const auto& t : other.forward_terms) forward_terms.push_back({t.X, sign * t.coef});
  for (const auto& t : other.directional_terms) directional_terms.push_back({t.u, t.a, sign * t.coef});
}

std::uint64_t attribution_stream(std::string_view instance_id, const Span& p) {
  std::uint64_t h = fnv1a(instance_id);
  h ^= (static_cast<std::uint64_t>(p.begin) << 32) ^ static_cast<std::uint64_t>(p.end) ^ 0x9E3779B97F4A7C15ULL;
  return h * 0xBF58476D1CE4E5B9ULL;
}

namespace {

void check_span(const Matrix& X, const Span& p) {
  if (p.empty() || p.begin < 0 || p.end > X.rows()) {
    throw DataError("phrase [" + std::to_string(p.begin) + "," + std::to_string(p.end) + ") out of range");
  }
}

AttributionProbe ig_probe(ModelMode mode, const Matrix& X, const Vector& baseline, const Span& p, int c,
                          int steps) {
  if (steps < 1) throw DataError("ig_steps must be at least 1");
  AttributionProbe probe;
  probe.cls = c;
  const double n = static_cast<double>(X.rows());
  const double w = 1.0 / steps;
  if (mode == ModelMode::kMlp) {
    const Vector u = X.colwise().mean().transpose();
    Vector a = Vector::Zero(X.cols());
    for (int i = p.begin; i < p.end; ++i) a += X.row(i).transpose() - baseline;
    a /= n;
    for (int s = 1; s <= steps; ++s) {
      const double alpha = (s - 0.5) / steps;
      probe.directional_terms.push_back({baseline + alpha * (u - baseline), a, w});
    }
    return probe;
  }
  for (int i = p.begin; i < p.end; ++i) {
    const Vector d = X.row(i).transpose() - baseline;
    for (int s = 1; s <= steps; ++s) {
      const double alpha = (s - 0.5) / steps;
      probe.directional_terms.push_back({baseline + alpha * d, d / n, w});
    }
  }
  return probe;
}

// SOC on X where `fixed` rows are excluded from resampling.
AttributionProbe soc_probe(const Matrix& X, const Vector& baseline, const Span& p, int c,
                           const AttributionConfig& cfg, const ReplacementSet* replacements,
                           std::uint64_t stream, const Span* fixed) {
  AttributionProbe probe;
  probe.cls = c;
  const Span ps[] = {p};
  if (cfg.delta <= 0) {
    probe.forward_terms.push_back({X, 1.0});
    probe.forward_terms.push_back({masked(X, ps, baseline), -1.0});
    return probe;
  }
  if (replacements == nullptr || replacements->empty()) {
    throw DataError("SOC with delta > 0 needs a non-empty replacement set");
  }
  if (cfg.n_samples < 1) throw DataError("n_samples must be at least 1");
  std::vector<int> neighbours;
  const int lo = std::max(0, p.begin - cfg.delta);
  const int hi = std::min(static_cast<int>(X.rows()), p.end + cfg.delta);
  for (int i = lo; i < hi; ++i) {
    if (p.contains(i) || (fixed != nullptr && fixed->contains(i))) continue;
    neighbours.push_back(i);
  }
  std::mt19937_64 rng(cfg.seed ^ stream);
  std::uniform_int_distribution<std::size_t> pick(0, replacements->size() - 1);
  const double w = 1.0 / cfg.n_samples;
  for (int s = 0; s < cfg.n_samples; ++s) {
    Matrix Xs = X;
    for (int i : neighbours) Xs.row(i) = replacements->at(pick(rng)).transpose();
    probe.forward_terms.push_back({Xs, w});
    probe.forward_terms.push_back({masked(Xs, ps, baseline), -w});
  }
  return probe;
}

}  // namespace

AttributionProbe attribution_probe(ModelMode mode, const Matrix& X, const Vector& baseline, const Span& p, int c,
                                   const AttributionConfig& cfg, const ReplacementSet* replacements,
                                   std::uint64_t stream) {
  check_span(X, p);
  if (cfg.method == AttrMethod::kIG) return ig_probe(mode, X, baseline, p, c, cfg.ig_steps);
  return soc_probe(X, baseline, p, c, cfg, replacements, stream, nullptr);
}

AttributionProbe interaction_probe(ModelMode mode, const Matrix& X, const Vector& baseline, const Span& p,
                                   const Span& q, int c, const AttributionConfig& cfg,
                                   const ReplacementSet* replacements, std::uint64_t stream) {
  check_span(X, p);
  check_span(X, q);
  if (p.overlaps(q)) throw DataError("interaction needs disjoint phrases");
  const Span qs[] = {q};
  const Matrix Xq = masked(X, qs, baseline);
  AttributionProbe probe;
  probe.cls = c;
  if (cfg.method == AttrMethod::kIG) {
    probe.append(ig_probe(mode, X, baseline, p, c, cfg.ig_steps), 1.0);
    probe.append(ig_probe(mode, Xq, baseline, p, c, cfg.ig_steps), -1.0);
  } else {
    // Both halves share the sample stream and keep q out of the resampled context.
    probe.append(soc_probe(X, baseline, p, c, cfg, replacements, stream, &q), 1.0);
    probe.append(soc_probe(Xq, baseline, p, c, cfg, replacements, stream, &q), -1.0);
  }
  return probe;
}

std::vector<double> integrated_gradients(const ModelState& model, const Matrix& X, const Vector& baseline, int c,
                                         int steps) {
  std::vector<double> out;
  for (int i = 0; i < X.rows(); ++i) out.push_back(integrated_gradients_phrase(model, X, baseline, {i, i + 1}, c, steps));
  return out;
}

double integrated_gradients_phrase(const ModelState& model, const Matrix& X, const Vector& baseline,
                                   const Span& p, int c, int steps) {
  check_span(X, p);
  return ig_probe(model.mode, X, baseline, p, c, steps).value(model);
}

double soc_importance(const ModelState& model, const Matrix& X, const Vector& baseline, const Span& p, int c,
                      const AttributionConfig& cfg, const ReplacementSet* replacements, std::uint64_t stream) {
  check_span(X, p);
  return soc_probe(X, baseline, p, c, cfg, replacements, stream, nullptr).value(model);
}

Vector soc_importance_all(const ModelState& model, const Matrix& X, const Vector& baseline, const Span& p,
                          const AttributionConfig& cfg, const ReplacementSet* replacements,
                          std::uint64_t stream) {
  check_span(X, p);
  const auto probe = soc_probe(X, baseline, p, 0, cfg, replacements, stream, nullptr);
  Vector out = Vector::Zero(model.classes());
  for (const auto& t : probe.forward_terms) out += t.coef * forward(model, t.X);
  return out;
}

double attribution_score(const ModelState& model, const Matrix& X, const Vector& baseline, const Span& p, int c,
                         const AttributionConfig& cfg, const ReplacementSet* replacements, std::uint64_t stream) {
  return attribution_probe(model.mode, X, baseline, p, c, cfg, replacements, stream).value(model);
}

double interaction_score(const ModelState& model, const Matrix& X, const Vector& baseline, const Span& p,
                         const Span& q, int c, const AttributionConfig& cfg, const ReplacementSet* replacements,
                         std::uint64_t stream) {
  return interaction_probe(model.mode, X, baseline, p, q, c, cfg, replacements, stream).value(model);
}

std::vector<double> token_attributions(const ModelState& model, const Matrix& X, const Vector& baseline, int c,
                                       const AttributionConfig& cfg, const ReplacementSet* replacements,
                                       std::string_view instance_id) {
  std::vector<double> out;
  for (int i = 0; i < X.rows(); ++i) {
    const Span p{i, i + 1};
    out.push_back(attribution_score(model, X, baseline, p, c, cfg, replacements, attribution_stream(instance_id, p)));
  }
  return out;
}

}  // namespace exref
