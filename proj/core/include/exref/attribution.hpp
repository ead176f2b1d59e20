#ifndef EXREF_ATTRIBUTION_HPP_
#define EXREF_ATTRIBUTION_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "exref/model.hpp"

namespace exref {

enum class AttrMethod { kIG, kSOC };

std::string_view method_name(AttrMethod m);
AttrMethod parse_method(std::string_view name);

struct AttributionConfig {
  AttrMethod method = AttrMethod::kSOC;
  int ig_steps = 64;
  int delta = 0;       // SOC neighbourhood radius in tokens; 0 is plain occlusion
  int n_samples = 8;   // SOC draws per estimate (ignored when delta = 0)
  std::uint64_t seed = 0;
};

// Vectors that SOC draws context replacements from, uniformly.
class ReplacementSet {
 public:
  ReplacementSet() = default;
  explicit ReplacementSet(std::vector<Vector> vectors);

  // Unigram draws: `size` token vectors sampled uniformly from all tokens.
  static ReplacementSet from_corpus(const Corpus& corpus, const EmbeddingTable& table, std::size_t size,
                                    std::uint64_t seed);
  // One vector per line, whitespace-separated floats.
  static ReplacementSet load(const std::string& path, int dim);

  std::size_t size() const { return vectors_.size(); }
  bool empty() const { return vectors_.empty(); }
  const Vector& at(std::size_t i) const { return vectors_.at(i); }

 private:
  std::vector<Vector> vectors_;
};

// An attribution score written as a fixed linear combination of model
// evaluations: Σ coef·p_c(X_k) + Σ coef·(a·∇_u p_c(u)). The sampled inputs
// are constants, so value and parameter gradient follow from the model alone.
struct AttributionProbe {
  struct ForwardTerm {
    Matrix X;
    double coef = 0.0;
  };
  struct DirectionalTerm {
    Vector u;
    Vector a;
    double coef = 0.0;
  };
  int cls = 0;
  std::vector<ForwardTerm> forward_terms;
  std::vector<DirectionalTerm> directional_terms;

  double value(const ModelState& model) const;
  // grads += scale * d value / dθ
  void accumulate_grad(const ModelState& model, double scale, ModelState& grads) const;
  void append(const AttributionProbe& other, double sign);
};

// Seed component for one (instance, phrase) estimate, so estimates do not
// depend on evaluation order.
std::uint64_t attribution_stream(std::string_view instance_id, const Span& p);

AttributionProbe attribution_probe(ModelMode mode, const Matrix& X, const Vector& baseline, const Span& p, int c,
                                   const AttributionConfig& cfg, const ReplacementSet* replacements,
                                   std::uint64_t stream);
// φ(p; X) − φ(p; X with q masked). Throws DataError if p and q overlap.
AttributionProbe interaction_probe(ModelMode mode, const Matrix& X, const Vector& baseline, const Span& p,
                                   const Span& q, int c, const AttributionConfig& cfg,
                                   const ReplacementSet* replacements, std::uint64_t stream);

// Per-token integrated gradients for class c (midpoint Riemann sum).
std::vector<double> integrated_gradients(const ModelState& model, const Matrix& X, const Vector& baseline, int c,
                                         int steps);
double integrated_gradients_phrase(const ModelState& model, const Matrix& X, const Vector& baseline,
                                   const Span& p, int c, int steps);

// Class-c SOC importance of p; with delta = 0 this is f^c(x) − f^c(x_{−p}).
double soc_importance(const ModelState& model, const Matrix& X, const Vector& baseline, const Span& p, int c,
                      const AttributionConfig& cfg, const ReplacementSet* replacements, std::uint64_t stream);
Vector soc_importance_all(const ModelState& model, const Matrix& X, const Vector& baseline, const Span& p,
                          const AttributionConfig& cfg, const ReplacementSet* replacements,
                          std::uint64_t stream);

double attribution_score(const ModelState& model, const Matrix& X, const Vector& baseline, const Span& p, int c,
                         const AttributionConfig& cfg, const ReplacementSet* replacements, std::uint64_t stream);
double interaction_score(const ModelState& model, const Matrix& X, const Vector& baseline, const Span& p,
                         const Span& q, int c, const AttributionConfig& cfg, const ReplacementSet* replacements,
                         std::uint64_t stream);

struct AttributionReport {
  struct PhraseScore {
    Span p;
    int cls = 0;
    double value = 0.0;
  };
  struct PairScore {
    Span p;
    Span q;
    int cls = 0;
    double value = 0.0;
  };
  std::vector<PhraseScore> phrases;
  std::vector<PairScore> pairs;
};

// Token-level attributions for class c using the configured method.
std::vector<double> token_attributions(const ModelState& model, const Matrix& X, const Vector& baseline, int c,
                                       const AttributionConfig& cfg, const ReplacementSet* replacements,
                                       std::string_view instance_id);

}  // namespace exref

#endif  // EXREF_ATTRIBUTION_HPP_
