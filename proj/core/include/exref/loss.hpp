#ifndef EXREF_LOSS_HPP_
#define EXREF_LOSS_HPP_

#include <optional>
#include <string>
#include <vector>

#include "exref/attribution.hpp"
#include "exref/matcher.hpp"
#include "exref/model.hpp"

namespace exref {

enum class TransferKind { kNone, kL2, kDistill };

struct LossConfig {
  double alpha = 0.01;
  std::vector<double> class_weights;  // empty means all ones
  bool z_weighting = true;
  AttributionConfig attr;
  // l2 and distill reuse alpha as their strength and ignore advice.
  TransferKind transfer = TransferKind::kNone;
};

// One training instance after merging every record that matched it.
struct TrainingExample {
  std::string id;
  Matrix X;
  Vector baseline;
  std::optional<int> label;  // absent: advice-only instance
  double z = 1.0;
  std::vector<AdviceTarget> advice;
  Vector source_probs;  // distillation target; empty when unused
};

struct LossParts {
  double total = 0.0;
  double classification = 0.0;  // L'
  double attr = 0.0;
  double inter = 0.0;
  double transfer = 0.0;
};

// (L^attr, L^inter) for one example. When `grads` is set it receives
// scale * d(L^attr + L^inter)/dθ.
std::pair<double, double> reg_losses(const ModelState& model, const TrainingExample& ex, const LossConfig& cfg,
                                     const ReplacementSet* replacements, ModelState* grads = nullptr,
                                     double scale = 1.0);

// L = L' + α(L^attr + L^inter), each term averaged over the batch. With
// α = 0 the regularisers are not evaluated and L is exactly L'.
LossParts total_loss(const ModelState& model, const std::vector<const TrainingExample*>& batch,
                     const LossConfig& cfg, const ReplacementSet* replacements,
                     const ModelState* source = nullptr, ModelState* grads = nullptr);

double cross_entropy(const ModelState& model, const Matrix& X, int label, double weight, ModelState* grads = nullptr,
                     double scale = 1.0);

// Σ (θ − θ_source)².
double l2_transfer_loss(const ModelState& model, const ModelState& source, ModelState* grads = nullptr,
                        double scale = 1.0);
// KL(p_source ‖ p_model) on one input.
double distill_loss(const ModelState& model, const ModelState& source, const Matrix& X,
                    ModelState* grads = nullptr, double scale = 1.0);
double distill_loss(const ModelState& model, const Vector& source_probs, const Matrix& X,
                    ModelState* grads = nullptr, double scale = 1.0);
double kl_divergence(const Vector& p, const Vector& q);

}  // namespace exref

#endif  // EXREF_LOSS_HPP_
