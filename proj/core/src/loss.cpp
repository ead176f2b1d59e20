#include "exref/loss.hpp"

#include <cmath>

#include "exref/error.hpp"

namespace exref {

double cross_entropy(const ModelState& model, const Matrix& X, int label, double weight, ModelState* grads,
                     double scale) {
  if (label < 0 || label >= model.classes()) throw DataError("label out of range");
  const Vector p = forward(model, X);
  if (grads != nullptr) {
    Vector g_p = Vector::Zero(model.classes());
    g_p(label) = -scale * weight / p(label);
    accumulate_prob_grad(model, X, g_p, *grads);
  }
  return -weight * std::log(p(label));
}

std::pair<double, double> reg_losses(const ModelState& model, const TrainingExample& ex, const LossConfig& cfg,
                                     const ReplacementSet* replacements, ModelState* grads, double scale) {
  double attr = 0.0;
  double inter = 0.0;
  for (const auto& t : ex.advice) {
    if (t.cls < 0 || t.cls >= model.classes()) throw DataError("advice class out of range in " + ex.id);
    AttributionProbe probe;
    if (t.kind == AdviceAtom::Kind::kAttribution) {
      probe = attribution_probe(model.mode, ex.X, ex.baseline, t.p, t.cls, cfg.attr, replacements,
                                attribution_stream(ex.id, t.p));
    } else {
      probe = interaction_probe(model.mode, ex.X, ex.baseline, t.p, t.q, t.cls, cfg.attr, replacements,
                                attribution_stream(ex.id, t.p) ^ attribution_stream(ex.id, t.q));
    }
    const double diff = probe.value(model) - t.target;
    (t.kind == AdviceAtom::Kind::kAttribution ? attr : inter) += diff * diff;
    if (grads != nullptr) probe.accumulate_grad(model, scale * 2.0 * diff, *grads);
  }
  return {attr, inter};
}

double kl_divergence(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw DataError("distributions differ in size");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) kl += p(i) * std::log(p(i) / q(i));
  }
  return kl;
}

double distill_loss(const ModelState& model, const Vector& source_probs, const Matrix& X, ModelState* grads,
                    double scale) {
  const Vector p = forward(model, X);
  if (grads != nullptr) {
    const Vector g_p = -scale * (source_probs.array() / p.array()).matrix();
    accumulate_prob_grad(model, X, g_p, *grads);
  }
  return kl_divergence(source_probs, p);
}

double distill_loss(const ModelState& model, const ModelState& source, const Matrix& X, ModelState* grads,
                    double scale) {
  if (!model.same_shape(source)) throw DataError("source and model shapes differ");
  return distill_loss(model, forward(source, X), X, grads, scale);
}

double l2_transfer_loss(const ModelState& model, const ModelState& source, ModelState* grads, double scale) {
  if (!model.same_shape(source)) throw DataError("source and model shapes differ");
  ModelState diff = model;
  diff.add_scaled(source, -1.0);
  if (grads != nullptr) grads->add_scaled(diff, 2.0 * scale);
  const auto v = diff.flat();
  double s = 0.0;
  for (double d : v) s += d * d;
  return s;
}

LossParts total_loss(const ModelState& model, const std::vector<const TrainingExample*>& batch,
                     const LossConfig& cfg, const ReplacementSet* replacements, const ModelState* source,
                     ModelState* grads) {
  if (batch.empty()) throw DataError("empty batch");
  if (cfg.alpha < 0.0) throw DataError("alpha must be non-negative");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossParts out;
  for (const auto* ex : batch) {
    if (!ex->label) continue;
    double w = 1.0;
    if (!cfg.class_weights.empty()) {
      if (*ex->label >= static_cast<int>(cfg.class_weights.size())) throw DataError("no class weight for label");
      w = cfg.class_weights[*ex->label];
    }
    if (cfg.z_weighting) w *= ex->z;
    out.classification += cross_entropy(model, ex->X, *ex->label, w, grads, inv_b);
  }
  out.classification *= inv_b;
  out.total = out.classification;
  if (cfg.alpha == 0.0) return out;

  switch (cfg.transfer) {
    case TransferKind::kNone: {
      double attr = 0.0;
      double inter = 0.0;
      for (const auto* ex : batch) {
        const auto [a, i] = reg_losses(model, *ex, cfg, replacements, grads, cfg.alpha * inv_b);
        attr += a;
        inter += i;
      }
      out.attr = attr * inv_b;
      out.inter = inter * inv_b;
      out.total = out.classification + cfg.alpha * (out.attr + out.inter);
      break;
    }
    case TransferKind::kL2:
      if (source == nullptr) throw DataError("l2 transfer needs the source model");
      out.transfer = l2_transfer_loss(model, *source, grads, cfg.alpha);
      out.total = out.classification + cfg.alpha * out.transfer;
      break;
    case TransferKind::kDistill: {
      double kl = 0.0;
      for (const auto* ex : batch) {
        if (ex->source_probs.size() > 0) {
          kl += distill_loss(model, ex->source_probs, ex->X, grads, cfg.alpha * inv_b);
        } else {
          if (source == nullptr) throw DataError("distillation needs the source model");
          kl += distill_loss(model, *source, ex->X, grads, cfg.alpha * inv_b);
        }
      }
      out.transfer = kl * inv_b;
      out.total = out.classification + cfg.alpha * out.transfer;
      break;
    }
  }
  return out;
}

}  // namespace exref
