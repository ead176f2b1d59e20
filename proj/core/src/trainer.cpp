#include "exref/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "exref/error.hpp"
#include "exref/metrics.hpp"
#include "json.hpp"

namespace exref {

double dev_f1(const ModelState& model, const DevSet& dev, int positive) {
  std::vector<int> pred;
  pred.reserve(dev.X.size());
  for (const auto& X : dev.X) pred.push_back(argmax(forward(model, X)));
  return f1_score(pred, dev.gold, positive).f1;
}

namespace {

struct Adam {
  std::vector<double> m, v;
  int t = 0;

  void step(ModelState& model, const ModelState& grads, const TrainConfig& cfg, double lr) {
    auto theta = model.flat();
    const auto g = grads.flat();
    if (m.empty()) {
      m.assign(theta.size(), 0.0);
      v.assign(theta.size(), 0.0);
    }
    ++t;
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
    model.set_flat(theta);
  }
};

}  // namespace

TrainResult train_refine(const ModelState& source, const std::vector<TrainingExample>& data, const DevSet& dev,
                         const TrainConfig& cfg, const ReplacementSet* replacements) {
  if (data.empty()) throw DataError("no training data");
  if (dev.X.empty()) throw DataError("empty dev set");
  if (cfg.batch_size < 1 || cfg.eval_every < 1) throw DataError("batch_size and eval_every must be positive");
  if (cfg.lr < 0.0) throw DataError("learning rate must be non-negative");
  for (double w : cfg.loss.class_weights) {
    if (!(w > 0.0)) throw DataError("class weights must be positive");
  }

  ModelState model = source;
  TrainResult result;
  result.model = source;
  result.best_dev_f1 = dev_f1(source, dev, cfg.positive_class);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  auto batch_at = [&](std::size_t start) {
    std::vector<const TrainingExample*> batch;
    for (std::size_t i = start; i < std::min(start + cfg.batch_size, order.size()); ++i) {
      batch.push_back(&data[order[i]]);
    }
    return batch;
  };

  {
    const auto first = total_loss(model, batch_at(0), cfg.loss, replacements, &source, nullptr);
    result.log.push_back({0, first.total, first.classification, first.attr, first.inter, result.best_dev_f1, cfg.lr});
  }

  Adam adam;
  double lr = cfg.lr;
  int step = 0;
  int stale = 0;
  int lr_stale = 0;
  bool stop = false;
  LossParts acc;
  int acc_n = 0;

  auto evaluate = [&] {
    const double f1 = dev_f1(model, dev, cfg.positive_class);
    const double n = std::max(acc_n, 1);
    result.log.push_back({step, acc.total / n, acc.classification / n, acc.attr / n, acc.inter / n, f1, lr});
    acc = LossParts{};
    acc_n = 0;
    if (f1 > result.best_dev_f1) {
      result.best_dev_f1 = f1;
      result.best_step = step;
      result.model = model;
      stale = 0;
      lr_stale = 0;
      return;
    }
    ++stale;
    if (++lr_stale >= cfg.lr_patience) {
      lr *= 0.5;
      lr_stale = 0;
    }
    if (stale >= cfg.patience) stop = true;
  };

  for (int epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size() && !stop; start += cfg.batch_size) {
      ModelState grads = model.zeros_like();
      const auto parts = total_loss(model, batch_at(start), cfg.loss, replacements, &source, &grads);
      if (!std::isfinite(parts.total) || !grads.finite()) {
        throw TrainingError("non-finite loss at step " + std::to_string(step + 1) + " (L=" +
                            std::to_string(parts.total) + ", L'=" + std::to_string(parts.classification) + ")");
      }
      adam.step(model, grads, cfg, lr);
      ++step;
      acc.total += parts.total;
      acc.classification += parts.classification;
      acc.attr += parts.attr;
      acc.inter += parts.inter;
      ++acc_n;
      if (step % cfg.eval_every == 0) evaluate();
    }
  }
  if (acc_n > 0) evaluate();
  result.steps = step;
  return result;
}

std::string log_to_jsonl(const std::vector<LogEntry>& log, const std::string& run_label) {
  std::string out = nlohmann::json{{"run", run_label}}.dump() + "\n";
  for (const auto& e : log) {
    nlohmann::json j = nlohmann::json::object();
    j["step"] = e.step;
    j["L"] = e.L;
    j["L_prime"] = e.L_prime;
    j["L_attr"] = e.L_attr;
    j["L_inter"] = e.L_inter;
    j["dev_F1"] = e.dev_f1;
    j["lr"] = e.lr;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace exref
