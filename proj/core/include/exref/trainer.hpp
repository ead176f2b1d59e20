#ifndef EXREF_TRAINER_HPP_
#define EXREF_TRAINER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "exref/loss.hpp"

namespace exref {

struct TrainConfig {
  LossConfig loss;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 32;
  int max_epochs = 20;
  int eval_every = 10;
  int patience = 10;     // stagnant evaluations before stopping
  int lr_patience = 3;   // stagnant evaluations before halving the rate
  int positive_class = 1;
  std::uint64_t seed = 0;
};

struct DevSet {
  std::vector<Matrix> X;
  std::vector<int> gold;
};

struct LogEntry {
  int step = 0;
  double L = 0.0;
  double L_prime = 0.0;
  double L_attr = 0.0;
  double L_inter = 0.0;
  double dev_f1 = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelState model;  // best dev checkpoint
  std::vector<LogEntry> log;
  double best_dev_f1 = 0.0;
  int best_step = 0;
  int steps = 0;
};

double dev_f1(const ModelState& model, const DevSet& dev, int positive);

// Adam from `source`; dev F1 is evaluated at step 0, every eval_every steps
// and after the last step. Throws TrainingError on a non-finite loss.
TrainResult train_refine(const ModelState& source, const std::vector<TrainingExample>& data, const DevSet& dev,
                         const TrainConfig& cfg, const ReplacementSet* replacements = nullptr);

std::string log_to_jsonl(const std::vector<LogEntry>& log, const std::string& run_label);

}  // namespace exref

#endif  // EXREF_TRAINER_HPP_
