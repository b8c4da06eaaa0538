#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "pn/model.hpp"

namespace pn {

enum class Metric { accuracy, auc };

struct TrainConfig {
  int warmup_epochs = 50;
  int main_epochs = 200;
  double lr = 0.001;
  int batch_parts = 1;  // 1 = full batch
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  Metric metric = Metric::accuracy;

  void validate() const;
};

struct AdamState {
  std::vector<Matrix> m, v;  // aligned with the model's parameter order
  long step = 0;
};

AdamState make_adam_state(const PolynormerModel& model);

/// Standard bias-corrected Adam update, applied in place.
void adam_step(std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

/// Mean negative log-likelihood of the labeled entries, on the tape.
/// `log_probs` must hold row-wise log-softmax outputs.
Value nll_loss(Tape& t, Value log_probs, const std::vector<int>& labels,
               const std::vector<int>& mask_indices);

double accuracy(const Matrix& logits, const std::vector<int>& labels,
                const std::vector<int>& mask_indices);

/// Mann-Whitney rank statistic with average ranks for ties; scores rank
/// class 1 against class 0. Requires both classes in the mask.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels,
               const std::vector<int>& mask_indices);

struct Metrics {
  double loss = 0.0;
  double accuracy = 0.0;
  double auc = 0.0;
  int epoch = 0;
  std::string stage;
  double value(Metric m) const { return m == Metric::accuracy ? accuracy : auc; }
};

struct EpochRecord {
  int epoch = 0;
  std::string stage;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
};

struct TrainResult {
  PolynormerModel model;  // best validation snapshot
  std::vector<EpochRecord> log;
  double best_val_metric = 0.0;
  double final_test_metric = 0.0;
};

/// Raised when training produces a non-finite loss.
struct NumericFailure : std::runtime_error {
  int epoch;
  explicit NumericFailure(int epoch_)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch_)),
        epoch(epoch_) {}
};

/// Two-phase optimization: warmup epochs train through the local module
/// only, then the full local-to-global model. With batch_parts > 1 each
/// epoch sweeps a fresh random node partition and trains on node-induced
/// subgraphs. The best model by validation metric over the deployment phase
/// is returned.
TrainResult train(PolynormerModel model, const Dataset& data, const TrainConfig& cfg);

/// Deterministic full-batch evaluation with dropout disabled.
Metrics evaluate(const PolynormerModel& model, const Dataset& data, Split split, Metric metric);

std::string metrics_csv(const std::vector<EpochRecord>& log);
void write_metrics_csv(const std::vector<EpochRecord>& log, const std::string& path);

struct BenchPoint {
  int n = 0;
  int m = 0;  // undirected edges
  double sec_per_epoch = 0.0;
  std::int64_t peak_bytes = 0;
};

/// Times full-batch training epochs on one dataset and reports the matrix
/// allocator's high-water mark. Used by the scaling benchmark.
BenchPoint bench_training_run(const Dataset& data, const ModelConfig& cfg, int epochs,
                              double lr, std::uint64_t seed);

}  // namespace pn
