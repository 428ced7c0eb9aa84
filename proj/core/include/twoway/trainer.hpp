#pragma once

// Mini-batch SGD with classical momentum, a step-halving learning rate and
// per-epoch metrics.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "twoway/data_io.hpp"
#include "twoway/network.hpp"
#include "twoway/objective.hpp"

namespace twoway {

struct TrainConfig {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  std::size_t halve_every = 20;  // 0 disables halving
  std::size_t batch_size = 128;
  std::size_t epochs = 60;
  std::uint64_t seed = 0;  // shuffling and dropout masks
  LossWeights weights;
  ObjectiveOptions objective;
  // Record elapsed seconds in the metrics; off by default so that metrics
  // files from identical runs are byte-identical.
  bool wall_clock = false;

  // Throws ConfigError.
  void validate() const;
};

// lr_0 * 0.5^floor(epoch / halve_every), epoch counted from 0.
double lr_at_epoch(const TrainConfig& config, std::size_t epoch);

// v <- momentum * v - lr * g; theta <- theta + v, over aligned registries.
// Throws ContractError if the registries differ in names or sizes.
void sgd_momentum_step(std::span<const ParameterView> params, std::span<const ParameterView> grads,
                       std::span<const ParameterView> velocity, double lr, double momentum);
// Model-level step: applies the update, clamps batch-norm scales away from 0
// and bumps the model version.
void sgd_momentum_step(TwoWayModel& model, ModelGradients& grads, ModelGradients& velocity,
                       double lr, double momentum);

struct MetricsRecord {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  double lx = 0.0;        // epoch means of the train-mode batch terms
  double ly = 0.0;
  double lh = 0.0;
  double rw = 0.0;
  double rdecov = 0.0;
  double rgamma = 0.0;
  double var_mid_fwd = 0.0;  // eval-mode mean per-neuron variance, training split
  double var_mid_bwd = 0.0;
  double corr_train = 0.0;  // eval-mode neuronwise correlation sums
  double corr_val = 0.0;    // NaN without a validation split
  double seconds = 0.0;
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRecord& record);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);

struct TrainCallbacks {
  std::function<void(const MetricsRecord&)> on_epoch;
  // Called when a new best validation score is reached.
  std::function<void(const TwoWayModel&, const MetricsRecord&)> on_best;
};

struct TrainResult {
  TwoWayModel best_model;  // highest validation (else training) correlation sum
  std::size_t best_epoch = 0;
  std::vector<MetricsRecord> history;
};

// Trains `model` in place on the training split of `data`; validation columns
// are used for model selection only. The last partial batch of each epoch is
// dropped. Throws DivergenceError naming the offending term when a loss term
// exceeds 1e12 or stops being finite.
TrainResult train(TwoWayModel& model, const PairedDataset& data, const TrainConfig& config,
                  const TrainCallbacks& callbacks = {});

// Eval-mode mid representations and their summary statistics.
struct MidSummary {
  double var_fwd = 0.0;
  double var_bwd = 0.0;
  double corr = 0.0;
};
MidSummary summarize_mid(const TwoWayModel& model, const Matrix& x, const Matrix& y);

}  // namespace twoway
