#pragma once

// Compound training loss: two reconstruction terms, the mid-network matching
// term and three regularizers (weight decay, decorrelation, inverse-gamma).

#include "twoway/network.hpp"

namespace twoway {

struct LossWeights {
  double lambda_w = 0.05;
  double lambda_decov = 0.05;
  double lambda_gamma = 0.05;

  // Throws ConfigError on negative or non-finite entries.
  void validate() const;
};

struct LossBreakdown {
  double lx = 0.0;
  double ly = 0.0;
  double lh = 0.0;
  double rw = 0.0;
  double rdecov = 0.0;
  double rgamma = 0.0;
  double total = 0.0;
};

struct ObjectiveOptions {
  bool decov_centered = false;     // covariance instead of raw second moments
  bool use_reconstruction = true;  // L_x and L_y
  bool use_mid_loss = true;        // L_h
};

struct EuclideanTerms {
  double lx = 0.0;
  double ly = 0.0;
  double lh = 0.0;
};

// Squared Frobenius distances divided by the batch size n (columns).
// mid_fwd / mid_bwd may both be empty, in which case lh = 0.
EuclideanTerms euclidean_terms(const Matrix& x, const Matrix& x_recon, const Matrix& y,
                               const Matrix& y_recon, const Matrix& mid_fwd,
                               const Matrix& mid_bwd);

// Off-diagonal energy of one side's second-moment matrix C = A A^T / n:
// 0.5 * (||C||_F^2 - ||diag C||^2). If `grad` is non-null it receives
// d/dA, shaped like A.
double decov_side(const Matrix& a, bool centered = false, Matrix* grad = nullptr);
// Sum of decov_side over both channels' mid activations.
double decov_penalty(const Matrix& mid_fwd, const Matrix& mid_bwd, bool centered = false);

// Sum of squared entries of every tied weight matrix, each counted once.
double weight_decay(const TwoWayModel& model);
// Sum of 1/gamma^2 over every batch-norm scale of both channels.
double gamma_penalty(const TwoWayModel& model);

// Evaluates the loss of a train-mode forward pass and accumulates exact
// gradients of `total` into `grads` (zeroed by the caller). Throws
// ContractError when the trace was produced by a different model version.
LossBreakdown total_loss_and_grads(const TwoWayModel& model, const PairOutput& output,
                                   const LossWeights& weights, ModelGradients& grads,
                                   const ObjectiveOptions& options = {});

// Loss only, without touching gradients.
LossBreakdown total_loss(const TwoWayModel& model, const PairOutput& output,
                         const LossWeights& weights, const ObjectiveOptions& options = {});

}  // namespace twoway
