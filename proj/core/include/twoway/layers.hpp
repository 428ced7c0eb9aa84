#pragma once

// Forward and reverse-mode rules for the layer kinds used by a 2-way network:
// tied affine maps (dense and locally dense), leaky ReLU, batch normalization
// and tied dropout. Inputs are batches with samples as columns.

#include <cstddef>
#include <variant>
#include <vector>

#include "twoway/linalg.hpp"

namespace twoway {

enum class Direction { kForward, kBackward };
enum class Mode { kTrain, kEval };

// One weight matrix shared by both channels: W x + b_forward in the forward
// direction, transpose(W) y + b_backward in the backward direction.
struct TiedDenseParams {
  Matrix weight;         // out_dim x in_dim
  Vector bias_forward;   // out_dim
  Vector bias_backward;  // in_dim

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  friend bool operator==(const TiedDenseParams&, const TiedDenseParams&) = default;
};

// m independent dense blocks over contiguous slices of the input. Block k maps
// input slice k (in_dim/m wide) to output slice k (out_dim/m wide). The
// backward direction uses the transposed blocks and its own bias.
struct LocallyDenseParams {
  std::vector<Matrix> blocks;  // each (out_dim/m) x (in_dim/m)
  Vector bias_forward;         // out_dim
  Vector bias_backward;        // in_dim

  std::size_t block_count() const noexcept { return blocks.size(); }
  std::size_t in_dim() const noexcept;
  std::size_t out_dim() const noexcept;

  friend bool operator==(const LocallyDenseParams&, const LocallyDenseParams&) = default;
};

using TiedAffine = std::variant<TiedDenseParams, LocallyDenseParams>;

std::size_t in_dim(const TiedAffine& layer);
std::size_t out_dim(const TiedAffine& layer);
// Input dimension consumed when running in `direction`.
std::size_t input_dim(const TiedAffine& layer, Direction direction);
std::size_t output_dim(const TiedAffine& layer, Direction direction);

// Same structure as `layer`, all entries zero. Used as a gradient accumulator.
TiedAffine zeros_like(const TiedAffine& layer);

Matrix tied_dense_forward(const TiedDenseParams& params, const Matrix& x, Direction direction);
// Accumulates parameter gradients into `grads` and returns the input gradient.
Matrix tied_dense_backward(const TiedDenseParams& params, const Matrix& x, const Matrix& upstream,
                           Direction direction, TiedDenseParams& grads);

// Throws ConfigError when m does not divide both dimensions.
LocallyDenseParams make_locally_dense(std::size_t in_dim, std::size_t out_dim, std::size_t blocks);
Matrix locally_dense_forward(const LocallyDenseParams& params, const Matrix& x,
                             Direction direction);
Matrix locally_dense_backward(const LocallyDenseParams& params, const Matrix& x,
                              const Matrix& upstream, Direction direction,
                              LocallyDenseParams& grads);
// The equivalent full weight matrix (block diagonal).
Matrix block_diagonal_weight(const LocallyDenseParams& params);

Matrix tied_affine_forward(const TiedAffine& layer, const Matrix& x, Direction direction);
Matrix tied_affine_backward(const TiedAffine& layer, const Matrix& x, const Matrix& upstream,
                            Direction direction, TiedAffine& grads);

// y = x for x >= 0, a*x otherwise. Throws ParameterError unless 0 <= a <= 1;
// a = 1 is the identity and a = 0 the plain ReLU.
Matrix leaky_relu(const Matrix& x, double leakiness);
Matrix leaky_relu_backward(const Matrix& x, const Matrix& upstream, double leakiness);

struct BatchNormParams {
  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  double momentum = 0.1;
  double epsilon = 1e-8;
  // Number of batches folded into the running statistics. The first batch
  // initializes them, so they stay convex combinations of batch statistics.
  std::size_t updates = 0;

  static BatchNormParams identity(std::size_t dim);
  std::size_t dim() const noexcept { return gamma.size(); }
  // Keeps |gamma_k| >= min_abs, preserving sign.
  void clamp_gamma(double min_abs = 1e-8);

  friend bool operator==(const BatchNormParams&, const BatchNormParams&) = default;
};

// Values kept from a forward call that the backward call needs.
struct BatchNormCache {
  Matrix normalized;  // (x - mean) / sqrt(var + eps)
  Vector inv_std;
  Mode mode = Mode::kTrain;
};

// Per-row (per-neuron) normalization over the batch. Train mode uses batch
// statistics and, if `update_running`, folds them into the running estimates;
// eval mode uses the running estimates. Throws ParameterError on a train-mode
// batch with fewer than two samples.
Matrix batchnorm_forward(BatchNormParams& params, const Matrix& x, Mode mode,
                         BatchNormCache* cache = nullptr, bool update_running = true);
// Eval-mode normalization with the running statistics; never mutates.
Matrix batchnorm_eval(const BatchNormParams& params, const Matrix& x,
                      BatchNormCache* cache = nullptr);
// Exact gradient through the batch statistics (train) or the fixed affine map
// (eval). Accumulates into dgamma/dbeta and returns the input gradient.
Matrix batchnorm_backward(const BatchNormParams& params, const BatchNormCache& cache,
                          const Matrix& upstream, std::span<double> dgamma,
                          std::span<double> dbeta);

// A Bernoulli(1 - p) keep-mask shared by both channels at one interface.
struct TiedDropoutMask {
  Matrix mask;
  double keep_prob = 1.0;
};

// Throws ParameterError unless 0 <= p < 1.
TiedDropoutMask draw_dropout_mask(Rng& rng, std::size_t rows, std::size_t cols, double p);
// Train: x * mask / sqrt(keep_prob). Eval: x.
Matrix tied_dropout_apply(const TiedDropoutMask& mask, const Matrix& x, Mode mode);
Matrix tied_dropout_backward(const TiedDropoutMask& mask, const Matrix& upstream, Mode mode);

}  // namespace twoway
