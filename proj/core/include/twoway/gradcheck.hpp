#pragma once

// Central finite-difference verification of total_loss_and_grads.

#include <cstdint>
#include <string>

#include "twoway/objective.hpp"

namespace twoway {

struct GradCheckOptions {
  double step = 1e-5;
  // Central-difference roundoff is about eps * |L| / step (~1e-10 here), so
  // gradients below the floor are compared on an absolute scale.
  // Relative errors are |a - f| / max(|a|, |f|, denominator_floor).
  double denominator_floor = 1e-5;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

// Compares every parameter entry's analytic gradient with a central
// difference of the loss. Train-mode passes replay the masks of one initial
// forward call and do not touch running statistics, so the loss is a
// deterministic function of the parameters.
GradCheckResult gradient_check(TwoWayModel& model, const Matrix& x, const Matrix& y,
                               const LossWeights& weights, const ObjectiveOptions& objective,
                               Rng& mask_rng, const GradCheckOptions& options = {});

// Smallest distance of any leaky-ReLU input to the kink at 0 over a
// train-mode trace.
double min_kink_distance(const ForwardTrace& trace);

struct RandomGradCheckCase {
  ModelConfig config;
  std::size_t batch = 0;
  std::uint64_t seed = 0;
  GradCheckResult result;
};

// Random tiny model (dims <= 8, depth <= 4, batch norm and tied dropout,
// every loss term and regularizer active) on random data, redrawn until no
// leaky-ReLU input lies within `kink_margin` of 0.
RandomGradCheckCase random_gradient_check(std::uint64_t seed, double kink_margin = 1e-3,
                                          const GradCheckOptions& options = {});

}  // namespace twoway
