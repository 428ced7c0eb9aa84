#include "twoway/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "twoway/error.hpp"
#include "twoway/log.hpp"

namespace twoway {
namespace {

double min_abs(const Matrix& m) {
  double best = std::numeric_limits<double>::infinity();
  for (double v : m.values()) best = std::min(best, std::abs(v));
  return best;
}

}  // namespace

double min_kink_distance(const ForwardTrace& trace) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto* channel : {&trace.forward, &trace.backward})
    for (const auto& block : channel->blocks) best = std::min(best, min_abs(block.activation_input));
  return best;
}

GradCheckResult gradient_check(TwoWayModel& model, const Matrix& x, const Matrix& y,
                               const LossWeights& weights, const ObjectiveOptions& objective,
                               Rng& mask_rng, const GradCheckOptions& options) {
  ForwardOptions draw;
  draw.mode = Mode::kTrain;
  draw.rng = &mask_rng;
  draw.update_running_stats = false;
  const PairOutput base = forward_pair(model, x, y, draw);
  ModelGradients grads = ModelGradients::zeros_like(model);
  total_loss_and_grads(model, base, weights, grads, objective);

  ForwardOptions replay;
  replay.mode = Mode::kTrain;
  replay.masks = &base.trace.masks;
  replay.update_running_stats = false;
  auto loss_at = [&]() {
    return total_loss(model, forward_pair(model, x, y, replay), weights, objective).total;
  };

  GradCheckResult result;
  const auto params = parameter_registry(model);
  const auto analytic = parameter_registry(grads);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = loss_at();
      values[i] = saved - options.step;
      const double down = loss_at();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[p].values[i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      const double err = std::abs(a - numeric) / denom;
      ++result.checked;
      if (result.checked == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = params[p].name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

RandomGradCheckCase random_gradient_check(std::uint64_t seed, double kink_margin,
                                          const GradCheckOptions& options) {
  Rng rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    RandomGradCheckCase c;
    c.seed = seed;
    const std::size_t k = 2 + rng.below(3);  // 2..4 layers, so a mid interface exists
    for (std::size_t i = 0; i <= k; ++i) c.config.dims.push_back(2 + rng.below(7));
    c.config.dropout = DropoutKind::kTied;
    c.config.batch_norm = BnPlacement::kAfterActivation;
    c.config.dropout_p = 0.3;
    c.batch = 4 + rng.below(5);
    Rng model_rng = rng.split();
    TwoWayModel model = TwoWayModel::create(c.config, model_rng);
    // Move gamma and beta off their initial values so their gradients are
    // generic.
    for (std::size_t i = 1; i < k; ++i) {
      for (Direction ch : {Direction::kForward, Direction::kBackward}) {
        auto& bn = model.batch_norm(ch, i);
        for (double& g : bn.gamma) g = 0.6 + 0.8 * rng.uniform();
        for (double& b : bn.beta) b = 0.4 * (rng.uniform() - 0.5);
      }
    }
    for (auto& view : parameter_registry(model)) {
      if (view.name.find("bias") != std::string::npos) {
        for (double& b : view.values) b = 0.2 * (rng.uniform() - 0.5);
      }
    }
    const Matrix x = rng_gaussian(rng, c.config.dims.front(), c.batch, 0.0, 1.0);
    const Matrix y = rng_gaussian(rng, c.config.dims.back(), c.batch, 0.0, 1.0);
    const std::uint64_t mask_seed = rng.next_u64();

    Rng probe_rng(mask_seed);
    ForwardOptions probe;
    probe.mode = Mode::kTrain;
    probe.rng = &probe_rng;
    probe.update_running_stats = false;
    const PairOutput out = forward_pair(model, x, y, probe);
    if (min_kink_distance(out.trace) < kink_margin) continue;

    LossWeights weights{0.05, 0.05, 0.05};
    Rng mask_rng(mask_seed);
    c.result = gradient_check(model, x, y, weights, {}, mask_rng, options);
    return c;
  }
  throw NumericError("random_gradient_check: no instance clear of the leaky-ReLU kink");
}

}  // namespace twoway
