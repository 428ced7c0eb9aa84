#include "twoway/objective.hpp"

#include <cmath>
#include <string>

#include "twoway/error.hpp"

namespace twoway {
namespace {

double squared_distance(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch");
  }
  const auto av = a.values();
  const auto bv = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  return s;
}

// g = scale * (a - b)
Matrix scaled_difference(const Matrix& a, const Matrix& b, double scale) {
  Matrix g(a.rows(), a.cols());
  const auto av = a.values();
  const auto bv = b.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = scale * (av[i] - bv[i]);
  return g;
}

Matrix center_rows(const Matrix& a) {
  Matrix c = a;
  const Moments m = row_stats(a);
  for (std::size_t r = 0; r < c.rows(); ++r)
    for (double& v : c.row(r)) v -= m.means[r];
  return c;
}

void add_scaled(Matrix& dst, const Matrix& src, double scale) {
  auto d = dst.values();
  const auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

template <class Fn>
void for_each_weight(const TiedAffine& layer, Fn&& fn) {
  if (const auto* dense = std::get_if<TiedDenseParams>(&layer)) {
    fn(dense->weight);
  } else {
    for (const Matrix& block : std::get<LocallyDenseParams>(layer).blocks) fn(block);
  }
}

std::vector<Matrix*> weight_slots(TiedAffine& layer) {
  if (auto* dense = std::get_if<TiedDenseParams>(&layer)) return {&dense->weight};
  std::vector<Matrix*> out;
  for (Matrix& block : std::get<LocallyDenseParams>(layer).blocks) out.push_back(&block);
  return out;
}

LossBreakdown evaluate(const TwoWayModel& model, const PairOutput& output,
                       const LossWeights& weights, ModelGradients* grads,
                       const ObjectiveOptions& options) {
  weights.validate();
  const ForwardTrace& trace = output.trace;
  if (trace.model_version != model.version()) {
    throw ContractError("loss evaluated on a stale trace (model updated since forward pass)");
  }
  const std::size_t n = trace.x.cols();
  if (n == 0) throw ShapeError("loss on an empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool has_mid = model.has_mid_loss();

  LossBreakdown out;
  OutputGradients og;
  if (options.use_reconstruction) {
    out.lx = squared_distance(trace.x, output.x_recon, "L_x") * inv_n;
    out.ly = squared_distance(trace.y, output.y_recon, "L_y") * inv_n;
    if (grads != nullptr) {
      og.x_recon = scaled_difference(output.x_recon, trace.x, 2.0 * inv_n);
      og.y_recon = scaled_difference(output.y_recon, trace.y, 2.0 * inv_n);
    }
  } else if (grads != nullptr) {
    og.x_recon = Matrix(output.x_recon.rows(), output.x_recon.cols());
    og.y_recon = Matrix(output.y_recon.rows(), output.y_recon.cols());
  }

  const bool mid_grads = grads != nullptr && has_mid &&
                         ((options.use_mid_loss) || weights.lambda_decov > 0.0);
  if (mid_grads) {
    og.mid_forward = Matrix(output.mid_forward.rows(), output.mid_forward.cols());
    og.mid_backward = Matrix(output.mid_backward.rows(), output.mid_backward.cols());
  }
  if (has_mid && options.use_mid_loss) {
    out.lh = squared_distance(output.mid_forward, output.mid_backward, "L_h") * inv_n;
    if (mid_grads) {
      const Matrix g = scaled_difference(output.mid_forward, output.mid_backward, 2.0 * inv_n);
      og.mid_forward += g;
      og.mid_backward -= g;
    }
  }
  if (has_mid) {
    Matrix gf;
    Matrix gb;
    const bool want = mid_grads && weights.lambda_decov > 0.0;
    out.rdecov = decov_side(output.mid_forward, options.decov_centered, want ? &gf : nullptr) +
                 decov_side(output.mid_backward, options.decov_centered, want ? &gb : nullptr);
    if (want) {
      add_scaled(og.mid_forward, gf, weights.lambda_decov);
      add_scaled(og.mid_backward, gb, weights.lambda_decov);
    }
  }

  out.rw = weight_decay(model);
  out.rgamma = gamma_penalty(model);
  out.total = out.lx + out.ly + out.lh + weights.lambda_w * out.rw +
              weights.lambda_decov * out.rdecov + weights.lambda_gamma * out.rgamma;

  if (grads != nullptr) {
    backward_pair(model, trace, og, *grads);
    if (weights.lambda_w > 0.0) {
      for (std::size_t i = 0; i < model.depth(); ++i) {
        auto slots = weight_slots(grads->layers[i]);
        std::size_t b = 0;
        for_each_weight(model.layers()[i],
                        [&](const Matrix& w) { add_scaled(*slots[b++], w, 2.0 * weights.lambda_w); });
      }
    }
    if (weights.lambda_gamma > 0.0 && model.has_batch_norm()) {
      for (std::size_t i = 1; i < model.depth(); ++i) {
        for (Direction ch : {Direction::kForward, Direction::kBackward}) {
          const Vector& gamma = model.batch_norm(ch, i).gamma;
          Vector& dg = (ch == Direction::kForward ? grads->bn_forward : grads->bn_backward)[i - 1]
                           .gamma;
          for (std::size_t q = 0; q < gamma.size(); ++q) {
            const double g = gamma[q];
            dg[q] += -2.0 * weights.lambda_gamma / (g * g * g);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda_w, lambda_decov, lambda_gamma}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError("loss weights must be finite and non-negative");
    }
  }
}

EuclideanTerms euclidean_terms(const Matrix& x, const Matrix& x_recon, const Matrix& y,
                               const Matrix& y_recon, const Matrix& mid_fwd,
                               const Matrix& mid_bwd) {
  const std::size_t n = x.cols();
  if (y.cols() != n) throw ShapeError("euclidean_terms: batch sizes differ");
  if (n == 0) throw ShapeError("euclidean_terms: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  EuclideanTerms t;
  t.lx = squared_distance(x, x_recon, "L_x") * inv_n;
  t.ly = squared_distance(y, y_recon, "L_y") * inv_n;
  if (!mid_fwd.empty() || !mid_bwd.empty()) {
    if (mid_fwd.cols() != n) throw ShapeError("euclidean_terms: mid batch size differs");
    t.lh = squared_distance(mid_fwd, mid_bwd, "L_h") * inv_n;
  }
  return t;
}

double decov_side(const Matrix& a, bool centered, Matrix* grad) {
  const std::size_t n = a.cols();
  if (n == 0) throw ShapeError("decov: empty batch");
  const Matrix src = centered ? center_rows(a) : a;
  Matrix c = matmul_nt(src, src);
  c *= 1.0 / static_cast<double>(n);
  double penalty = 0.0;
  for (std::size_t p = 0; p < c.rows(); ++p) {
    c(p, p) = 0.0;
    for (double v : c.row(p)) penalty += v * v;
  }
  penalty *= 0.5;
  if (grad != nullptr) {
    // d/dA = (2/n) offdiag(C) A; for the centered variant the product already
    // has zero row means, so the centering Jacobian changes nothing.
    *grad = matmul(c, src);
    *grad *= 2.0 / static_cast<double>(n);
  }
  return penalty;
}

double decov_penalty(const Matrix& mid_fwd, const Matrix& mid_bwd, bool centered) {
  return decov_side(mid_fwd, centered) + decov_side(mid_bwd, centered);
}

double weight_decay(const TwoWayModel& model) {
  double s = 0.0;
  for (const auto& layer : model.layers()) {
    for_each_weight(layer, [&](const Matrix& w) { s += frobenius_norm_squared(w); });
  }
  return s;
}

double gamma_penalty(const TwoWayModel& model) {
  if (!model.has_batch_norm()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 1; i < model.depth(); ++i) {
    for (Direction ch : {Direction::kForward, Direction::kBackward}) {
      for (double g : model.batch_norm(ch, i).gamma) s += 1.0 / (g * g);
    }
  }
  return s;
}

LossBreakdown total_loss_and_grads(const TwoWayModel& model, const PairOutput& output,
                                   const LossWeights& weights, ModelGradients& grads,
                                   const ObjectiveOptions& options) {
  return evaluate(model, output, weights, &grads, options);
}

LossBreakdown total_loss(const TwoWayModel& model, const PairOutput& output,
                         const LossWeights& weights, const ObjectiveOptions& options) {
  return evaluate(model, output, weights, nullptr, options);
}

}  // namespace twoway
