#include "twoway/layers.hpp"

#include <cmath>
#include <string>

#include "twoway/error.hpp"

namespace twoway {
namespace {

void require_rows(const Matrix& x, std::size_t rows, const char* op) {
  if (x.rows() != rows) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(rows) +
                     " input rows, got " + std::to_string(x.rows()));
  }
}

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": operand shapes differ");
  }
}

void check_leakiness(double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw ParameterError("leaky_relu: leakiness must lie in [0, 1]");
}

}  // namespace

std::size_t LocallyDenseParams::in_dim() const noexcept {
  return blocks.empty() ? 0 : blocks.front().cols() * blocks.size();
}

std::size_t LocallyDenseParams::out_dim() const noexcept {
  return blocks.empty() ? 0 : blocks.front().rows() * blocks.size();
}

std::size_t in_dim(const TiedAffine& layer) {
  return std::visit([](const auto& p) { return p.in_dim(); }, layer);
}

std::size_t out_dim(const TiedAffine& layer) {
  return std::visit([](const auto& p) { return p.out_dim(); }, layer);
}

std::size_t input_dim(const TiedAffine& layer, Direction direction) {
  return direction == Direction::kForward ? in_dim(layer) : out_dim(layer);
}

std::size_t output_dim(const TiedAffine& layer, Direction direction) {
  return direction == Direction::kForward ? out_dim(layer) : in_dim(layer);
}

TiedAffine zeros_like(const TiedAffine& layer) {
  if (const auto* dense = std::get_if<TiedDenseParams>(&layer)) {
    return TiedDenseParams{Matrix(dense->weight.rows(), dense->weight.cols()),
                           Vector(dense->bias_forward.size(), 0.0),
                           Vector(dense->bias_backward.size(), 0.0)};
  }
  const auto& local = std::get<LocallyDenseParams>(layer);
  LocallyDenseParams out;
  for (const auto& b : local.blocks) out.blocks.emplace_back(b.rows(), b.cols());
  out.bias_forward.assign(local.bias_forward.size(), 0.0);
  out.bias_backward.assign(local.bias_backward.size(), 0.0);
  return out;
}

Matrix tied_dense_forward(const TiedDenseParams& params, const Matrix& x, Direction direction) {
  if (direction == Direction::kForward) {
    require_rows(x, params.in_dim(), "tied_dense_forward");
    Matrix out = matmul(params.weight, x);
    add_to_rows(out, params.bias_forward);
    return out;
  }
  require_rows(x, params.out_dim(), "tied_dense_forward");
  Matrix out = matmul_tn(params.weight, x);
  add_to_rows(out, params.bias_backward);
  return out;
}

Matrix tied_dense_backward(const TiedDenseParams& params, const Matrix& x, const Matrix& upstream,
                           Direction direction, TiedDenseParams& grads) {
  if (x.cols() != upstream.cols()) throw ContractError("tied_dense_backward: batch size mismatch");
  if (direction == Direction::kForward) {
    require_rows(x, params.in_dim(), "tied_dense_backward");
    require_rows(upstream, params.out_dim(), "tied_dense_backward");
    grads.weight += matmul_nt(upstream, x);
    accumulate_row_sums(upstream, grads.bias_forward);
    return matmul_tn(params.weight, upstream);
  }
  require_rows(x, params.out_dim(), "tied_dense_backward");
  require_rows(upstream, params.in_dim(), "tied_dense_backward");
  grads.weight += matmul_nt(x, upstream);
  accumulate_row_sums(upstream, grads.bias_backward);
  return matmul(params.weight, upstream);
}

LocallyDenseParams make_locally_dense(std::size_t in_dim, std::size_t out_dim, std::size_t blocks) {
  if (blocks == 0 || in_dim % blocks != 0 || out_dim % blocks != 0) {
    throw ConfigError("locally dense layer: " + std::to_string(blocks) +
                      " blocks do not divide dimensions " + std::to_string(in_dim) + " -> " +
                      std::to_string(out_dim));
  }
  LocallyDenseParams p;
  p.blocks.assign(blocks, Matrix(out_dim / blocks, in_dim / blocks));
  p.bias_forward.assign(out_dim, 0.0);
  p.bias_backward.assign(in_dim, 0.0);
  return p;
}

Matrix locally_dense_forward(const LocallyDenseParams& params, const Matrix& x,
                             Direction direction) {
  const bool fwd = direction == Direction::kForward;
  const std::size_t m = params.block_count();
  if (m == 0) throw ConfigError("locally dense layer has no blocks");
  const std::size_t in_total = fwd ? params.in_dim() : params.out_dim();
  const std::size_t out_total = fwd ? params.out_dim() : params.in_dim();
  require_rows(x, in_total, "locally_dense_forward");
  const std::size_t in_slice = in_total / m;
  const std::size_t out_slice = out_total / m;
  Matrix out(out_total, x.cols());
  for (std::size_t k = 0; k < m; ++k) {
    Matrix slice = row_block(x, k * in_slice, in_slice);
    Matrix part = fwd ? matmul(params.blocks[k], slice) : matmul_tn(params.blocks[k], slice);
    set_row_block(out, k * out_slice, part);
  }
  add_to_rows(out, fwd ? params.bias_forward : params.bias_backward);
  return out;
}

Matrix locally_dense_backward(const LocallyDenseParams& params, const Matrix& x,
                              const Matrix& upstream, Direction direction,
                              LocallyDenseParams& grads) {
  const bool fwd = direction == Direction::kForward;
  const std::size_t m = params.block_count();
  const std::size_t in_total = fwd ? params.in_dim() : params.out_dim();
  const std::size_t out_total = fwd ? params.out_dim() : params.in_dim();
  require_rows(x, in_total, "locally_dense_backward");
  require_rows(upstream, out_total, "locally_dense_backward");
  if (grads.block_count() != m) throw ContractError("locally_dense_backward: gradient shape");
  const std::size_t in_slice = in_total / m;
  const std::size_t out_slice = out_total / m;
  Matrix dx(in_total, x.cols());
  for (std::size_t k = 0; k < m; ++k) {
    Matrix xs = row_block(x, k * in_slice, in_slice);
    Matrix us = row_block(upstream, k * out_slice, out_slice);
    if (fwd) {
      grads.blocks[k] += matmul_nt(us, xs);
      set_row_block(dx, k * in_slice, matmul_tn(params.blocks[k], us));
    } else {
      grads.blocks[k] += matmul_nt(xs, us);
      set_row_block(dx, k * in_slice, matmul(params.blocks[k], us));
    }
  }
  accumulate_row_sums(upstream, fwd ? grads.bias_forward : grads.bias_backward);
  return dx;
}

Matrix block_diagonal_weight(const LocallyDenseParams& params) {
  Matrix w(params.out_dim(), params.in_dim());
  std::size_t r0 = 0;
  std::size_t c0 = 0;
  for (const auto& b : params.blocks) {
    for (std::size_t r = 0; r < b.rows(); ++r)
      for (std::size_t c = 0; c < b.cols(); ++c) w(r0 + r, c0 + c) = b(r, c);
    r0 += b.rows();
    c0 += b.cols();
  }
  return w;
}

Matrix tied_affine_forward(const TiedAffine& layer, const Matrix& x, Direction direction) {
  if (const auto* dense = std::get_if<TiedDenseParams>(&layer)) {
    return tied_dense_forward(*dense, x, direction);
  }
  return locally_dense_forward(std::get<LocallyDenseParams>(layer), x, direction);
}

Matrix tied_affine_backward(const TiedAffine& layer, const Matrix& x, const Matrix& upstream,
                            Direction direction, TiedAffine& grads) {
  if (layer.index() != grads.index()) throw ContractError("tied_affine_backward: layer kind");
  if (const auto* dense = std::get_if<TiedDenseParams>(&layer)) {
    return tied_dense_backward(*dense, x, upstream, direction, std::get<TiedDenseParams>(grads));
  }
  return locally_dense_backward(std::get<LocallyDenseParams>(layer), x, upstream, direction,
                                std::get<LocallyDenseParams>(grads));
}

Matrix leaky_relu(const Matrix& x, double leakiness) {
  check_leakiness(leakiness);
  Matrix out = x;
  for (double& v : out.values())
    if (v < 0.0) v *= leakiness;
  return out;
}

Matrix leaky_relu_backward(const Matrix& x, const Matrix& upstream, double leakiness) {
  check_leakiness(leakiness);
  require_same(x, upstream, "leaky_relu_backward");
  Matrix out = upstream;
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i)
    if (xv[i] < 0.0) ov[i] *= leakiness;
  return out;
}

BatchNormParams BatchNormParams::identity(std::size_t dim) {
  BatchNormParams p;
  p.gamma.assign(dim, 1.0);
  p.beta.assign(dim, 0.0);
  p.running_mean.assign(dim, 0.0);
  p.running_var.assign(dim, 1.0);
  return p;
}

void BatchNormParams::clamp_gamma(double min_abs) {
  for (double& g : gamma)
    if (std::abs(g) < min_abs) g = std::copysign(min_abs, g);
}

namespace {

Matrix normalize_rows(const BatchNormParams& params, const Matrix& x, const Vector& mean,
                      const Vector& var, Mode mode, BatchNormCache* cache) {
  const std::size_t d = params.dim();
  const std::size_t n = x.cols();
  Vector inv_std(d);
  for (std::size_t k = 0; k < d; ++k) inv_std[k] = 1.0 / std::sqrt(var[k] + params.epsilon);

  Matrix normalized(d, n);
  Matrix out(d, n);
  for (std::size_t k = 0; k < d; ++k) {
    auto src = x.row(k);
    auto nrm = normalized.row(k);
    auto dst = out.row(k);
    for (std::size_t i = 0; i < n; ++i) {
      nrm[i] = (src[i] - mean[k]) * inv_std[k];
      dst[i] = params.gamma[k] * nrm[i] + params.beta[k];
    }
  }
  if (cache != nullptr) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return out;
}

}  // namespace

Matrix batchnorm_eval(const BatchNormParams& params, const Matrix& x, BatchNormCache* cache) {
  require_rows(x, params.dim(), "batchnorm_eval");
  return normalize_rows(params, x, params.running_mean, params.running_var, Mode::kEval, cache);
}

Matrix batchnorm_forward(BatchNormParams& params, const Matrix& x, Mode mode,
                         BatchNormCache* cache, bool update_running) {
  if (mode == Mode::kEval) return batchnorm_eval(params, x, cache);
  const std::size_t d = params.dim();
  require_rows(x, d, "batchnorm_forward");
  if (x.cols() < 2) {
    throw ParameterError("batchnorm_forward: train mode needs a batch of at least 2");
  }
  Moments m = row_stats(x);
  if (update_running) {
    const double mom = params.updates == 0 ? 1.0 : params.momentum;
    for (std::size_t k = 0; k < d; ++k) {
      params.running_mean[k] = (1.0 - mom) * params.running_mean[k] + mom * m.means[k];
      params.running_var[k] = (1.0 - mom) * params.running_var[k] + mom * m.variances[k];
    }
    ++params.updates;
  }
  return normalize_rows(params, x, m.means, m.variances, Mode::kTrain, cache);
}

Matrix batchnorm_backward(const BatchNormParams& params, const BatchNormCache& cache,
                          const Matrix& upstream, std::span<double> dgamma,
                          std::span<double> dbeta) {
  require_same(cache.normalized, upstream, "batchnorm_backward");
  const std::size_t d = params.dim();
  if (dgamma.size() != d || dbeta.size() != d || cache.inv_std.size() != d) {
    throw ContractError("batchnorm_backward: parameter/gradient dimension mismatch");
  }
  const std::size_t n = upstream.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix dx(d, n);
  for (std::size_t k = 0; k < d; ++k) {
    auto up = upstream.row(k);
    auto xh = cache.normalized.row(k);
    double sum_up = 0.0;
    double sum_up_xh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_up += up[i];
      sum_up_xh += up[i] * xh[i];
    }
    dgamma[k] += sum_up_xh;
    dbeta[k] += sum_up;
    const double g = params.gamma[k] * cache.inv_std[k];
    auto out = dx.row(k);
    if (cache.mode == Mode::kTrain) {
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = g * (up[i] - inv_n * sum_up - xh[i] * inv_n * sum_up_xh);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) out[i] = g * up[i];
    }
  }
  return dx;
}

TiedDropoutMask draw_dropout_mask(Rng& rng, std::size_t rows, std::size_t cols, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: p must lie in [0, 1)");
  return TiedDropoutMask{rng_bernoulli(rng, rows, cols, 1.0 - p), 1.0 - p};
}

Matrix tied_dropout_apply(const TiedDropoutMask& mask, const Matrix& x, Mode mode) {
  if (mode == Mode::kEval) return x;
  require_same(mask.mask, x, "tied_dropout_apply");
  Matrix out = hadamard(x, mask.mask);
  out *= 1.0 / std::sqrt(mask.keep_prob);
  return out;
}

Matrix tied_dropout_backward(const TiedDropoutMask& mask, const Matrix& upstream, Mode mode) {
  return tied_dropout_apply(mask, upstream, mode);
}

}  // namespace twoway
