#include "twoway/network.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "twoway/error.hpp"
#include "twoway/log.hpp"

namespace twoway {
namespace {

Matrix init_weight(Rng& rng, std::size_t rows, std::size_t cols) {
  const double std = std::sqrt(2.0 / static_cast<double>(rows + cols));
  return rng_gaussian(rng, rows, cols, 0.0, std);
}

void set_column_block(Matrix& dst, std::size_t first, const Matrix& src) {
  for (std::size_t r = 0; r < dst.rows(); ++r) {
    auto s = src.row(r);
    std::copy(s.begin(), s.end(), dst.row(r).begin() + static_cast<std::ptrdiff_t>(first));
  }
}

Matrix apply_batch_norm(BatchNormParams* mutable_bn, const BatchNormParams& bn, const Matrix& v,
                        Mode mode, bool update, BatchNormCache* cache) {
  if (mode == Mode::kTrain) {
    if (mutable_bn == nullptr) throw ContractError("train-mode batch norm needs a mutable model");
    return batchnorm_forward(*mutable_bn, v, Mode::kTrain, cache, update);
  }
  return batchnorm_eval(bn, v, cache);
}

// Hidden block on one channel: leaky ReLU, batch norm (before or after the
// activation, or none), then dropout.
Matrix run_block(const ModelConfig& config, BatchNormParams* mutable_bn, const BatchNormParams* bn,
                 Matrix z, Mode mode, bool update, const TiedDropoutMask* mask,
                 BlockTrace* trace) {
  Matrix activation_input;
  Matrix pre_dropout;
  BatchNormCache* cache = trace != nullptr ? &trace->bn : nullptr;
  switch (config.batch_norm) {
    case BnPlacement::kAfterActivation:
      pre_dropout = apply_batch_norm(mutable_bn, *bn, leaky_relu(z, config.leakiness), mode,
                                     update, cache);
      if (trace != nullptr) activation_input = z;
      break;
    case BnPlacement::kBeforeActivation:
      activation_input = apply_batch_norm(mutable_bn, *bn, z, mode, update, cache);
      pre_dropout = leaky_relu(activation_input, config.leakiness);
      break;
    case BnPlacement::kNone:
      pre_dropout = leaky_relu(z, config.leakiness);
      if (trace != nullptr) activation_input = z;
      break;
  }
  Matrix out = (mask != nullptr && mode == Mode::kTrain)
                   ? tied_dropout_apply(*mask, pre_dropout, Mode::kTrain)
                   : pre_dropout;
  if (trace != nullptr) {
    trace->affine = std::move(z);
    trace->activation_input = std::move(activation_input);
    trace->pre_dropout = std::move(pre_dropout);
    trace->output = out;
  }
  return out;
}

// Gradient w.r.t. the block's affine input, given the gradient at the block
// output and an optional extra gradient arriving at the pre-dropout value.
Matrix block_backward(const ModelConfig& config, const BatchNormParams* bn,
                      const BlockTrace& trace, const TiedDropoutMask* mask, Matrix grad,
                      const Matrix* pre_dropout_grad, BatchNormGrad* bn_grad) {
  if (mask != nullptr) grad = tied_dropout_backward(*mask, grad, Mode::kTrain);
  if (pre_dropout_grad != nullptr) grad += *pre_dropout_grad;
  switch (config.batch_norm) {
    case BnPlacement::kAfterActivation:
      grad = batchnorm_backward(*bn, trace.bn, grad, bn_grad->gamma, bn_grad->beta);
      return leaky_relu_backward(trace.activation_input, grad, config.leakiness);
    case BnPlacement::kBeforeActivation:
      grad = leaky_relu_backward(trace.activation_input, grad, config.leakiness);
      return batchnorm_backward(*bn, trace.bn, grad, bn_grad->gamma, bn_grad->beta);
    case BnPlacement::kNone:
      break;
  }
  return leaky_relu_backward(trace.activation_input, grad, config.leakiness);
}

void require_dims(const Matrix& m, std::size_t rows, const char* what) {
  if (m.rows() != rows) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + " rows, got " +
                     std::to_string(m.rows()));
  }
}

template <class Layers, class Bn>
void collect_parameters(Layers& layers, Bn& bn_forward, Bn& bn_backward,
                        std::vector<ParameterView>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i + 1);
    auto& layer = layers[i];
    if (auto* dense = std::get_if<TiedDenseParams>(&layer)) {
      out.push_back({prefix + ".weight", dense->weight.values()});
      out.push_back({prefix + ".bias_forward", dense->bias_forward});
      out.push_back({prefix + ".bias_backward", dense->bias_backward});
    } else {
      auto& local = std::get<LocallyDenseParams>(layer);
      for (std::size_t b = 0; b < local.blocks.size(); ++b) {
        out.push_back({prefix + ".block" + std::to_string(b) + ".weight",
                       local.blocks[b].values()});
      }
      out.push_back({prefix + ".bias_forward", local.bias_forward});
      out.push_back({prefix + ".bias_backward", local.bias_backward});
    }
    if (i < bn_forward.size()) {
      const std::string bn = "bn" + std::to_string(i + 1);
      out.push_back({bn + ".forward.gamma", bn_forward[i].gamma});
      out.push_back({bn + ".forward.beta", bn_forward[i].beta});
      out.push_back({bn + ".backward.gamma", bn_backward[i].gamma});
      out.push_back({bn + ".backward.beta", bn_backward[i].beta});
    }
  }
}

}  // namespace

std::size_t ModelConfig::blocks_for_layer(std::size_t layer) const {
  if (blocks.empty()) return 1;
  return blocks.at(layer - 1);
}

void ModelConfig::validate() const {
  if (dims.size() < 2) throw ConfigError("model needs at least two dims (d_x and d_y)");
  for (std::size_t d : dims)
    if (d == 0) throw ConfigError("model dims must be positive");
  if (!blocks.empty() && blocks.size() != depth()) {
    throw ConfigError("model blocks: expected one entry per layer (" + std::to_string(depth()) +
                      "), got " + std::to_string(blocks.size()));
  }
  for (std::size_t i = 1; i <= depth(); ++i) {
    const std::size_t m = blocks_for_layer(i);
    if (m == 0 || dims[i - 1] % m != 0 || dims[i] % m != 0) {
      throw ConfigError("layer " + std::to_string(i) + ": " + std::to_string(m) +
                        " blocks do not divide " + std::to_string(dims[i - 1]) + " -> " +
                        std::to_string(dims[i]));
    }
  }
  if (!(leakiness >= 0.0 && leakiness <= 1.0)) throw ConfigError("leakiness must lie in [0, 1]");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout p must lie in [0, 1)");
}

TwoWayModel TwoWayModel::create(ModelConfig config, Rng& rng) {
  config.validate();
  TwoWayModel model;
  model.config_ = std::move(config);
  const auto& dims = model.config_.dims;
  const std::size_t k = model.depth();
  for (std::size_t i = 1; i <= k; ++i) {
    const std::size_t m = model.config_.blocks_for_layer(i);
    if (m == 1) {
      model.layers_.push_back(TiedDenseParams{init_weight(rng, dims[i], dims[i - 1]),
                                              Vector(dims[i], 0.0), Vector(dims[i - 1], 0.0)});
    } else {
      LocallyDenseParams local = make_locally_dense(dims[i - 1], dims[i], m);
      for (auto& block : local.blocks) block = init_weight(rng, block.rows(), block.cols());
      model.layers_.push_back(std::move(local));
    }
  }
  if (model.has_batch_norm()) {
    for (std::size_t i = 1; i < k; ++i) {
      model.bn_forward_.push_back(BatchNormParams::identity(dims[i]));
      model.bn_backward_.push_back(BatchNormParams::identity(dims[i]));
    }
  }
  if (k == 1) log::warn("model has a single layer: mid-network loss and decov are disabled");
  return model;
}

BatchNormParams& TwoWayModel::batch_norm(Direction channel, std::size_t interface) {
  auto& v = channel == Direction::kForward ? bn_forward_ : bn_backward_;
  if (interface == 0 || interface > v.size()) {
    throw ContractError("no batch norm at interface " + std::to_string(interface));
  }
  return v[interface - 1];
}

const BatchNormParams& TwoWayModel::batch_norm(Direction channel, std::size_t interface) const {
  return const_cast<TwoWayModel*>(this)->batch_norm(channel, interface);
}

bool operator==(const TwoWayModel& a, const TwoWayModel& b) {
  return a.config_ == b.config_ && a.layers_ == b.layers_ && a.bn_forward_ == b.bn_forward_ &&
         a.bn_backward_ == b.bn_backward_;
}

PairOutput forward_pair(TwoWayModel& model, const Matrix& x, const Matrix& y,
                        const ForwardOptions& options) {
  const ModelConfig& cfg = model.config();
  const std::size_t k = model.depth();
  const std::size_t j = model.mid_index();
  require_dims(x, model.dim(0), "forward_pair x");
  require_dims(y, model.dim(k), "forward_pair y");
  if (x.cols() != y.cols()) throw ShapeError("forward_pair: x and y batch sizes differ");
  const std::size_t n = x.cols();
  const Mode mode = options.mode;

  PairOutput out;
  ForwardTrace& trace = out.trace;
  trace.mode = mode;
  trace.model_version = model.version();
  trace.x = x;
  trace.y = y;
  trace.forward.layer_inputs.resize(k);
  trace.backward.layer_inputs.resize(k);
  trace.forward.blocks.resize(k - 1);
  trace.backward.blocks.resize(k - 1);

  const bool use_dropout =
      mode == Mode::kTrain && cfg.dropout != DropoutKind::kNone && k >= 2;
  if (use_dropout) {
    if (options.masks != nullptr) {
      trace.masks = *options.masks;
      if (trace.masks.forward.size() != k - 1 || trace.masks.backward.size() != k - 1) {
        throw ContractError("forward_pair: replayed masks do not match the hidden interfaces");
      }
    } else {
      if (options.rng == nullptr) throw ContractError("forward_pair: train mode needs an rng");
      for (std::size_t i = 1; i < k; ++i) {
        trace.masks.forward.push_back(
            draw_dropout_mask(*options.rng, model.dim(i), n, cfg.dropout_p));
        if (cfg.dropout == DropoutKind::kTied) {
          trace.masks.backward.push_back(trace.masks.forward.back());
        } else {
          trace.masks.backward.push_back(
              draw_dropout_mask(*options.rng, model.dim(i), n, cfg.dropout_p));
        }
      }
    }
  }
  const bool bn = model.has_batch_norm();
  auto mask_at = [&](const std::vector<TiedDropoutMask>& masks,
                     std::size_t interface) -> const TiedDropoutMask* {
    return masks.empty() ? nullptr : &masks[interface - 1];
  };

  // Forward channel: layers 1..k.
  Matrix a = x;
  for (std::size_t i = 1; i <= k; ++i) {
    Matrix z = tied_affine_forward(model.layer(i), a, Direction::kForward);
    trace.forward.layer_inputs[i - 1] = std::move(a);
    if (i == k) {
      a = std::move(z);
      break;
    }
    BlockTrace& bt = trace.forward.blocks[i - 1];
    BatchNormParams* bnp = bn ? &model.batch_norm(Direction::kForward, i) : nullptr;
    a = run_block(cfg, bnp, bnp, std::move(z), mode, options.update_running_stats,
                  mask_at(trace.masks.forward, i), &bt);
  }
  trace.forward.output = a;
  out.y_recon = std::move(a);

  // Backward channel: layers k..1.
  Matrix b = y;
  for (std::size_t i = k; i >= 1; --i) {
    Matrix z = tied_affine_forward(model.layer(i), b, Direction::kBackward);
    trace.backward.layer_inputs[i - 1] = std::move(b);
    if (i == 1) {
      b = std::move(z);
      break;
    }
    BlockTrace& bt = trace.backward.blocks[i - 2];
    BatchNormParams* bnp = bn ? &model.batch_norm(Direction::kBackward, i - 1) : nullptr;
    b = run_block(cfg, bnp, bnp, std::move(z), mode, options.update_running_stats,
                  mask_at(trace.masks.backward, i - 1), &bt);
  }
  trace.backward.output = b;
  out.x_recon = std::move(b);

  if (model.has_mid_loss()) {
    const bool pre = cfg.mid_tap == MidTap::kPreDropout;
    const BlockTrace& f = trace.forward.blocks[j - 1];
    const BlockTrace& g = trace.backward.blocks[j - 1];
    out.mid_forward = pre ? f.pre_dropout : f.output;
    out.mid_backward = pre ? g.pre_dropout : g.output;
  }
  return out;
}

Matrix run_forward_channel(const TwoWayModel& model, const Matrix& x, std::size_t until,
                           std::size_t chunk) {
  const std::size_t k = model.depth();
  if (until == 0 || until > k) throw ParameterError("run_forward_channel: bad target interface");
  require_dims(x, model.dim(0), "run_forward_channel");
  const bool bn = model.has_batch_norm();
  Matrix out(model.dim(until), x.cols());
  for (std::size_t first = 0; first < x.cols(); first += chunk) {
    const std::size_t count = std::min(chunk, x.cols() - first);
    Matrix a = column_block(x, first, count);
    for (std::size_t i = 1; i <= until; ++i) {
      Matrix z = tied_affine_forward(model.layer(i), a, Direction::kForward);
      if (i == k) {
        a = std::move(z);
        break;
      }
      const BatchNormParams* bnp = bn ? &model.batch_norm(Direction::kForward, i) : nullptr;
      a = run_block(model.config(), nullptr, bnp, std::move(z), Mode::kEval, false, nullptr,
                    nullptr);
    }
    set_column_block(out, first, a);
  }
  return out;
}

Matrix run_backward_channel(const TwoWayModel& model, const Matrix& y, std::size_t until,
                            std::size_t chunk) {
  const std::size_t k = model.depth();
  if (until >= k) throw ParameterError("run_backward_channel: bad target interface");
  require_dims(y, model.dim(k), "run_backward_channel");
  const bool bn = model.has_batch_norm();
  Matrix out(model.dim(until), y.cols());
  for (std::size_t first = 0; first < y.cols(); first += chunk) {
    const std::size_t count = std::min(chunk, y.cols() - first);
    Matrix b = column_block(y, first, count);
    for (std::size_t i = k; i > until; --i) {
      Matrix z = tied_affine_forward(model.layer(i), b, Direction::kBackward);
      if (i == 1) {
        b = std::move(z);
        break;
      }
      const BatchNormParams* bnp = bn ? &model.batch_norm(Direction::kBackward, i - 1) : nullptr;
      b = run_block(model.config(), nullptr, bnp, std::move(z), Mode::kEval, false, nullptr,
                    nullptr);
    }
    set_column_block(out, first, b);
  }
  return out;
}

Matrix encode_mid_forward(const TwoWayModel& model, const Matrix& x) {
  if (!model.has_mid_loss()) throw ContractError("model has no mid interface");
  return run_forward_channel(model, x, model.mid_index());
}

Matrix encode_mid_backward(const TwoWayModel& model, const Matrix& y) {
  if (!model.has_mid_loss()) throw ContractError("model has no mid interface");
  return run_backward_channel(model, y, model.mid_index());
}

ModelGradients ModelGradients::zeros_like(const TwoWayModel& model) {
  ModelGradients g;
  for (const auto& layer : model.layers()) g.layers.push_back(twoway::zeros_like(layer));
  if (model.has_batch_norm()) {
    for (std::size_t i = 1; i < model.depth(); ++i) {
      g.bn_forward.push_back({Vector(model.dim(i), 0.0), Vector(model.dim(i), 0.0)});
      g.bn_backward.push_back({Vector(model.dim(i), 0.0), Vector(model.dim(i), 0.0)});
    }
  }
  return g;
}

void backward_pair(const TwoWayModel& model, const ForwardTrace& trace,
                   const OutputGradients& output_grads, ModelGradients& grads) {
  if (trace.mode != Mode::kTrain) throw ContractError("backward_pair: trace is not train mode");
  if (trace.model_version != model.version()) {
    throw ContractError("backward_pair: trace is stale (model updated since forward pass)");
  }
  const std::size_t k = model.depth();
  if (trace.forward.layer_inputs.size() != k || grads.layers.size() != k) {
    throw ContractError("backward_pair: trace/gradient structure does not match model");
  }
  const ModelConfig& cfg = model.config();
  const std::size_t j = model.mid_index();
  const bool bn = model.has_batch_norm();
  const bool pre_tap = cfg.mid_tap == MidTap::kPreDropout;
  auto mask_at = [](const std::vector<TiedDropoutMask>& masks,
                    std::size_t interface) -> const TiedDropoutMask* {
    return masks.empty() ? nullptr : &masks[interface - 1];
  };

  // Forward channel, from the Y reconstruction back to x.
  {
    Matrix g = output_grads.y_recon;
    for (std::size_t i = k; i >= 1; --i) {
      g = tied_affine_backward(model.layer(i), trace.forward.layer_inputs[i - 1], g,
                               Direction::kForward, grads.layers[i - 1]);
      if (i == 1) break;
      const std::size_t iface = i - 1;
      const Matrix* pre_extra = nullptr;
      if (iface == j && !output_grads.mid_forward.empty()) {
        if (pre_tap) {
          pre_extra = &output_grads.mid_forward;
        } else {
          g += output_grads.mid_forward;
        }
      }
      g = block_backward(cfg, bn ? &model.batch_norm(Direction::kForward, iface) : nullptr,
                         trace.forward.blocks[iface - 1], mask_at(trace.masks.forward, iface),
                         std::move(g), pre_extra, bn ? &grads.bn_forward[iface - 1] : nullptr);
    }
  }

  // Backward channel, from the X reconstruction back to y.
  {
    Matrix g = output_grads.x_recon;
    for (std::size_t i = 1; i <= k; ++i) {
      g = tied_affine_backward(model.layer(i), trace.backward.layer_inputs[i - 1], g,
                               Direction::kBackward, grads.layers[i - 1]);
      if (i == k) break;
      const std::size_t iface = i;
      const Matrix* pre_extra = nullptr;
      if (iface == j && !output_grads.mid_backward.empty()) {
        if (pre_tap) {
          pre_extra = &output_grads.mid_backward;
        } else {
          g += output_grads.mid_backward;
        }
      }
      g = block_backward(cfg, bn ? &model.batch_norm(Direction::kBackward, iface) : nullptr,
                         trace.backward.blocks[iface - 1], mask_at(trace.masks.backward, iface),
                         std::move(g), pre_extra, bn ? &grads.bn_backward[iface - 1] : nullptr);
    }
  }
}

std::vector<ParameterView> parameter_registry(TwoWayModel& model) {
  std::vector<ParameterView> out;
  struct BnRef {
    std::span<double> gamma;
    std::span<double> beta;
  };
  std::vector<BnRef> fwd;
  std::vector<BnRef> bwd;
  if (model.has_batch_norm()) {
    for (std::size_t i = 1; i < model.depth(); ++i) {
      auto& f = model.batch_norm(Direction::kForward, i);
      auto& b = model.batch_norm(Direction::kBackward, i);
      fwd.push_back({f.gamma, f.beta});
      bwd.push_back({b.gamma, b.beta});
    }
  }
  auto layers = model.layers();
  collect_parameters(layers, fwd, bwd, out);
  return out;
}

std::vector<ParameterView> parameter_registry(ModelGradients& grads) {
  std::vector<ParameterView> out;
  collect_parameters(grads.layers, grads.bn_forward, grads.bn_backward, out);
  return out;
}

std::size_t parameter_count(const TwoWayModel& model) {
  std::size_t total = 0;
  for (const auto& view : parameter_registry(const_cast<TwoWayModel&>(model))) {
    total += view.values.size();
  }
  return total;
}

std::string to_string(BnPlacement placement) {
  switch (placement) {
    case BnPlacement::kNone:
      return "none";
    case BnPlacement::kBeforeActivation:
      return "before";
    case BnPlacement::kAfterActivation:
      return "after";
  }
  return "?";
}

std::string to_string(DropoutKind kind) {
  switch (kind) {
    case DropoutKind::kNone:
      return "none";
    case DropoutKind::kConventional:
      return "conventional";
    case DropoutKind::kTied:
      return "tied";
  }
  return "?";
}

std::string to_string(MidTap tap) {
  return tap == MidTap::kPostDropout ? "post_dropout" : "pre_dropout";
}

}  // namespace twoway
