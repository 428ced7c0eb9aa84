#include "twoway/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "twoway/error.hpp"
#include "twoway/evaluation.hpp"

namespace twoway {
namespace {

constexpr double kDivergenceLimit = 1e12;

void guard(const char* term, double value, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(value) || std::abs(value) > kDivergenceLimit) {
    std::ostringstream msg;
    msg << "training diverged at epoch " << epoch << ", batch " << batch << ": " << term << " = "
        << value;
    throw DivergenceError(msg.str());
  }
}

void zero(ModelGradients& g) {
  for (auto& view : parameter_registry(g)) std::fill(view.values.begin(), view.values.end(), 0.0);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  weights.validate();
}

double lr_at_epoch(const TrainConfig& config, std::size_t epoch) {
  if (config.halve_every == 0) return config.learning_rate;
  return config.learning_rate * std::ldexp(1.0, -static_cast<int>(epoch / config.halve_every));
}

void sgd_momentum_step(std::span<const ParameterView> params, std::span<const ParameterView> grads,
                       std::span<const ParameterView> velocity, double lr, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ContractError("sgd_momentum_step: registries differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const auto& g = grads[i];
    const auto& v = velocity[i];
    if (p.name != g.name || p.name != v.name || p.values.size() != g.values.size() ||
        p.values.size() != v.values.size()) {
      throw ContractError("sgd_momentum_step: registries misaligned at " + p.name);
    }
    for (std::size_t q = 0; q < p.values.size(); ++q) {
      v.values[q] = momentum * v.values[q] - lr * g.values[q];
      p.values[q] += v.values[q];
    }
  }
}

void sgd_momentum_step(TwoWayModel& model, ModelGradients& grads, ModelGradients& velocity,
                       double lr, double momentum) {
  const auto p = parameter_registry(model);
  const auto g = parameter_registry(grads);
  const auto v = parameter_registry(velocity);
  sgd_momentum_step(p, g, v, lr, momentum);
  if (model.has_batch_norm()) {
    for (std::size_t i = 1; i < model.depth(); ++i) {
      model.batch_norm(Direction::kForward, i).clamp_gamma();
      model.batch_norm(Direction::kBackward, i).clamp_gamma();
    }
  }
  model.mark_updated();
}

void write_metrics_header(std::ostream& out) {
  out << "epoch,lx,ly,lh,rw,rdecov,rgamma,var_mid_fwd,var_mid_bwd,corr_train,corr_val,seconds\n";
}

void write_metrics_row(std::ostream& out, const MetricsRecord& r) {
  std::ostringstream line;
  line << std::setprecision(17) << r.epoch << ',' << r.lx << ',' << r.ly << ',' << r.lh << ','
       << r.rw << ',' << r.rdecov << ',' << r.rgamma << ',' << r.var_mid_fwd << ','
       << r.var_mid_bwd << ',' << r.corr_train << ',' << r.corr_val << ',' << r.seconds << '\n';
  out << line.str();
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write metrics file " + path);
  write_metrics_header(out);
  for (const auto& r : records) write_metrics_row(out, r);
}

MidSummary summarize_mid(const TwoWayModel& model, const Matrix& x, const Matrix& y) {
  MidSummary s;
  if (!model.has_mid_loss() || x.cols() == 0) return s;
  const Matrix f = encode_mid_forward(model, x);
  const Matrix b = encode_mid_backward(model, y);
  s.var_fwd = mean_row_variance(f);
  s.var_bwd = mean_row_variance(b);
  s.corr = neuronwise_corr_sum(f, b);
  return s;
}

TrainResult train(TwoWayModel& model, const PairedDataset& data, const TrainConfig& config,
                  const TrainCallbacks& callbacks) {
  config.validate();
  data.validate();
  if (data.dim_x() != model.dim(0) || data.dim_y() != model.dim(model.depth())) {
    throw ShapeError("dataset dims (" + std::to_string(data.dim_x()) + ", " +
                     std::to_string(data.dim_y()) + ") do not match the model");
  }
  const auto train_idx = data.indices(Split::kTrain);
  const auto val_idx = data.indices(Split::kValidation);
  if (config.epochs > 0 && train_idx.size() < config.batch_size) {
    throw ParameterError("training split (" + std::to_string(train_idx.size()) +
                         " columns) is smaller than one batch");
  }
  const Matrix train_x = gather_columns(data.x, train_idx);
  const Matrix train_y = gather_columns(data.y, train_idx);
  const Matrix val_x = gather_columns(data.x, val_idx);
  const Matrix val_y = gather_columns(data.y, val_idx);

  TrainResult result{model, 0, {}};
  double best_score = -std::numeric_limits<double>::infinity();

  Rng shuffle_rng(config.seed);
  Rng mask_rng = shuffle_rng.split();
  ModelGradients grads = ModelGradients::zeros_like(model);
  ModelGradients velocity = ModelGradients::zeros_like(model);
  std::vector<std::size_t> order(train_x.cols());
  const std::size_t batches = train_x.cols() / config.batch_size;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);
    MetricsRecord rec;
    rec.epoch = epoch + 1;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::span<const std::size_t> cols(order.data() + b * config.batch_size,
                                              config.batch_size);
      const Matrix xb = gather_columns(train_x, cols);
      const Matrix yb = gather_columns(train_y, cols);
      LossBreakdown loss;
      try {
        ForwardOptions fo;
        fo.mode = Mode::kTrain;
        fo.rng = &mask_rng;
        const PairOutput out = forward_pair(model, xb, yb, fo);
        zero(grads);
        loss = total_loss_and_grads(model, out, config.weights, grads, config.objective);
      } catch (const DivergenceError&) {
        throw;
      } catch (const NumericError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch + 1) +
                              ", batch " + std::to_string(b) + ": " + e.what());
      }
      guard("lx", loss.lx, epoch + 1, b);
      guard("ly", loss.ly, epoch + 1, b);
      guard("lh", loss.lh, epoch + 1, b);
      guard("rw", loss.rw, epoch + 1, b);
      guard("rdecov", loss.rdecov, epoch + 1, b);
      guard("rgamma", loss.rgamma, epoch + 1, b);
      guard("total", loss.total, epoch + 1, b);
      sgd_momentum_step(model, grads, velocity, lr, config.momentum);
      rec.lx += loss.lx;
      rec.ly += loss.ly;
      rec.lh += loss.lh;
      rec.rw += loss.rw;
      rec.rdecov += loss.rdecov;
      rec.rgamma += loss.rgamma;
    }
    const double inv_b = 1.0 / static_cast<double>(batches);
    rec.lx *= inv_b;
    rec.ly *= inv_b;
    rec.lh *= inv_b;
    rec.rw *= inv_b;
    rec.rdecov *= inv_b;
    rec.rgamma *= inv_b;

    const MidSummary tr = summarize_mid(model, train_x, train_y);
    rec.var_mid_fwd = tr.var_fwd;
    rec.var_mid_bwd = tr.var_bwd;
    rec.corr_train = tr.corr;
    rec.corr_val = val_idx.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : summarize_mid(model, val_x, val_y).corr;
    if (config.wall_clock) {
      rec.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    const double score = val_idx.empty() ? rec.corr_train : rec.corr_val;
    if (std::isfinite(score) && score > best_score) {
      best_score = score;
      result.best_model = model;
      result.best_epoch = rec.epoch;
      if (callbacks.on_best) callbacks.on_best(model, rec);
    }
    result.history.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
  }
  return result;
}

}  // namespace twoway
