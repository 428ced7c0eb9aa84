#pragma once

// Two tied channels over one stack of layers.
//
// Layer i (1-based) maps interface i-1 to interface i in the forward channel
// (X -> Y) and interface i back to interface i-1 in the backward channel
// (Y -> X), using the same weights transposed. Interface 0 is the X view and
// interface k the Y view. Every hidden interface 1..k-1 runs a block of
// leaky ReLU, batch normalization and dropout on each channel; the terminal
// affine output of each channel is the reconstruction and gets none of them.
// The two channels meet at the mid interface j = ceil(k/2).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "twoway/layers.hpp"
#include "twoway/linalg.hpp"

namespace twoway {

enum class BnPlacement { kNone, kBeforeActivation, kAfterActivation };
enum class DropoutKind { kNone, kConventional, kTied };
// Which mid-interface activations feed the mid loss and the decorrelation term.
enum class MidTap { kPostDropout, kPreDropout };

struct ModelConfig {
  std::vector<std::size_t> dims;    // d_0 = d_x, d_1, ..., d_k = d_y
  std::vector<std::size_t> blocks;  // block count per layer (1 = dense); empty means all dense
  double leakiness = 0.3;
  double dropout_p = 0.5;
  DropoutKind dropout = DropoutKind::kTied;
  BnPlacement batch_norm = BnPlacement::kAfterActivation;
  MidTap mid_tap = MidTap::kPostDropout;

  std::size_t depth() const noexcept { return dims.empty() ? 0 : dims.size() - 1; }
  std::size_t blocks_for_layer(std::size_t layer) const;  // 1-based layer index
  // Throws ConfigError on any inconsistency.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class TwoWayModel {
 public:
  // Gaussian weights with std sqrt(2 / (fan_in + fan_out)), zero biases,
  // gamma = 1, beta = 0. Emits a warning when k = 1 (no mid loss).
  static TwoWayModel create(ModelConfig config, Rng& rng);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t depth() const noexcept { return config_.depth(); }
  std::size_t mid_index() const noexcept { return (depth() + 1) / 2; }
  bool has_mid_loss() const noexcept { return depth() >= 2; }
  std::size_t dim(std::size_t interface) const { return config_.dims.at(interface); }
  bool has_batch_norm() const noexcept { return config_.batch_norm != BnPlacement::kNone; }

  // 1-based layer index.
  TiedAffine& layer(std::size_t i) { return layers_.at(i - 1); }
  const TiedAffine& layer(std::size_t i) const { return layers_.at(i - 1); }
  std::span<TiedAffine> layers() noexcept { return layers_; }
  std::span<const TiedAffine> layers() const noexcept { return layers_; }

  // Batch norm of the given channel at hidden interface 1..k-1.
  BatchNormParams& batch_norm(Direction channel, std::size_t interface);
  const BatchNormParams& batch_norm(Direction channel, std::size_t interface) const;

  // Incremented by every parameter update; traces remember the version they
  // were produced under.
  std::uint64_t version() const noexcept { return version_; }
  void mark_updated() noexcept { ++version_; }

  friend bool operator==(const TwoWayModel&, const TwoWayModel&);

 private:
  ModelConfig config_;
  std::vector<TiedAffine> layers_;
  std::vector<BatchNormParams> bn_forward_;   // index i-1 for interface i
  std::vector<BatchNormParams> bn_backward_;
  std::uint64_t version_ = 0;
};

// Hidden-block intermediates of one channel at one interface.
struct BlockTrace {
  Matrix affine;            // output of the tied affine map
  Matrix activation_input;  // argument of the leaky ReLU
  BatchNormCache bn;        // unused when batch norm is off
  Matrix pre_dropout;
  Matrix output;
};

struct ChannelTrace {
  std::vector<Matrix> layer_inputs;  // [i-1] = what layer i consumed on this channel
  std::vector<BlockTrace> blocks;    // [i-1] = hidden interface i
  Matrix output;                     // reconstruction
};

// Dropout masks per hidden interface ([i-1] = interface i). Under tied dropout
// both sequences hold the same masks.
struct DropoutMasks {
  std::vector<TiedDropoutMask> forward;
  std::vector<TiedDropoutMask> backward;
};

struct ForwardTrace {
  Matrix x;
  Matrix y;
  ChannelTrace forward;
  ChannelTrace backward;
  DropoutMasks masks;  // empty without dropout or in eval mode
  Mode mode = Mode::kEval;
  std::uint64_t model_version = 0;
};

struct PairOutput {
  Matrix x_recon;       // backward channel applied to y
  Matrix y_recon;       // forward channel applied to x
  Matrix mid_forward;   // forward channel at interface j (d_j x n)
  Matrix mid_backward;  // backward channel at interface j
  ForwardTrace trace;
};

struct ForwardOptions {
  Mode mode = Mode::kEval;
  Rng* rng = nullptr;                   // draws dropout masks in train mode
  const DropoutMasks* masks = nullptr;  // replays fixed masks instead of drawing
  bool update_running_stats = true;
};

// Runs x through the forward channel and y through the backward channel.
// In train mode each interface's mask is drawn once per call (and shared by
// both channels under tied dropout) and batch-norm running statistics are
// updated. Throws ShapeError on dimension or batch-size mismatch.
PairOutput forward_pair(TwoWayModel& model, const Matrix& x, const Matrix& y,
                        const ForwardOptions& options);

// Eval-mode single-channel encoders. `until` is the interface at which to
// stop; inputs are processed in column chunks of `chunk` samples.
Matrix run_forward_channel(const TwoWayModel& model, const Matrix& x, std::size_t until,
                           std::size_t chunk = 4096);
Matrix run_backward_channel(const TwoWayModel& model, const Matrix& y, std::size_t until,
                            std::size_t chunk = 4096);
Matrix encode_mid_forward(const TwoWayModel& model, const Matrix& x);
Matrix encode_mid_backward(const TwoWayModel& model, const Matrix& y);

// Shaped like the trainable parameters of a model, for gradients and momentum.
struct BatchNormGrad {
  Vector gamma;
  Vector beta;
};

struct ModelGradients {
  std::vector<TiedAffine> layers;
  std::vector<BatchNormGrad> bn_forward;
  std::vector<BatchNormGrad> bn_backward;

  static ModelGradients zeros_like(const TwoWayModel& model);
};

// Loss gradients arriving at the outputs of forward_pair.
struct OutputGradients {
  Matrix x_recon;
  Matrix y_recon;
  Matrix mid_forward;   // empty when the mid interface receives no gradient
  Matrix mid_backward;
};

// Reverse-mode pass through both channels. Accumulates into `grads`; the tied
// weights receive the sum of both channels' contributions. Throws
// ContractError if the trace is not a train-mode trace of the current model.
void backward_pair(const TwoWayModel& model, const ForwardTrace& trace,
                   const OutputGradients& output_grads, ModelGradients& grads);

struct ParameterView {
  std::string name;
  std::span<double> values;
};

// Every trainable array exactly once, in a fixed order:
// layer{i}.weight (or layer{i}.block{b}.weight), layer{i}.bias_forward,
// layer{i}.bias_backward, then for hidden interfaces with batch norm
// bn{i}.forward.gamma, bn{i}.forward.beta, bn{i}.backward.gamma,
// bn{i}.backward.beta.
std::vector<ParameterView> parameter_registry(TwoWayModel& model);
// Same names and order as parameter_registry(model) for the matching model.
std::vector<ParameterView> parameter_registry(ModelGradients& grads);
std::size_t parameter_count(const TwoWayModel& model);

// Per-view affine input transform stored with a checkpoint:
// x' = (x - shift) * scale, applied feature-wise. Empty vectors mean identity.
struct InputTransform {
  Vector shift_x;
  Vector scale_x;
  Vector shift_y;
  Vector scale_y;

  bool empty() const noexcept { return shift_x.empty() && shift_y.empty(); }
  friend bool operator==(const InputTransform&, const InputTransform&) = default;
};

struct Checkpoint {
  TwoWayModel model;
  InputTransform input_transform;
};

// Versioned little-endian binary container: layer dims, hyperparameters,
// every parameter array in registry order, batch-norm running statistics and
// the input transform. A save/load round trip is bit-exact.
void save_checkpoint(std::ostream& out, const TwoWayModel& model,
                     const InputTransform& transform = {});
void save_checkpoint(const std::string& path, const TwoWayModel& model,
                     const InputTransform& transform = {});
// Throws FormatError on a malformed or truncated stream.
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::string& path);

std::string to_string(BnPlacement placement);
std::string to_string(DropoutKind kind);
std::string to_string(MidTap tap);

}  // namespace twoway
