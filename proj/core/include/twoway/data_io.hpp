#pragma once

// Paired two-view datasets: MNIST half images, a binary paired-views
// container, a synthetic generator with known canonical correlations, and
// train-split preprocessing.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "twoway/linalg.hpp"
#include "twoway/network.hpp"

namespace twoway {

enum class Split : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };

std::string to_string(Split split);

// Column i of x and column i of y form one pair; splits[i] tags it.
struct PairedDataset {
  Matrix x;  // d_x x n
  Matrix y;  // d_y x n
  std::vector<Split> splits;
  std::vector<std::uint8_t> labels;  // optional class labels, empty if unknown

  std::size_t size() const noexcept { return x.cols(); }
  std::size_t dim_x() const noexcept { return x.rows(); }
  std::size_t dim_y() const noexcept { return y.rows(); }
  std::size_t count(Split split) const;
  std::vector<std::size_t> indices(Split split) const;

  // Throws ShapeError if the pieces disagree on n.
  void validate() const;
};

// Columns in the given order (labels and tags follow).
PairedDataset select_columns(const PairedDataset& data, std::span<const std::size_t> indices);
PairedDataset subset(const PairedDataset& data, Split split);
// Applies one random permutation to x, y, tags and labels alike.
void shuffle_columns(PairedDataset& data, Rng& rng);
// Concatenates datasets column-wise; all must share d_x and d_y.
PairedDataset concatenate(std::span<const PairedDataset> parts);

struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major per image
};

// Big-endian IDX readers. Throw FormatError naming the byte offset on a bad
// magic number or truncation.
IdxImages read_idx_images(const std::string& path);
std::vector<std::uint8_t> read_idx_labels(const std::string& path);

enum class HalfCut { kLeftRight, kTopBottom };

// Splits every image into two halves (left/right at the middle column by
// default), flattens each row-major and scales pixels to [0, 1]. X holds the
// first half, Y the second. All columns are tagged kTrain.
PairedDataset mnist_halves(const IdxImages& images, HalfCut cut = HalfCut::kLeftRight);
PairedDataset load_mnist_halves(const std::string& image_path,
                                const std::optional<std::string>& label_path = std::nullopt,
                                HalfCut cut = HalfCut::kLeftRight);

struct MnistBenchmarkOptions {
  std::size_t validation = 10000;  // taken from the end of the training file
  std::size_t max_train = 0;       // 0 = all remaining training images
  HalfCut cut = HalfCut::kLeftRight;
};

// Reads train-images-idx3-ubyte and t10k-images-idx3-ubyte (plus label files
// when present) from `dir` and tags train / validation / test columns.
PairedDataset load_mnist_benchmark(const std::string& dir, const MnistBenchmarkOptions& options = {});

// "PVW1" container: little-endian u32 n, d_x, d_y, X column-major f64, Y
// column-major f64, then n split-tag bytes.
void save_paired_views(const PairedDataset& data, const std::string& path);
PairedDataset load_paired_views(const std::string& path);

struct SharedLatentParams {
  std::size_t n = 10000;  // training columns
  std::size_t n_validation = 0;
  std::size_t n_test = 0;
  std::size_t dim_x = 0;
  std::size_t dim_y = 0;
  std::size_t latent_dim = 0;
  Vector spectrum;     // target canonical correlations, one per latent
  double noise = 1.0;  // std of the non-shared filler coordinates
  std::uint64_t seed = 0;
};

// Jointly Gaussian views whose population canonical correlations are exactly
// `spectrum` (zero elsewhere). Latent i contributes a coordinate pair with
// unit variances and correlation spectrum[i]; the remaining coordinates are
// independent noise; each view is then rotated by a random orthogonal matrix.
PairedDataset synth_shared_latent(const SharedLatentParams& params);

// Feature-wise centering (and optional unit-variance scaling) fitted on the
// training split and applied to every column. Features with variance below
// 1e-12 keep scale 1.
InputTransform standardize(PairedDataset& data, bool unit_variance = false);
void apply_transform(const InputTransform& transform, Matrix& x, Matrix& y);

// Text ground-truth file for retrieval: one line per query,
// "<query> <gallery> <gallery> ...", '#' starts a comment. The result has
// one entry per query up to the largest index listed.
std::vector<std::vector<std::size_t>> load_ground_truth(const std::string& path);

}  // namespace twoway
