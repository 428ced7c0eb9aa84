#pragma once

// Dense real linear algebra and seeded randomness.
//
// Storage is row-major. Throughout the library a batch of samples is a
// Matrix whose columns are samples (features x samples).

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace twoway {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  // Row-major literal, e.g. Matrix::from_rows({{1, 2}, {3, 4}}).
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  Vector column_copy(std::size_t c) const;

  void fill(double value);

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double scale);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double scale);

// a * b. Throws ShapeError when a.cols() != b.rows().
Matrix matmul(const Matrix& a, const Matrix& b);
// transpose(a) * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * transpose(b) without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);

// Adds bias[r] to every entry of row r (per-feature bias over a batch).
void add_to_rows(Matrix& a, std::span<const double> bias);
// out[r] += sum of row r.
void accumulate_row_sums(const Matrix& a, std::span<double> out);

// Columns [first, first + count) as a new matrix.
Matrix column_block(const Matrix& a, std::size_t first, std::size_t count);
// Columns listed in `indices`, in that order.
Matrix gather_columns(const Matrix& a, std::span<const std::size_t> indices);
// Rows [first, first + count).
Matrix row_block(const Matrix& a, std::size_t first, std::size_t count);
void set_row_block(Matrix& dst, std::size_t first, const Matrix& src);

double frobenius_norm_squared(const Matrix& a);
double sum(const Matrix& a);

// Throws NumericError naming `what` if any entry is NaN or infinite.
void check_finite(const Matrix& a, std::string_view what);
bool all_finite(std::span<const double> values);

struct Moments {
  Vector means;
  Vector variances;  // population variance (divide by n)
};

// Per-column mean and population variance over the rows of `a`.
Moments column_stats(const Matrix& a);
// Per-row mean and population variance over the columns of `a`; with the
// samples-as-columns convention these are per-feature statistics.
Moments row_stats(const Matrix& a);

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // column i is the unit eigenvector for values[i]
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
// Throws ParameterError if `a` is not square or not symmetric within
// `symmetry_tolerance` (relative to the largest entry), NumericError if the
// sweeps fail to converge.
SymmetricEigen sym_eig(const Matrix& a, double symmetry_tolerance = 1e-10);

// Seeded generator. The raw stream is std::mt19937_64, whose output sequence
// is fixed by the standard; the real-valued transforms are implemented here
// rather than through <random> distributions so draws agree across standard
// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double gaussian();
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  // Fisher-Yates shuffle of `items`.
  void shuffle(std::span<std::size_t> items);
  // A new generator whose seed is drawn from this one.
  Rng split();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// i.i.d. N(mean, std^2) entries. Throws ParameterError if std < 0.
Matrix rng_gaussian(Rng& rng, std::size_t rows, std::size_t cols, double mean, double std);
// i.i.d. entries equal to 1 with probability p and 0 otherwise.
Matrix rng_bernoulli(Rng& rng, std::size_t rows, std::size_t cols, double p);

// Haar-distributed orthogonal matrix (Gram-Schmidt on a Gaussian matrix).
Matrix random_orthogonal(Rng& rng, std::size_t n);

}  // namespace twoway
