#include "twoway/linalg.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "twoway/error.hpp"

namespace twoway {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) { return ConstMap(m.values().data(), m.rows(), m.cols()); }
MutMap view(Matrix& m) { return MutMap(m.values().data(), m.rows(), m.cols()); }

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << 'x' << m.cols();
  return os.str();
}

void require_same_shape(const Matrix& a, const Matrix& b, std::string_view op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Vector Matrix::column_copy(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double scale) { return a *= scale; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_of(a) + " * " + shape_of(b));
  }
  Matrix out(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  check_finite(out, "matmul");
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: transpose(" + shape_of(a) + ") * " + shape_of(b));
  }
  Matrix out(a.cols(), b.cols());
  view(out).noalias() = view(a).transpose() * view(b);
  check_finite(out, "matmul_tn");
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_of(a) + " * transpose(" + shape_of(b) + ")");
  }
  Matrix out(a.rows(), b.rows());
  view(out).noalias() = view(a) * view(b).transpose();
  check_finite(out, "matmul_nt");
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

void add_to_rows(Matrix& a, std::span<const double> bias) {
  if (bias.size() != a.rows()) {
    throw ShapeError("add_to_rows: bias length " + std::to_string(bias.size()) + " vs " +
                     std::to_string(a.rows()) + " rows");
  }
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double b = bias[r];
    for (double& v : a.row(r)) v += b;
  }
}

void accumulate_row_sums(const Matrix& a, std::span<double> out) {
  if (out.size() != a.rows()) throw ShapeError("accumulate_row_sums: length mismatch");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (double v : a.row(r)) s += v;
    out[r] += s;
  }
}

Matrix column_block(const Matrix& a, std::size_t first, std::size_t count) {
  if (first + count > a.cols()) throw ShapeError("column_block: range exceeds columns");
  Matrix out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto src = a.row(r).subspan(first, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix gather_columns(const Matrix& a, std::span<const std::size_t> indices) {
  Matrix out(a.rows(), indices.size());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto src = a.row(r);
    auto dst = out.row(r);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= a.cols()) throw ShapeError("gather_columns: index out of range");
      dst[i] = src[indices[i]];
    }
  }
  return out;
}

Matrix row_block(const Matrix& a, std::size_t first, std::size_t count) {
  if (first + count > a.rows()) throw ShapeError("row_block: range exceeds rows");
  auto src = a.values().subspan(first * a.cols(), count * a.cols());
  return Matrix(count, a.cols(), std::vector<double>(src.begin(), src.end()));
}

void set_row_block(Matrix& dst, std::size_t first, const Matrix& src) {
  if (src.cols() != dst.cols() || first + src.rows() > dst.rows()) {
    throw ShapeError("set_row_block: block does not fit");
  }
  std::copy(src.values().begin(), src.values().end(),
            dst.values().begin() + static_cast<std::ptrdiff_t>(first * dst.cols()));
}

double frobenius_norm_squared(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return s;
}

double sum(const Matrix& a) {
  return std::accumulate(a.values().begin(), a.values().end(), 0.0);
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void check_finite(const Matrix& a, std::string_view what) {
  if (!all_finite(a.values())) {
    throw NumericError(std::string(what) + ": non-finite entry in " + shape_of(a) + " result");
  }
}

Moments column_stats(const Matrix& a) {
  if (a.rows() == 0) throw ShapeError("column_stats: matrix has no rows");
  const auto n = static_cast<double>(a.rows());
  Moments m{Vector(a.cols(), 0.0), Vector(a.cols(), 0.0)};
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) m.means[c] += a(r, c);
  for (double& v : m.means) v /= n;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) {
      const double d = a(r, c) - m.means[c];
      m.variances[c] += d * d;
    }
  for (double& v : m.variances) v /= n;
  return m;
}

Moments row_stats(const Matrix& a) {
  if (a.cols() == 0) throw ShapeError("row_stats: matrix has no columns");
  const auto n = static_cast<double>(a.cols());
  Moments m{Vector(a.rows(), 0.0), Vector(a.rows(), 0.0)};
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    m.means[r] = mean;
    m.variances[r] = var / n;
  }
  return m;
}

SymmetricEigen sym_eig(const Matrix& a, double symmetry_tolerance) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ParameterError("sym_eig: matrix is not square (" + shape_of(a) + ")");
  double scale = 0.0;
  for (double v : a.values()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(a(i, j) - a(j, i)) > symmetry_tolerance * std::max(scale, 1.0)) {
        throw ParameterError("sym_eig: matrix is not symmetric");
      }
  check_finite(a, "sym_eig input");

  Matrix w = a;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) w(i, j) = w(j, i) = 0.5 * (a(i, j) + a(j, i));
  // Rows of `vt` are the eigenvectors; rows keep the rotation updates contiguous.
  Matrix vt = Matrix::identity(n);

  const double total = frobenius_norm_squared(w);
  constexpr int kMaxSweeps = 100;
  bool converged = n <= 1 || total == 0.0;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += w(i, j) * w(i, j);
    if (off <= 1e-30 * total) {
      converged = true;
      break;
    }
    const double skip = 1e-18 * std::sqrt(total);
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = w(p, q);
        if (std::abs(apq) <= skip) continue;
        const double theta = (w(q, q) - w(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        auto rp = w.row(p);
        auto rq = w.row(q);
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = rp[k];
          const double akq = rq[k];
          rp[k] = c * akp - s * akq;
          rq[k] = s * akp + c * akq;
          w(k, p) = rp[k];
          w(k, q) = rq[k];
        }
        const double app = w(p, p);
        const double aqq = w(q, q);
        w(p, p) = app - t * apq;
        w(q, q) = aqq + t * apq;
        w(p, q) = w(q, p) = 0.0;
        auto vp = vt.row(p);
        auto vq = vt.row(q);
        for (std::size_t k = 0; k < n; ++k) {
          const double x = vp[k];
          const double y = vq[k];
          vp[k] = c * x - s * y;
          vq[k] = s * x + c * y;
        }
      }
    }
  }
  if (!converged) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += w(i, j) * w(i, j);
    if (off > 1e-24 * total) throw NumericError("sym_eig: Jacobi sweeps did not converge");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return w(i, i) > w(j, j); });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = w(order[k], order[k]);
    auto v = vt.row(order[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v[r];
  }
  return out;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; 1 - uniform() lies in (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw ParameterError("Rng::below: bound must be positive");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

void Rng::shuffle(std::span<std::size_t> items) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(below(i));
    std::swap(items[i - 1], items[j]);
  }
}

Rng Rng::split() { return Rng(next_u64()); }

Matrix rng_gaussian(Rng& rng, std::size_t rows, std::size_t cols, double mean, double std) {
  if (!(std >= 0.0) || !std::isfinite(std) || !std::isfinite(mean)) {
    throw ParameterError("rng_gaussian: std must be finite and non-negative");
  }
  Matrix m(rows, cols);
  for (double& v : m.values()) v = mean + std * rng.gaussian();
  return m;
}

Matrix rng_bernoulli(Rng& rng, std::size_t rows, std::size_t cols, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("rng_bernoulli: p must lie in [0, 1]");
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform() < p ? 1.0 : 0.0;
  return m;
}

Matrix random_orthogonal(Rng& rng, std::size_t n) {
  // Rows of `q` are orthonormalized with modified Gram-Schmidt (twice for stability).
  Matrix q = rng_gaussian(rng, n, n, 0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto qi = q.row(i);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < i; ++j) {
        auto qj = q.row(j);
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += qi[k] * qj[k];
        for (std::size_t k = 0; k < n; ++k) qi[k] -= dot * qj[k];
      }
    }
    double norm = 0.0;
    for (double v : qi) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw NumericError("random_orthogonal: degenerate draw");
    for (double& v : qi) v /= norm;
  }
  return q;
}

}  // namespace twoway
