#include "twoway/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <string>

#include "twoway/error.hpp"
#include "twoway/log.hpp"

namespace twoway {
namespace {

// (S + reg I)^{-1/2} for a symmetric positive semi-definite S.
Matrix inverse_sqrt(const Matrix& s, const char* what) {
  const SymmetricEigen eig = sym_eig(s, 1e-8);
  const std::size_t d = s.rows();
  for (double v : eig.values) {
    if (!(v > 0.0)) {
      throw NumericError(std::string(what) +
                         " covariance is not positive definite; increase the ridge coefficient");
    }
  }
  // V diag(1/sqrt(l)) V^T
  Matrix scaled = eig.vectors;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) scaled(r, c) /= std::sqrt(eig.values[c]);
  return matmul_nt(scaled, eig.vectors);
}

Matrix centered(const Matrix& a, const Vector& means) {
  Matrix out = a;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (double& v : out.row(r)) v -= means[r];
  return out;
}

// Sum of squares of the centered sequence, or 0 when that is at rounding
// level relative to the raw magnitude (a constant sequence).
double centered_energy(std::span<const double> a, double mean) {
  double ss = 0.0;
  double raw = 0.0;
  for (double v : a) {
    ss += (v - mean) * (v - mean);
    raw += v * v;
  }
  if (ss <= 1e-24 * raw) return 0.0;
  return ss;
}

double mean_of(std::span<const double> a) {
  return std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
}

}  // namespace

CcaModel cca_fit(const Matrix& x, const Matrix& y, std::size_t c, double reg) {
  if (x.cols() != y.cols()) throw ShapeError("cca_fit: views have different sample counts");
  const std::size_t n = x.cols();
  if (n < 2) throw ParameterError("cca_fit: need at least two samples");
  if (!(reg > 0.0)) throw ParameterError("cca_fit: ridge coefficient must be positive");
  if (c == 0 || c > std::min(x.rows(), y.rows())) {
    throw ParameterError("cca_fit: c must lie in [1, min(d_x, d_y)] = [1, " +
                         std::to_string(std::min(x.rows(), y.rows())) + "]");
  }
  CcaModel model;
  model.reg = reg;
  model.mean_x = row_stats(x).means;
  model.mean_y = row_stats(y).means;
  const Matrix xc = centered(x, model.mean_x);
  const Matrix yc = centered(y, model.mean_y);
  const double inv_n = 1.0 / static_cast<double>(n);

  Matrix sxx = matmul_nt(xc, xc);
  sxx *= inv_n;
  Matrix syy = matmul_nt(yc, yc);
  syy *= inv_n;
  Matrix sxy = matmul_nt(xc, yc);
  sxy *= inv_n;
  for (std::size_t i = 0; i < sxx.rows(); ++i) sxx(i, i) += reg;
  for (std::size_t i = 0; i < syy.rows(); ++i) syy(i, i) += reg;

  const Matrix kx = inverse_sqrt(sxx, "X");
  const Matrix ky = inverse_sqrt(syy, "Y");
  const Matrix t = matmul(matmul(kx, sxy), ky);  // d_x x d_y
  const SymmetricEigen eig = sym_eig(matmul_nt(t, t), 1e-8);

  Matrix u(x.rows(), c);
  Matrix v(y.rows(), c);
  model.correlations.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    const double rho = std::sqrt(std::max(eig.values[i], 0.0));
    model.correlations[i] = std::min(rho, 1.0);
    for (std::size_t r = 0; r < x.rows(); ++r) u(r, i) = eig.vectors(r, i);
    if (rho > 1e-12) {
      // v_i = T^T u_i / rho_i
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double s = 0.0;
        for (std::size_t q = 0; q < x.rows(); ++q) s += t(q, r) * u(q, i);
        v(r, i) = s / rho;
      }
    }
  }
  model.projection_x = matmul(kx, u);
  model.projection_y = matmul(ky, v);
  return model;
}

Matrix cca_project_x(const CcaModel& model, const Matrix& x) {
  if (x.rows() != model.projection_x.rows()) throw ShapeError("cca_project_x: dimension mismatch");
  return matmul_tn(model.projection_x, centered(x, model.mean_x));
}

Matrix cca_project_y(const CcaModel& model, const Matrix& y) {
  if (y.rows() != model.projection_y.rows()) throw ShapeError("cca_project_y: dimension mismatch");
  return matmul_tn(model.projection_y, centered(y, model.mean_y));
}

double canonical_corr_sum(const CcaModel& model, const Matrix& x_test, const Matrix& y_test) {
  if (x_test.cols() != y_test.cols()) throw ShapeError("canonical_corr_sum: sample counts differ");
  const Matrix px = cca_project_x(model, x_test);
  const Matrix py = cca_project_y(model, y_test);
  double total = 0.0;
  for (std::size_t i = 0; i < px.rows(); ++i) {
    const auto a = px.row(i);
    const auto b = py.row(i);
    if (centered_energy(a, mean_of(a)) == 0.0 || centered_energy(b, mean_of(b)) == 0.0) {
      log::warn("canonical pair " + std::to_string(i) + " has zero variance on the test set");
      continue;
    }
    total += pearson(a, b);
  }
  return total;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("pearson: length mismatch");
  if (a.empty()) return 0.0;
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  const double sa = centered_energy(a, ma);
  const double sb = centered_energy(b, mb);
  if (sa == 0.0 || sb == 0.0) return 0.0;
  double sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sab += (a[i] - ma) * (b[i] - mb);
  return sab / std::sqrt(sa * sb);
}

double neuronwise_corr_sum(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("neuronwise_corr_sum: shape mismatch");
  }
  double total = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) total += pearson(a.row(r), b.row(r));
  return total;
}

double mean_row_variance(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  const Moments m = row_stats(a);
  return std::accumulate(m.variances.begin(), m.variances.end(), 0.0) /
         static_cast<double>(a.rows());
}

double recall_at_k(const Matrix& queries, const Matrix& gallery,
                   const std::vector<std::vector<std::size_t>>& ground_truth, std::size_t k) {
  if (queries.rows() != gallery.rows()) throw ShapeError("recall_at_k: representation dims differ");
  if (ground_truth.size() != queries.cols()) {
    throw ShapeError("recall_at_k: one ground-truth set per query required");
  }
  const std::size_t g = gallery.cols();
  if (k == 0 || k > g) throw ParameterError("recall_at_k: k must lie in [1, gallery size]");

  // Unit-norm centered columns make the dot product the Pearson correlation.
  auto normalize_columns = [](const Matrix& m) {
    Matrix t = transpose(m);  // one sample per row
    for (std::size_t r = 0; r < t.rows(); ++r) {
      auto row = t.row(r);
      const double mean = mean_of(row);
      const double energy = centered_energy(row, mean);
      const double scale = energy == 0.0 ? 0.0 : 1.0 / std::sqrt(energy);
      for (double& v : row) v = (v - mean) * scale;
    }
    return t;
  };
  const Matrix qn = normalize_columns(queries);
  const Matrix gn = normalize_columns(gallery);
  // Scores are plain per-pair dot products rather than a blocked product, so
  // identical gallery columns score bit-identically and the index tie-break
  // applies.
  const std::size_t d = qn.cols();
  Vector s(g);

  std::size_t counted = 0;
  std::size_t hits = 0;
  std::size_t skipped = 0;
  std::vector<std::size_t> order(g);
  for (std::size_t q = 0; q < queries.cols(); ++q) {
    const auto& truth = ground_truth[q];
    if (truth.empty()) {
      ++skipped;
      continue;
    }
    for (std::size_t id : truth) {
      if (id >= g) throw ParameterError("recall_at_k: ground-truth id outside the gallery");
    }
    ++counted;
    const double* qrow = qn.row(q).data();
    for (std::size_t j = 0; j < g; ++j) {
      const double* grow = gn.row(j).data();
      double dot = 0.0;
      for (std::size_t r = 0; r < d; ++r) dot += qrow[r] * grow[r];
      s[j] = dot;
    }
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (s[a] != s[b]) return s[a] > s[b];
                        return a < b;
                      });
    for (std::size_t i = 0; i < k; ++i) {
      if (std::find(truth.begin(), truth.end(), order[i]) != truth.end()) {
        ++hits;
        break;
      }
    }
  }
  if (skipped > 0) {
    log::warn("recall_at_k: skipped " + std::to_string(skipped) +
              " queries with no ground truth");
  }
  if (counted == 0) return 0.0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(counted);
}

void write_report_text(std::ostream& out, const EvaluationReport& report) {
  out << std::setprecision(6) << std::fixed;
  out << "canonical correlation sum (c=" << report.components
      << "): " << report.canonical_corr_sum << "\n";
  out << "neuronwise correlation sum: " << report.neuronwise_corr_sum << "\n";
  out << "mean mid variance: forward " << report.var_mid_fwd << ", backward "
      << report.var_mid_bwd << "\n";
  if (report.has_recall) {
    out << "recall@1: " << report.recall_at_1 << "%\n";
    out << "recall@5: " << report.recall_at_5 << "%\n";
  }
  out.unsetf(std::ios::floatfield);
}

void write_report_kv(std::ostream& out, const EvaluationReport& report) {
  out << std::setprecision(17);
  out << "canonical_corr_sum = " << report.canonical_corr_sum << "\n";
  out << "components = " << report.components << "\n";
  out << "neuronwise_corr_sum = " << report.neuronwise_corr_sum << "\n";
  out << "var_mid_fwd = " << report.var_mid_fwd << "\n";
  out << "var_mid_bwd = " << report.var_mid_bwd << "\n";
  if (report.has_recall) {
    out << "recall@1 = " << report.recall_at_1 << "\n";
    out << "recall@5 = " << report.recall_at_5 << "\n";
  }
}

}  // namespace twoway
