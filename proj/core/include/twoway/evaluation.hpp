#pragma once

// Correlation measurement: regularized linear CCA, the canonical and
// neuronwise correlation sums, recall@k retrieval, and numerical checks of
// the correlation/distance identities that motivate the Euclidean losses.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "twoway/linalg.hpp"

namespace twoway {

struct CcaModel {
  Matrix projection_x;  // d_x x c
  Matrix projection_y;  // d_y x c
  Vector mean_x;
  Vector mean_y;
  Vector correlations;  // training canonical correlations, non-increasing, in [0, 1]
  double reg = 0.0;

  std::size_t components() const noexcept { return correlations.size(); }
};

// Ridge-regularized CCA of column-sample views X (d_x x n) and Y (d_y x n),
// keeping the top c pairs. Throws ParameterError for c out of range or
// reg <= 0, NumericError if a regularized covariance is not positive definite.
CcaModel cca_fit(const Matrix& x, const Matrix& y, std::size_t c, double reg);
// Projected coordinates (c x n) of new samples.
Matrix cca_project_x(const CcaModel& model, const Matrix& x);
Matrix cca_project_y(const CcaModel& model, const Matrix& y);
// Sum of the per-pair Pearson correlations of the projected test views. A
// pair with a zero-variance coordinate contributes 0 and logs a warning.
double canonical_corr_sum(const CcaModel& model, const Matrix& x_test, const Matrix& y_test);

// Pearson correlation of two equal-length sequences; 0 if either is constant.
double pearson(std::span<const double> a, std::span<const double> b);
// Sum over rows k of Pearson(A_k, B_k); zero-variance rows contribute 0.
double neuronwise_corr_sum(const Matrix& a, const Matrix& b);
// Mean over rows of the population variance of each row.
double mean_row_variance(const Matrix& a);

// Correlation from distance for zero-mean u, v:
// s_u/(2 s_v) + s_v/(2 s_u) - ||u - v||^2 / (2 n s_u s_v).
struct Lemma1Result {
  double direct = 0.0;
  double from_distance = 0.0;
  double residual() const;
};
// Centers u and v first. Throws ParameterError on constant input.
Lemma1Result lemma1_check(std::span<const double> u, std::span<const double> v);

struct Lemma2Result {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  double slack() const noexcept { return lhs - rhs; }
};
// Lower bound on the neuronwise correlation sum in terms of the summed
// squared distances. Rows are centered first; throws ParameterError on a
// zero-variance row.
Lemma2Result lemma2_bound_check(const Matrix& a, const Matrix& b);

// P(u > 0, v > 0) for a standard bivariate normal with correlation rho.
double quadrant_intersection(double rho);
// Mean fraction of d coordinates where both of a correlated Gaussian pair
// exceed their mean (zero), over `trials` draws.
double lemma3_monte_carlo(double rho, std::size_t d, std::size_t trials, std::uint64_t seed);

// Percentage of queries with a ground-truth gallery column in their top k by
// Pearson similarity (ties broken by lower gallery index). Queries with no
// ground truth are skipped with a warning. Representations are columns.
double recall_at_k(const Matrix& queries, const Matrix& gallery,
                   const std::vector<std::vector<std::size_t>>& ground_truth, std::size_t k);

struct EvaluationReport {
  double canonical_corr_sum = 0.0;
  double neuronwise_corr_sum = 0.0;
  double var_mid_fwd = 0.0;
  double var_mid_bwd = 0.0;
  std::size_t components = 0;
  bool has_recall = false;
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
};

// Text and key = value renderings.
void write_report_text(std::ostream& out, const EvaluationReport& report);
void write_report_kv(std::ostream& out, const EvaluationReport& report);

}  // namespace twoway
