#include <cmath>
#include <numbers>
#include <string>

#include "twoway/error.hpp"
#include "twoway/evaluation.hpp"

namespace twoway {
namespace {

struct Centered {
  Vector values;
  double sigma = 0.0;  // population standard deviation
};

Centered center(std::span<const double> a) {
  Centered out;
  out.values.assign(a.begin(), a.end());
  double mean = 0.0;
  for (double v : a) mean += v;
  mean /= static_cast<double>(a.size());
  double ss = 0.0;
  for (double& v : out.values) {
    v -= mean;
    ss += v * v;
  }
  out.sigma = std::sqrt(ss / static_cast<double>(a.size()));
  return out;
}

}  // namespace

double Lemma1Result::residual() const { return std::abs(direct - from_distance); }

Lemma1Result lemma1_check(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size() || u.empty()) throw ShapeError("lemma1_check: length mismatch");
  const Centered cu = center(u);
  const Centered cv = center(v);
  if (cu.sigma == 0.0 || cv.sigma == 0.0) {
    throw ParameterError("lemma1_check: inputs must have positive variance");
  }
  const double n = static_cast<double>(u.size());
  double dot = 0.0;
  double dist = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += cu.values[i] * cv.values[i];
    const double d = cu.values[i] - cv.values[i];
    dist += d * d;
  }
  const double su = cu.sigma;
  const double sv = cv.sigma;
  Lemma1Result r;
  r.direct = dot / (n * su * sv);
  r.from_distance = su / (2.0 * sv) + sv / (2.0 * su) - dist / (2.0 * n * su * sv);
  return r;
}

Lemma2Result lemma2_bound_check(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("lemma2_bound_check: shape mismatch");
  }
  if (a.cols() < 2) throw ParameterError("lemma2_bound_check: need n >= 2");
  const double n = static_cast<double>(a.cols());
  double lhs = 0.0;
  double ratio_sum = 0.0;
  double dist_sum = 0.0;
  double inv_sum = 0.0;
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const Centered ca = center(a.row(k));
    const Centered cb = center(b.row(k));
    if (ca.sigma == 0.0 || cb.sigma == 0.0) {
      throw ParameterError("lemma2_bound_check: row " + std::to_string(k) +
                           " has zero variance");
    }
    double dot = 0.0;
    double dist = 0.0;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      dot += ca.values[i] * cb.values[i];
      const double d = ca.values[i] - cb.values[i];
      dist += d * d;
    }
    const double sab = ca.sigma * cb.sigma;
    lhs += dot / (n * sab);
    ratio_sum += (ca.sigma * ca.sigma + cb.sigma * cb.sigma) / sab;
    dist_sum += dist;
    inv_sum += 1.0 / sab;
  }
  Lemma2Result r;
  r.lhs = lhs;
  r.rhs = 0.5 * ratio_sum - dist_sum * inv_sum / (2.0 * n);
  r.holds = r.lhs >= r.rhs - 1e-9;
  return r;
}

double quadrant_intersection(double rho) {
  if (!(rho >= -1.0 && rho <= 1.0)) throw ParameterError("quadrant_intersection: |rho| > 1");
  return 0.25 + std::asin(rho) / (2.0 * std::numbers::pi);
}

double lemma3_monte_carlo(double rho, std::size_t d, std::size_t trials, std::uint64_t seed) {
  if (!(rho >= -1.0 && rho <= 1.0)) throw ParameterError("lemma3_monte_carlo: |rho| > 1");
  if (d == 0 || trials == 0) throw ParameterError("lemma3_monte_carlo: d and trials must be >= 1");
  Rng rng(seed);
  const double c = std::sqrt(1.0 - rho * rho);
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::size_t both = 0;
    for (std::size_t i = 0; i < d; ++i) {
      const double z1 = rng.gaussian();
      const double z2 = rng.gaussian();
      const double u = z1;
      const double v = rho * z1 + c * z2;
      if (u > 0.0 && v > 0.0) ++both;
    }
    total += static_cast<double>(both) / static_cast<double>(d);
  }
  return total / static_cast<double>(trials);
}

}  // namespace twoway
