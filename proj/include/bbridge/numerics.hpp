#pragma once

// Dense linear algebra and statistical primitives shared by the rest of the
// library: an SPD matrix wrapper with a cached Cholesky factor, the
// chi-square survival function and Spearman rank correlation.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bbridge/error.hpp"

namespace bbridge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Symmetric positive-definite matrix with its lower Cholesky factor
/// computed once at construction. Instances are immutable and may be shared
/// freely between threads.
class SpdMatrix {
 public:
  SpdMatrix() = default;

  /// Throws DomainError for non-square or asymmetric input and
  /// NotPositiveDefinite when a Cholesky pivot is not strictly positive.
  explicit SpdMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols() || entries_.rows() == 0) {
      throw DomainError("SpdMatrix: matrix must be square and non-empty, got " +
                        std::to_string(entries_.rows()) + "x" +
                        std::to_string(entries_.cols()));
    }
    if (!entries_.allFinite()) {
      throw DomainError("SpdMatrix: non-finite entry");
    }
    const double scale = entries_.cwiseAbs().maxCoeff();
    const double asym = (entries_ - entries_.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale) {
      throw DomainError("SpdMatrix: matrix is not symmetric (max asymmetry " +
                        std::to_string(asym) + ")");
    }
    Eigen::LLT<Matrix> llt(entries_);
    if (llt.info() != Eigen::Success) {
      throw NotPositiveDefinite("SpdMatrix: Cholesky pivot is not positive");
    }
    chol_ = llt.matrixL();
  }

  static SpdMatrix identity(Eigen::Index dim) {
    return SpdMatrix(Matrix::Identity(dim, dim));
  }

  Eigen::Index dim() const { return entries_.rows(); }
  const Matrix& matrix() const { return entries_; }
  const Matrix& chol() const { return chol_; }

  /// Returns x with matrix() * x = b.
  Matrix solve(const Eigen::Ref<const Matrix>& b) const {
    check_rows(b.rows());
    const auto lower = chol_.triangularView<Eigen::Lower>();
    Matrix y = lower.solve(b);
    return lower.transpose().solve(y);
  }

  /// Returns L^{-1} b, the whitened right-hand side.
  Matrix whiten(const Eigen::Ref<const Matrix>& b) const {
    check_rows(b.rows());
    return chol_.triangularView<Eigen::Lower>().solve(b);
  }

  double log_det() const {
    return 2.0 * chol_.diagonal().array().log().sum();
  }

 private:
  void check_rows(Eigen::Index rows) const {
    if (rows != dim()) {
      throw DimensionMismatch("SpdMatrix::solve: right-hand side has " +
                              std::to_string(rows) + " rows, expected " +
                              std::to_string(dim()));
    }
  }

  Matrix entries_;
  Matrix chol_;
};

/// Lower-triangular L with L L^T = m.
inline Matrix cholesky(const Matrix& m) { return SpdMatrix(m).chol(); }

inline Matrix spd_solve(const SpdMatrix& m, const Eigen::Ref<const Matrix>& b) {
  return m.solve(b);
}

inline double log_det_spd(const SpdMatrix& m) { return m.log_det(); }

namespace detail {

// log(1 + u) - u without cancellation for small u.
inline double log1pmx(double u) {
  if (std::abs(u) > 0.1) return std::log1p(u) - u;
  double term = u;
  double sum = 0.0;
  for (int n = 2; n < 40; ++n) {
    term *= -u;
    const double next = term / n;
    sum += next;
    if (std::abs(next) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

// lgamma(a) - [(a - 1/2) log a - a + log(2 pi)/2].
inline double stirling_error(double a) {
  if (a < 10.0) {
    return std::lgamma(a) -
           ((a - 0.5) * std::log(a) - a + 0.5 * std::log(2.0 * std::numbers::pi));
  }
  const double r = 1.0 / a;
  const double r2 = r * r;
  return r * (1.0 / 12.0 -
              r2 * (1.0 / 360.0 -
                    r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0 - r2 / 1188.0))));
}

// log(x^a e^{-x} / Gamma(a)), accurate for large a near x = a.
inline double log_gamma_prefactor(double a, double x) {
  if (a < 10.0) return a * std::log(x) - x - std::lgamma(a);
  return a * log1pmx((x - a) / a) + 0.5 * std::log(a / (2.0 * std::numbers::pi)) -
         stirling_error(a);
}

// Lower regularized gamma P(a, x) by its power series; use for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (long n = 1; n < 100'000'000L; ++n) {
    term *= x / (a + static_cast<double>(n));
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum * std::exp(log_gamma_prefactor(a, x));
}

// Upper regularized gamma Q(a, x) by modified Lentz continued fraction; use
// for x >= a + 1.
inline double gamma_q_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (long i = 1; i < 100'000'000L; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(log_gamma_prefactor(a, x)) * h;
}

}  // namespace detail

/// Upper regularized incomplete gamma function Q(a, x).
inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) {
    throw DomainError("gamma_q: requires a > 0 and x >= 0");
  }
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return std::clamp(1.0 - detail::gamma_p_series(a, x), 0.0, 1.0);
  return std::clamp(detail::gamma_q_continued_fraction(a, x), 0.0, 1.0);
}

/// P(chi^2_k > x).
inline double chi_square_sf(double x, long long k) {
  if (k < 1) throw DomainError("chi_square_sf: degrees of freedom must be >= 1");
  if (!(x >= 0.0)) throw DomainError("chi_square_sf: statistic must be >= 0");
  return gamma_q(0.5 * static_cast<double>(k), 0.5 * x);
}

/// Values with their average ranks (1-based; tied values share the mean of
/// the ranks they occupy).
struct RankedSample {
  std::vector<double> values;
  std::vector<double> ranks;
};

inline RankedSample rank_average(std::span<const double> values) {
  RankedSample out{{values.begin(), values.end()}, std::vector<double>(values.size())};
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) out.ranks[order[k]] = avg;
    i = j;
  }
  return out;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw LengthMismatch("spearman_rho: inputs have lengths " + std::to_string(a.size()) +
                         " and " + std::to_string(b.size()));
  }
  if (a.size() < 2) throw DegenerateInput("spearman_rho: need at least two observations");
  const auto ra = rank_average(a).ranks;
  const auto rb = rank_average(b).ranks;
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw DegenerateInput("spearman_rho: all values tied in one input");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Relative Frobenius distance |a - b|_F / |b|_F.
inline double relative_frobenius(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / b.norm();
}

}  // namespace bbridge
