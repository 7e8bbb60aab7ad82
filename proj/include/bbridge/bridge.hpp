#pragma once

// Brownian-bridge model of a fixed-endpoint vector sequence s_0..s_T in R^d.
//
// Interior points are modeled as
//   s_t = mu_t + W (B_1(t), ..., B_d(t))^T,   mu_t = s_0 + (t/T)(s_T - s_0),
// with B_i independent standard bridges on [0, T]. Stacking the interior
// residuals into a d x (T-1) matrix R gives vec(R) ~ N(0, Sigma_T (x) Sigma)
// where [Sigma_T]_{s,t} = s(T-t)/T and Sigma = W W^T. Every density, score and
// estimate below is evaluated through the trace form
//   tr(Sigma^{-1} R Sigma_T^{-1} R^T)
// so nothing of size d(T-1) x d(T-1) is ever formed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bbridge/error.hpp"
#include "bbridge/numerics.hpp"
#include "bbridge/random.hpp"

namespace bbridge {

/// One document: T+1 points in R^d stored column-wise (d x (T+1)).
class LatentTrajectory {
 public:
  LatentTrajectory() = default;

  LatentTrajectory(std::string id, std::string domain, Matrix points)
      : id_(std::move(id)), domain_(std::move(domain)), points_(std::move(points)) {
    if (points_.rows() < 1) {
      throw DomainError("trajectory '" + id_ + "': points must have dimension >= 1");
    }
    if (points_.cols() < 3) {
      throw DomainError("trajectory '" + id_ + "': need at least 3 points (T >= 2), got " +
                        std::to_string(points_.cols()));
    }
    if (!points_.allFinite()) {
      throw DomainError("trajectory '" + id_ + "': non-finite coordinate");
    }
  }

  const std::string& id() const { return id_; }
  const std::string& domain() const { return domain_; }
  const Matrix& points() const { return points_; }
  int dim() const { return static_cast<int>(points_.rows()); }
  /// T: index of the last point.
  int horizon() const { return static_cast<int>(points_.cols()) - 1; }

  friend bool operator==(const LatentTrajectory& a, const LatentTrajectory& b) {
    return a.id_ == b.id_ && a.domain_ == b.domain_ && a.points_.rows() == b.points_.rows() &&
           a.points_.cols() == b.points_.cols() && a.points_ == b.points_;
  }

 private:
  std::string id_;
  std::string domain_;
  Matrix points_;
};

/// Bridge covariance across interior times 1..T-1.
struct TemporalCovariance {
  int horizon = 0;
  SpdMatrix cov;
};

inline Matrix temporal_cov_matrix(int horizon) {
  if (horizon < 2) {
    throw DomainError("temporal covariance needs T >= 2, got " + std::to_string(horizon));
  }
  const Eigen::Index n = horizon - 1;
  Matrix m(n, n);
  const double T = horizon;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double s = static_cast<double>(i + 1);
      const double t = static_cast<double>(j + 1);
      m(i, j) = s * (T - t) / T;
      m(j, i) = m(i, j);
    }
  }
  return m;
}

/// Shared, memoized Sigma_T. Corpora reuse a handful of lengths, so factors
/// are kept in a small FIFO-bounded cache.
inline std::shared_ptr<const TemporalCovariance> temporal_cov(int horizon) {
  constexpr std::size_t kCapacity = 512;
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const TemporalCovariance>> cache;
  static std::deque<int> order;

  std::lock_guard lock(mutex);
  if (auto it = cache.find(horizon); it != cache.end()) return it->second;
  auto entry = std::make_shared<const TemporalCovariance>(
      TemporalCovariance{horizon, SpdMatrix(temporal_cov_matrix(horizon))});
  if (cache.size() >= kCapacity) {
    cache.erase(order.front());
    order.pop_front();
  }
  cache.emplace(horizon, entry);
  order.push_back(horizon);
  return entry;
}

/// Sigma = W W^T, optionally remembering W.
class SpatialCovariance {
 public:
  SpatialCovariance() = default;
  explicit SpatialCovariance(SpdMatrix sigma) : sigma_(std::move(sigma)) {}
  explicit SpatialCovariance(Matrix sigma) : sigma_(std::move(sigma)) {}

  static SpatialCovariance identity(int dim) { return SpatialCovariance(SpdMatrix::identity(dim)); }

  /// Builds Sigma from a square transformation matrix W.
  static SpatialCovariance from_factor(Matrix w) {
    if (w.rows() != w.cols()) {
      throw DimensionMismatch("SpatialCovariance: W must be square");
    }
    Matrix s = w * w.transpose();
    s = 0.5 * (s + s.transpose()).eval();
    SpatialCovariance out{SpdMatrix(std::move(s))};
    out.w_ = std::move(w);
    return out;
  }

  int dim() const { return static_cast<int>(sigma_.dim()); }
  const SpdMatrix& sigma() const { return sigma_; }
  const Matrix& matrix() const { return sigma_.matrix(); }
  const std::optional<Matrix>& w() const { return w_; }

  /// W when known, otherwise the Cholesky factor (any square root works for
  /// sampling).
  const Matrix& factor() const { return w_ ? *w_ : sigma_.chol(); }

 private:
  SpdMatrix sigma_;
  std::optional<Matrix> w_;
};

/// Interior residuals s - mu, d x (T-1).
struct BridgeResiduals {
  Matrix centered;
  std::string trajectory_id;
};

/// Chord means for columns 1..T-1 of a d x (T+1) point matrix.
inline Matrix chord_mean(const Matrix& points) {
  const Eigen::Index T = points.cols() - 1;
  if (T < 2) throw DomainError("chord_mean: need T >= 2");
  Matrix mean(points.rows(), T - 1);
  const Vector start = points.col(0);
  const Vector delta = points.col(T) - start;
  for (Eigen::Index t = 1; t < T; ++t) {
    mean.col(t - 1) = start + (static_cast<double>(t) / static_cast<double>(T)) * delta;
  }
  return mean;
}

inline Matrix chord_residuals(const Matrix& points) {
  return points.middleCols(1, points.cols() - 2) - chord_mean(points);
}

inline Matrix bridge_mean(const LatentTrajectory& traj) { return chord_mean(traj.points()); }

inline BridgeResiduals residuals(const LatentTrajectory& traj) {
  return {chord_residuals(traj.points()), traj.id()};
}

namespace detail {
inline void check_dim(const LatentTrajectory& traj, const SpatialCovariance& spatial) {
  if (traj.dim() != spatial.dim()) {
    throw DimensionMismatch("trajectory '" + traj.id() + "' has d=" + std::to_string(traj.dim()) +
                            " but the spatial covariance has d=" +
                            std::to_string(spatial.dim()));
  }
}
}  // namespace detail

/// tr(Sigma^{-1} R Sigma_T^{-1} R^T) for a d x (T-1) residual matrix,
/// computed as |L_Sigma^{-1} R L_T^{-T}|_F^2.
inline double trace_statistic(const Matrix& centered, const SpdMatrix& spatial,
                              const SpdMatrix& temporal) {
  const Matrix left = spatial.whiten(centered);                    // d x (T-1)
  const Matrix both = temporal.whiten(left.transpose());           // (T-1) x d
  return both.squaredNorm();
}

inline double trace_statistic(const LatentTrajectory& traj, const SpatialCovariance& spatial) {
  detail::check_dim(traj, spatial);
  return trace_statistic(chord_residuals(traj.points()), spatial.sigma(),
                         temporal_cov(traj.horizon())->cov);
}

/// Draws one bridge with the given endpoints. Interior residuals are
/// W Z L_T^T with Z iid standard normal, so vec(s - mu) ~ N(0, Sigma_T (x) Sigma).
inline LatentTrajectory sample_bridge(int dim, int horizon, const SpatialCovariance& spatial,
                                      const Vector& start, const Vector& end, std::uint64_t seed,
                                      std::string id = "sample", std::string domain = "") {
  if (dim < 1) throw DomainError("sample_bridge: d must be >= 1");
  if (horizon < 2) throw DomainError("sample_bridge: T must be >= 2");
  if (spatial.dim() != dim || start.size() != dim || end.size() != dim) {
    throw DimensionMismatch("sample_bridge: d=" + std::to_string(dim) +
                            " does not match covariance/endpoint dimensions");
  }
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Matrix z(dim, horizon - 1);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = normal(rng);
  }
  const auto& temporal = temporal_cov(horizon)->cov;
  Matrix points(dim, horizon + 1);
  points.col(0) = start;
  points.col(horizon) = end;
  points.middleCols(1, horizon - 1) = chord_mean(points) + spatial.factor() * z *
                                                               temporal.chol().transpose();
  return {std::move(id), std::move(domain), std::move(points)};
}

/// Exact bridge log-likelihood of one trajectory under Sigma.
inline double log_likelihood(const LatentTrajectory& traj, const SpatialCovariance& spatial) {
  detail::check_dim(traj, spatial);
  const auto temporal = temporal_cov(traj.horizon());
  const double d = traj.dim();
  const double n = traj.horizon() - 1;
  const double quad =
      trace_statistic(chord_residuals(traj.points()), spatial.sigma(), temporal->cov);
  return -0.5 * d * n * std::log(2.0 * std::numbers::pi) - 0.5 * d * temporal->cov.log_det() -
         0.5 * n * spatial.sigma().log_det() - 0.5 * quad;
}

namespace detail {
// Indices of trajs in stable id order; fixes the reduction order.
inline std::vector<std::size_t> id_order(std::span<const LatentTrajectory> trajs) {
  std::vector<std::size_t> order(trajs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return trajs[a].id() < trajs[b].id(); });
  return order;
}
}  // namespace detail

/// Sum of independent per-trajectory log-likelihoods; lengths may differ.
inline double log_likelihood_corpus(std::span<const LatentTrajectory> trajs,
                                    const SpatialCovariance& spatial) {
  double total = 0.0;
  for (std::size_t i : detail::id_order(trajs)) total += log_likelihood(trajs[i], spatial);
  return total;
}

/// Pooled sufficient statistic sum_i R_i Sigma_{T_i}^{-1} R_i^T and its
/// weight sum_i (T_i - 1).
struct BridgeScatter {
  Matrix scatter;
  long long weight = 0;
};

inline Matrix residual_scatter(const Matrix& centered, const SpdMatrix& temporal) {
  const Matrix half = temporal.whiten(centered.transpose());  // (T-1) x d
  return half.transpose() * half;
}

inline BridgeScatter accumulate_scatter(std::span<const LatentTrajectory> trajs) {
  if (trajs.empty()) throw InsufficientData("no trajectories to pool");
  const int d = trajs.front().dim();
  BridgeScatter acc{Matrix::Zero(d, d), 0};
  for (std::size_t i : detail::id_order(trajs)) {
    const auto& traj = trajs[i];
    if (traj.dim() != d) {
      throw DimensionMismatch("trajectory '" + traj.id() + "' has d=" + std::to_string(traj.dim()) +
                              ", expected " + std::to_string(d));
    }
    acc.scatter += residual_scatter(chord_residuals(traj.points()),
                                    temporal_cov(traj.horizon())->cov);
    acc.weight += traj.horizon() - 1;
  }
  acc.scatter = 0.5 * (acc.scatter + acc.scatter.transpose()).eval();
  return acc;
}

/// Pooled maximum-likelihood estimate of Sigma.
inline SpatialCovariance mle_sigma(std::span<const LatentTrajectory> trajs) {
  const BridgeScatter acc = accumulate_scatter(trajs);
  const int d = static_cast<int>(acc.scatter.rows());
  if (acc.weight < d) {
    throw InsufficientData("pooled weight " + std::to_string(acc.weight) +
                           " is smaller than d=" + std::to_string(d));
  }
  try {
    return SpatialCovariance(Matrix(acc.scatter / static_cast<double>(acc.weight)));
  } catch (const NotPositiveDefinite&) {
    throw SingularEstimate("MLE of Sigma is singular (residuals do not span R^" +
                           std::to_string(d) + ")");
  }
}

/// MLE blended toward an isotropic target:
///   sigma2 = tr(MLE) / d,  Sigma = (1 - eps) MLE + eps * target * I,
/// where target is sigma2 (use_sigma_scalar) or 1. eps = 0 gives the MLE.
struct ShrunkEstimate {
  SpatialCovariance sigma;
  double sigma2 = 0.0;
  long long weight = 0;
};

inline ShrunkEstimate shrunk_mle(std::span<const LatentTrajectory> trajs, double epsilon,
                                 bool use_sigma_scalar = true) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw DomainError("shrinkage epsilon must lie in [0, 1], got " + std::to_string(epsilon));
  }
  const BridgeScatter acc = accumulate_scatter(trajs);
  const int d = static_cast<int>(acc.scatter.rows());
  if (epsilon == 0.0 && acc.weight < d) {
    throw InsufficientData("pooled weight " + std::to_string(acc.weight) +
                           " is smaller than d=" + std::to_string(d));
  }
  const Matrix mle = acc.scatter / static_cast<double>(acc.weight);
  const double sigma2 = mle.trace() / d;
  Matrix shrunk = (1.0 - epsilon) * mle;
  shrunk.diagonal().array() += epsilon * (use_sigma_scalar ? sigma2 : 1.0);
  try {
    return {SpatialCovariance(std::move(shrunk)), sigma2, acc.weight};
  } catch (const NotPositiveDefinite&) {
    throw SingularEstimate("shrunk estimate of Sigma is singular");
  }
}

}  // namespace bbridge
