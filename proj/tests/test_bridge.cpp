#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "bbridge/bridge.hpp"
#include "support/oracles.hpp"

using namespace bbridge;

namespace {

LatentTrajectory line3(double a, double b, double c) {
  Matrix p(1, 3);
  p << a, b, c;
  return {"t", "", p};
}

LatentTrajectory random_traj(int d, int T, std::mt19937_64& rng, const std::string& id = "r") {
  return {id, "", oracle::random_matrix(d, T + 1, rng)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(Trajectory, RejectsShortAndNonFinite) {
  EXPECT_THROW(LatentTrajectory("a", "", Matrix::Zero(2, 2)), DomainError);
  Matrix bad = Matrix::Zero(1, 4);
  bad(0, 2) = std::nan("");
  EXPECT_THROW(LatentTrajectory("a", "", bad), DomainError);
}

TEST(TemporalCov, Examples) {
  EXPECT_DOUBLE_EQ(temporal_cov(2)->cov.matrix()(0, 0), 0.5);
  const Matrix& t3 = temporal_cov(3)->cov.matrix();
  EXPECT_NEAR(t3(0, 0), 2.0 / 3, 1e-15);
  EXPECT_NEAR(t3(0, 1), 1.0 / 3, 1e-15);
  EXPECT_NEAR(t3(1, 1), 2.0 / 3, 1e-15);
  // 1-based (s, t) = (2, 7).
  EXPECT_NEAR(temporal_cov(10)->cov.matrix()(1, 6), 0.6, 1e-15);
  EXPECT_THROW(temporal_cov(1), DomainError);
}

TEST(TemporalCov, MatchesEntryFormulaAndIsCached) {
  for (int T = 2; T <= 30; ++T) {
    EXPECT_EQ(temporal_cov_matrix(T), oracle::bridge_cov(T));
  }
  EXPECT_EQ(temporal_cov(17).get(), temporal_cov(17).get());
}

TEST(BridgeMean, Examples) {
  EXPECT_TRUE(bridge_mean(LatentTrajectory("z", "", Matrix::Zero(3, 6))).isZero());
  Matrix p(1, 5);
  p << 0, 9, 9, 9, 4;
  Matrix want(1, 3);
  want << 1, 2, 3;
  EXPECT_EQ(bridge_mean(LatentTrajectory("a", "", p)), want);
  Matrix q(2, 3);
  q << 1, 7, 0, 0, 7, 2;
  const Matrix m = bridge_mean(LatentTrajectory("b", "", q));
  EXPECT_DOUBLE_EQ(m(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(m(1, 0), 1.0);
}

TEST(Residuals, Examples) {
  Matrix line(2, 5);
  for (int t = 0; t <= 4; ++t) line.col(t) << 1.0 + 0.5 * t, -2.0 * t;
  EXPECT_LT(residuals(LatentTrajectory("l", "", line)).centered.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_DOUBLE_EQ(residuals(line3(0, 1, 0)).centered(0, 0), 1.0);

  std::mt19937_64 rng(3);
  const auto traj = random_traj(3, 7, rng);
  const Matrix back = residuals(traj).centered + bridge_mean(traj);
  EXPECT_LT((back - traj.points().middleCols(1, 6)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((residuals(traj).centered - oracle::residuals(traj.points())).cwiseAbs().maxCoeff(),
            1e-14);
}

TEST(SampleBridge, EndpointsExactAndDeterministic) {
  std::mt19937_64 rng(4);
  const auto spatial = SpatialCovariance(oracle::random_spd(3, rng));
  Vector s0(3), sT(3);
  s0 << 1, -2, 0.5;
  sT << 4, 0, -1;
  const auto a = sample_bridge(3, 12, spatial, s0, sT, 99);
  const auto b = sample_bridge(3, 12, spatial, s0, sT, 99);
  EXPECT_EQ(a.points().col(0), s0);
  EXPECT_EQ(a.points().col(12), sT);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.points(), sample_bridge(3, 12, spatial, s0, sT, 100).points());
  EXPECT_THROW(sample_bridge(2, 12, spatial, s0, sT, 1), DimensionMismatch);
}

TEST(SampleBridge, MidpointVarianceMoment) {
  const int T = 40;
  const auto spatial = SpatialCovariance::identity(1);
  const Vector zero = Vector::Zero(1);
  double sum = 0.0, sumsq = 0.0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    const double v = residuals(sample_bridge(1, T, spatial, zero, zero, s)).centered(0, T / 2 - 1);
    sum += v;
    sumsq += v * v;
  }
  const double var = (sumsq - sum * sum / n) / (n - 1);
  EXPECT_NEAR(var / (T / 4.0), 1.0, 0.05);
}

TEST(SampleBridge, SpatialCorrelationMoment) {
  Matrix s(2, 2);
  s << 1, 0.9, 0.9, 1;
  const auto spatial = SpatialCovariance(s);
  const Vector zero = Vector::Zero(2);
  const int T = 50;
  std::vector<double> x, y;
  for (int seed = 0; seed < 10000; ++seed) {
    const Matrix r = residuals(sample_bridge(2, T, spatial, zero, zero, seed)).centered;
    x.push_back(r(0, 24));
    y.push_back(r(1, 24));
  }
  double mx = oracle::mean(x), my = oracle::mean(y), sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  EXPECT_NEAR(sxy / std::sqrt(sxx * syy), 0.9, 0.02);
}

TEST(LogLikelihood, HandExamples) {
  const auto one = SpatialCovariance::identity(1);
  EXPECT_NEAR(log_likelihood(line3(0, 0, 0), one), -0.5723649, 1e-7);
  EXPECT_NEAR(log_likelihood(line3(0, 1, 0), one), -1.5723649, 1e-7);
  EXPECT_NEAR(log_likelihood(line3(0, 1, 0), one) - log_likelihood(line3(0, 0, 0), one), -1.0,
              1e-14);
}

TEST(LogLikelihood, MatchesDenseKroneckerDensity) {
  std::mt19937_64 rng(21);
  for (int d = 1; d <= 3; ++d) {
    for (int T = 2; T <= 5; ++T) {
      for (int rep = 0; rep < 25; ++rep) {
        const Matrix sigma = oracle::random_spd(d, rng);
        const auto traj = random_traj(d, T, rng);
        const Matrix r = oracle::residuals(traj.points());
        const Matrix cov = oracle::kron(oracle::bridge_cov(T), sigma);
        const double want = oracle::gaussian_logpdf(oracle::vec(r), cov);
        const double got = log_likelihood(traj, SpatialCovariance(sigma));
        EXPECT_NEAR(got, want, 1e-10 * std::abs(want));

        // Quadratic form alone.
        const double quad = oracle::vec(r).dot(Eigen::PartialPivLU<Matrix>(cov).solve(oracle::vec(r)));
        EXPECT_NEAR(trace_statistic(traj, SpatialCovariance(sigma)), quad, 1e-10 * quad);
      }
    }
  }
}

TEST(LogLikelihood, SigmaScalingIdentity) {
  std::mt19937_64 rng(22);
  for (int rep = 0; rep < 20; ++rep) {
    const int d = 1 + rep % 4, T = 3 + rep % 6;
    const Matrix sigma = oracle::random_spd(d, rng);
    const auto traj = random_traj(d, T, rng);
    const double c = 0.3 + 0.2 * rep;
    const double base = log_likelihood(traj, SpatialCovariance(sigma));
    const double tr = trace_statistic(traj, SpatialCovariance(sigma));
    const double scaled = log_likelihood(traj, SpatialCovariance(Matrix(c * sigma)));
    const double want = base - 0.5 * (T - 1) * d * std::log(c) - 0.5 * (1.0 / c - 1.0) * tr;
    EXPECT_NEAR(scaled, want, 1e-10 * std::abs(want));
  }
}

TEST(LogLikelihood, DimensionMismatch) {
  EXPECT_THROW(log_likelihood(line3(0, 1, 0), SpatialCovariance::identity(2)), DimensionMismatch);
}

TEST(Corpus, Additivity) {
  std::mt19937_64 rng(23);
  const auto spatial = SpatialCovariance(oracle::random_spd(2, rng));
  const auto a = random_traj(2, 2, rng, "a");
  const auto b = random_traj(2, 3, rng, "b");
  const std::vector<LatentTrajectory> one{a}, dup{a, a}, mixed{b, a};
  EXPECT_DOUBLE_EQ(log_likelihood_corpus(one, spatial), log_likelihood(a, spatial));
  EXPECT_DOUBLE_EQ(log_likelihood_corpus(dup, spatial), 2.0 * log_likelihood(a, spatial));
  EXPECT_NEAR(log_likelihood_corpus(mixed, spatial),
              log_likelihood(a, spatial) + log_likelihood(b, spatial), 1e-13);
}

TEST(Corpus, OrderIndependentBitwise) {
  std::mt19937_64 rng(24);
  std::vector<LatentTrajectory> trajs;
  for (int i = 0; i < 30; ++i) trajs.push_back(random_traj(3, 4 + i % 5, rng, "id" + std::to_string(i)));
  const auto spatial = SpatialCovariance(oracle::random_spd(3, rng));
  auto reversed = trajs;
  std::reverse(reversed.begin(), reversed.end());
  EXPECT_EQ(log_likelihood_corpus(trajs, spatial), log_likelihood_corpus(reversed, spatial));
  EXPECT_EQ(mle_sigma(trajs).matrix(), mle_sigma(reversed).matrix());
}

TEST(Mle, HandExampleAndErrors) {
  const std::vector<LatentTrajectory> one{line3(0, 1, 0)};
  EXPECT_NEAR(mle_sigma(one).matrix()(0, 0), 2.0, 1e-15);
  Matrix line(2, 6);
  for (int t = 0; t <= 5; ++t) line.col(t) << t, 2.0 * t;
  const std::vector<LatentTrajectory> lines{LatentTrajectory("l", "", line)};
  EXPECT_THROW(mle_sigma(lines), SingularEstimate);
  EXPECT_THROW(mle_sigma(std::vector<LatentTrajectory>{}), InsufficientData);
  std::mt19937_64 rng(1);
  const std::vector<LatentTrajectory> mixed{random_traj(2, 4, rng, "a"), random_traj(3, 4, rng, "b")};
  EXPECT_THROW(mle_sigma(mixed), DimensionMismatch);
}

TEST(Mle, StationaryUnderSymmetricPerturbations) {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const int d = 2 + rep % 3;
    const auto truth = SpatialCovariance(oracle::random_spd(d, rng));
    std::vector<LatentTrajectory> trajs;
    for (int i = 0; i < 15; ++i) {
      trajs.push_back(sample_bridge(d, 6 + i % 4, truth, Vector::Zero(d), Vector::Ones(d),
                                    rng(), "s" + std::to_string(i)));
    }
    const Matrix hat = mle_sigma(trajs).matrix();
    const double best = log_likelihood_corpus(trajs, SpatialCovariance(hat));
    for (int k = 0; k < 20; ++k) {
      Matrix e = oracle::random_matrix(d, d, rng);
      e = 0.5 * (e + e.transpose()).eval();
      for (double sign : {1.0, -1.0}) {
        const double moved = log_likelihood_corpus(trajs, SpatialCovariance(Matrix(hat + sign * 1e-4 * e)));
        EXPECT_LE(moved, best + 1e-8);
      }
    }
  }
}

TEST(Mle, AffineDriftInvariance) {
  std::mt19937_64 rng(32);
  const auto truth = SpatialCovariance(oracle::random_spd(3, rng));
  std::vector<LatentTrajectory> base, drifted;
  for (int i = 0; i < 8; ++i) {
    const auto t = sample_bridge(3, 9, truth, Vector::Zero(3), Vector::Ones(3), 100 + i,
                                 "d" + std::to_string(i));
    const Vector a = oracle::random_matrix(3, 1, rng), b = oracle::random_matrix(3, 1, rng);
    Matrix p = t.points();
    for (int s = 0; s <= 9; ++s) p.col(s) += a + s * b;
    base.push_back(t);
    drifted.emplace_back(t.id(), "", p);
  }
  for (int i = 0; i < 8; ++i) {
    EXPECT_LT((residuals(base[i]).centered - residuals(drifted[i]).centered).cwiseAbs().maxCoeff(),
              1e-10);
    EXPECT_NEAR(log_likelihood(base[i], truth), log_likelihood(drifted[i], truth), 1e-10);
  }
  EXPECT_LT((mle_sigma(base).matrix() - mle_sigma(drifted).matrix()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Mle, ErrorDecreasesWithSampleSize) {
  std::mt19937_64 rng(33);
  const auto truth = SpatialCovariance(oracle::random_spd(3, rng));
  std::vector<double> medians;
  for (int n : {25, 100, 400}) {
    std::vector<double> errs;
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<LatentTrajectory> trajs;
      for (int i = 0; i < n; ++i) {
        trajs.push_back(sample_bridge(3, 5, truth, Vector::Zero(3), Vector::Zero(3),
                                      derive_seed(n * 1000 + rep, "x", i), std::to_string(i)));
      }
      errs.push_back(relative_frobenius(mle_sigma(trajs).matrix(), truth.matrix()));
    }
    medians.push_back(median(errs));
  }
  EXPECT_GT(medians[0], medians[1]);
  EXPECT_GT(medians[1], medians[2]);
}

TEST(Shrinkage, Endpoints) {
  std::mt19937_64 rng(34);
  std::vector<LatentTrajectory> trajs;
  for (int i = 0; i < 5; ++i) trajs.push_back(random_traj(2, 6, rng, std::to_string(i)));
  const Matrix mle = mle_sigma(trajs).matrix();
  const double s2 = mle.trace() / 2;
  EXPECT_EQ(shrunk_mle(trajs, 0.0).sigma.matrix(), mle);
  EXPECT_LT((shrunk_mle(trajs, 1.0).sigma.matrix() - s2 * Matrix::Identity(2, 2)).norm(), 1e-14);
  EXPECT_LT((shrunk_mle(trajs, 0.5).sigma.matrix() - 0.5 * (mle + s2 * Matrix::Identity(2, 2))).norm(),
            1e-14);
  EXPECT_LT((shrunk_mle(trajs, 1.0, false).sigma.matrix() - Matrix::Identity(2, 2)).norm(), 1e-14);
  EXPECT_THROW(shrunk_mle(trajs, 1.5), DomainError);
}
