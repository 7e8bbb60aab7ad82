#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "bbridge/score.hpp"
#include "support/oracles.hpp"

using namespace bbridge;

namespace {

LatentTrajectory line3(double a, double b, double c) {
  Matrix p(1, 3);
  p << a, b, c;
  return {"t", "", p};
}

LatentTrajectory scale_residuals(const LatentTrajectory& traj, double c) {
  Matrix p = traj.points();
  p.middleCols(1, p.cols() - 2) = bridge_mean(traj) + c * residuals(traj).centered;
  return {traj.id(), traj.domain(), p};
}

}  // namespace

TEST(BbScore, StraightLineScoresZero) {
  Matrix line(3, 8);
  for (int t = 0; t < 8; ++t) line.col(t) << t, 1.0 - t, 0.25 * t;
  const auto r = bbscore(LatentTrajectory("l", "", line), SpatialCovariance::identity(3));
  EXPECT_LT(r.bbscore, 1e-28);
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_EQ(r.dof, 18);
}

TEST(BbScore, HandExample) {
  const auto r = bbscore(line3(0, 1, 0), SpatialCovariance::identity(1));
  EXPECT_NEAR(r.statistic, 2.0, 1e-15);
  EXPECT_EQ(r.dof, 1);
  EXPECT_NEAR(r.p_value, oracle::chi_square_sf_quadrature(2.0, 1), 1e-10);
  EXPECT_NEAR(r.p_value, 0.1573, 1e-4);
}

TEST(BbScore, OwnMleGivesOne) {
  std::mt19937_64 rng(1);
  for (int d = 1; d <= 4; ++d) {
    for (int T : {d + 1, d + 3, 20}) {
      const LatentTrajectory traj("x", "", oracle::random_matrix(d, T + 1, rng));
      const std::vector<LatentTrajectory> one{traj};
      EXPECT_NEAR(bbscore(traj, mle_sigma(one)).bbscore, 1.0, 1e-10);
    }
  }
}

TEST(BbScore, ReportInvariants) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 30; ++rep) {
    const int d = 1 + rep % 3, T = 2 + rep % 9;
    const LatentTrajectory traj("x", "", oracle::random_matrix(d, T + 1, rng));
    const auto r = bbscore(traj, SpatialCovariance(oracle::random_spd(d, rng)));
    EXPECT_NEAR(r.statistic, r.bbscore * r.dof, 1e-12 * r.statistic);
    EXPECT_EQ(r.dof, (T - 1) * d);
    EXPECT_EQ(r.p_value, chi_square_sf(r.statistic, r.dof));
  }
}

TEST(BbScore, ResidualScalingIsQuadratic) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const int d = 1 + rep % 4, T = 3 + rep % 7;
    const LatentTrajectory traj("x", "", oracle::random_matrix(d, T + 1, rng));
    const auto spatial = SpatialCovariance(oracle::random_spd(d, rng));
    const double c = 1.1 + 0.3 * rep;
    EXPECT_NEAR(bbscore(scale_residuals(traj, c), spatial).bbscore,
                c * c * bbscore(traj, spatial).bbscore, 1e-10 * c * c * bbscore(traj, spatial).bbscore);
  }
}

TEST(BbScoreBatch, EmptySingleAndMean) {
  EXPECT_TRUE(bbscore_batch(std::vector<LatentTrajectory>{}, SpatialCovariance::identity(2)).empty());
  const std::vector<LatentTrajectory> one{line3(0, 1, 0)};
  const auto single = bbscore_batch(one, SpatialCovariance::identity(1));
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].statistic, bbscore(one[0], SpatialCovariance::identity(1)).statistic);

  std::mt19937_64 rng(4);
  const auto truth = SpatialCovariance(oracle::random_spd(4, rng));
  std::vector<LatentTrajectory> trajs;
  for (int i = 0; i < 100; ++i) {
    trajs.push_back(sample_bridge(4, 30, truth, Vector::Zero(4), Vector::Ones(4), 500 + i,
                                  std::to_string(i)));
  }
  double sum = 0.0;
  for (const auto& r : bbscore_batch(trajs, truth)) sum += r.bbscore;
  EXPECT_GE(sum / 100, 0.9);
  EXPECT_LE(sum / 100, 1.1);
}

TEST(BbScoreBatch, ErrorNamesTrajectory) {
  std::vector<LatentTrajectory> trajs{line3(0, 1, 0), LatentTrajectory("bad-one", "", Matrix::Zero(2, 4))};
  try {
    bbscore_batch(trajs, SpatialCovariance::identity(1));
    FAIL() << "expected an error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("bad-one"), std::string::npos);
  }
}

TEST(Heuristic, HandExample) {
  EXPECT_NEAR(heuristic_bbscore(line3(0, 1, 0), 2.0), -1.4189385, 1e-7);
  EXPECT_NEAR(heuristic_bbscore(line3(0, 1, 0), 2.0),
              -0.5 * std::log(2.0 * std::numbers::pi) - 0.5, 1e-14);
}

TEST(Heuristic, ProfileScalingIdentity) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const int d = 1 + rep % 3, T = 3 + rep % 6;
    const LatentTrajectory traj("x", "", oracle::random_matrix(d, T + 1, rng));
    const double c = 0.4 + 0.25 * rep;
    EXPECT_NEAR(heuristic_bbscore(scale_residuals(traj, c)) - heuristic_bbscore(traj),
                -(T - 1) * d * std::log(c), 1e-9);
  }
}

TEST(Heuristic, StraightLineIsDegenerate) {
  EXPECT_THROW(heuristic_bbscore(line3(0, 0.5, 1)), DegenerateVariance);
  EXPECT_THROW(heuristic_bbscore(line3(0, 1, 0), 0.0), DegenerateVariance);
}

// The heuristic is the density under a block-diagonal covariance
// diag(Sigma_T) (x) sigma2 I; its gap to the exact likelihood under
// sigma2 I splits into a log-determinant part and a quadratic part.
TEST(Heuristic, DenseGapDecomposition) {
  std::mt19937_64 rng(6);
  for (int d = 1; d <= 3; ++d) {
    for (int T = 2; T <= 5; ++T) {
      const auto truth = SpatialCovariance(oracle::random_spd(d, rng));
      const auto traj = sample_bridge(d, T, truth, Vector::Zero(d), Vector::Ones(d), rng(), "x");
      const double s2 = heuristic_sigma2(traj);
      const Matrix iso = s2 * Matrix::Identity(d, d);
      const Matrix kt = oracle::bridge_cov(T);
      const Matrix kdiag = Matrix(kt.diagonal().asDiagonal());
      const Vector x = oracle::vec(oracle::residuals(traj.points()));

      const double dense_heur = oracle::gaussian_logpdf(x, oracle::kron(kdiag, iso));
      EXPECT_NEAR(heuristic_bbscore(traj), dense_heur, 1e-10 * std::abs(dense_heur));

      const double exact = log_likelihood(traj, SpatialCovariance(iso));
      double sum_log_diag = 0.0;
      for (int t = 1; t < T; ++t) sum_log_diag += std::log(double(t) * (T - t) / T);
      const double logdet_gap = -0.5 * d * (std::log(kt.determinant()) - sum_log_diag);
      const Matrix full = oracle::kron(kt, iso), diag = oracle::kron(kdiag, iso);
      const double quad_gap = -0.5 * (x.dot(full.lu().solve(x)) - x.dot(diag.lu().solve(x)));
      EXPECT_NEAR(exact - heuristic_bbscore(traj), logdet_gap + quad_gap, 1e-10);
    }
  }
}
