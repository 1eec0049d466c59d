#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <occlab/gaussian_limits.hpp>
#include <occlab/verification.hpp>

using namespace occlab;

namespace {

// Share of entries whose empirical covariance lies within 3 jackknife SEs of the kernel.
double pass_share(const Eigen::MatrixXd& paths, const CovarianceModel& k, const std::vector<double>& g) {
  const auto e = estimate_cov(paths);
  int pass = 0, total = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i; j < g.size(); ++j) {
      const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
      pass += std::abs(e.cov(a, b) - k(g[i], g[j])) <= 3.0 * e.se(a, b);
      ++total;
    }
  return static_cast<double>(pass) / total;
}

}  // namespace

TEST(BuildModel, BrownianReduction) {
  const std::vector<double> g{0.5, 1.0, 1.5, 2.0};
  const auto m = build_model(CovarianceModel::subfbm(0.5), g);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(m.covariance(i, j), std::min(g[i], g[j]), 1e-15);
  EXPECT_EQ(m.jitter, 0.0);
  const Eigen::MatrixXd back = m.factor * m.factor.transpose();
  EXPECT_LT((back - m.covariance).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(BuildModel, DegenerateThetaGivesZeroPaths) {
  const std::vector<double> g{0.5, 1.0, 2.0};
  const auto m = build_model(CovarianceModel::theta_proc(0.5), g);
  RandomStream rng(1);
  const auto p = sample_paths(m, 100, rng);
  EXPECT_EQ(p.cwiseAbs().maxCoeff(), 0.0);
}

TEST(BuildModel, SubFbmFactorizes) {
  const std::vector<double> g{0.5, 1.0, 1.5, 2.0};
  const auto m = build_model(CovarianceModel::subfbm(5.0 / 6.0), g);
  const Eigen::MatrixXd back = m.factor * m.factor.transpose();
  EXPECT_LT((back - m.covariance).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildModel, RejectsBadGrids) {
  EXPECT_THROW(build_model(CovarianceModel::subfbm(0.7), {}), std::invalid_argument);
  EXPECT_THROW(build_model(CovarianceModel::subfbm(0.7), {1.0, 0.5}), std::invalid_argument);
  EXPECT_THROW(build_model(CovarianceModel::subfbm(0.7), {0.0, 0.5}), std::invalid_argument);
}

TEST(SamplePaths, EmpiricalCovariance) {
  const std::vector<double> g{0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
  RandomStream rng(5);
  for (const auto& k : {CovarianceModel::subfbm(0.75), CovarianceModel::theta_proc(0.75)}) {
    const auto paths = sample_paths(build_model(k, g), 50000, rng);
    EXPECT_GE(pass_share(paths, k, g), 0.9) << k.name();
  }
}

TEST(SamplePaths, VarianceFormula) {
  const double H = 0.7;
  const std::vector<double> g{0.5, 1.0, 3.0};
  RandomStream rng(8);
  const auto paths = sample_paths(build_model(CovarianceModel::subfbm(H), g), 100000, rng);
  const auto e = estimate_cov(paths);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double ref = (2.0 - std::pow(2.0, 2 * H - 1)) * std::pow(g[i], 2 * H);
    EXPECT_NEAR(subfbm_cov(H, g[i], g[i]), ref, 1e-14);
    EXPECT_LT(std::abs(e.cov(i, i) - ref), 3.0 * e.se(i, i));
  }
}

TEST(SamplePaths, BrownianIncrementsUncorrelated) {
  const std::vector<double> g{1.0, 2.0, 3.0, 4.0};
  RandomStream rng(9);
  const auto p = sample_paths(build_model(CovarianceModel::brownian(1.0), g), 50000, rng);
  Eigen::MatrixXd inc(p.rows(), 3);
  for (int c = 0; c < 3; ++c) inc.col(c) = p.col(c + 1) - p.col(c);
  const auto e = estimate_cov(inc);
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) EXPECT_LT(std::abs(e.cov(a, b)), 3.0 * e.se(a, b));
}

TEST(SampleXi, MatchesKernel) {
  const std::vector<double> g{0.5, 1.0, 1.5, 2.0};
  RandomStream rng(11);
  const auto paths = sample_xi(1.0, 2.0, 0.75, g, 50000, rng);
  EXPECT_GE(pass_share(paths, CovarianceModel::xi(1.0, 2.0, 0.75), g), 0.9);
  EXPECT_THROW(sample_xi(-1.0, 1.0, 0.75, g, 10, rng), std::invalid_argument);
}

TEST(Kernels, SelfSimilarity) {
  for (double H : {0.6, 0.75, 5.0 / 6.0})
    for (const auto& k : {CovarianceModel::subfbm(H), CovarianceModel::theta_proc(H), CovarianceModel::xi(1, 2, H)})
      for (double a : {0.5, 3.0})
        for (double s : {0.3, 1.0, 2.0})
          for (double t : {0.1, 1.0, 4.0}) EXPECT_NEAR(k(a * s, a * t), std::pow(a, 2 * H) * k(s, t), 1e-12);
}

TEST(WritePaths, Csv) {
  const std::vector<double> g{0.5, 1.0};
  Eigen::MatrixXd p(2, 2);
  p << 1.0, -2.5, 0.25, 3.0;
  std::ostringstream os;
  write_paths_csv(os, g, p);
  EXPECT_EQ(os.str(), "t=0.5,t=1\n1,-2.5\n0.25,3\n");
}
