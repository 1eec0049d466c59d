#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

#include <occlab/stable.hpp>
#include <occlab/verification.hpp>

using namespace occlab;

namespace {

// (1/pi) int_0^inf cos(xi x) exp(-t xi^alpha) dxi, computed independently of the library.
double inversion_oracle(double alpha, double t, double x) {
  if (x == 0.0) return std::tgamma(1.0 / alpha) * std::pow(t, -1.0 / alpha) / (alpha * std::numbers::pi);
  boost::math::quadrature::ooura_fourier_cos<double> oc(1e-13);
  auto f = [&](double xi) { return std::exp(-t * std::pow(xi, alpha)); };
  return oc.integrate(f, std::abs(x)).first / std::numbers::pi;
}

std::vector<double> samples(double alpha, double dt, std::size_t n, std::uint64_t seed) {
  StableParams p(alpha);
  RandomStream rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = sample_increment(p, dt, rng);
  return v;
}

}  // namespace

TEST(Stable, RejectsInvalidAlpha) {
  EXPECT_THROW(StableParams(0.0), std::invalid_argument);
  EXPECT_THROW(StableParams(2.1), std::invalid_argument);
  EXPECT_THROW(StableParams(-1.0), std::invalid_argument);
  EXPECT_NO_THROW(StableParams(2.0));
  RandomStream rng(1);
  EXPECT_THROW(sample_increment(StableParams(1.5), 0.0, rng), std::invalid_argument);
}

TEST(Stable, DensityAtOrigin) {
  EXPECT_NEAR(density(StableParams(2.0), 1.0, 0.0), 1.0 / (2.0 * std::sqrt(std::numbers::pi)), 1e-12);
  EXPECT_NEAR(density(StableParams(1.0), 1.0, 0.0), 1.0 / std::numbers::pi, 1e-12);
  const double g = std::tgamma(1.0 / 0.75) / (0.75 * std::numbers::pi);
  EXPECT_NEAR(density(StableParams(0.75), 1.0, 0.0), g, 1e-10);
  EXPECT_NEAR(density_direct(StableParams(0.75), 0.0), g, 1e-10);
}

TEST(Stable, ClosedForms) {
  for (double x : {0.0, 0.3, 1.0, 4.0, 20.0}) {
    EXPECT_NEAR(density(StableParams(2.0), 1.0, x), std::exp(-x * x / 4.0) / std::sqrt(4.0 * std::numbers::pi), 1e-14);
    EXPECT_NEAR(density(StableParams(1.0), 1.0, x), 1.0 / (std::numbers::pi * (1.0 + x * x)), 1e-14);
  }
}

TEST(Stable, MatchesIndependentInversionAtTwoScales) {
  for (double alpha : {0.6, 0.75, 1.5}) {
    StableParams p(alpha);
    for (double t : {1.0, 10.0})
      for (double x : {0.0, 0.2, 1.0, 3.0, 7.5}) {
        const double ref = inversion_oracle(alpha, t, x);
        EXPECT_NEAR(density(p, t, x), ref, 1e-10 * std::max(1.0, ref)) << alpha << " " << t << " " << x;
      }
  }
}

TEST(Stable, SelfSimilarity) {
  for (double alpha : {0.5, 1.2, 1.8}) {
    StableParams p(alpha);
    for (double a : {0.5, 2.0, 10.0})
      for (double t : {0.7, 3.0})
        for (double x : {-5.0, 0.0, 0.4, 2.0, 30.0}) {
          const double lhs = density(p, a * t, x);
          const double rhs = std::pow(a, -1.0 / alpha) * density(p, t, std::pow(a, -1.0 / alpha) * x);
          EXPECT_NEAR(lhs, rhs, 1e-10);
        }
  }
}

TEST(Stable, TailBound) {
  for (double alpha : {0.4, 0.75, 1.0, 1.5, 1.9}) {
    StableParams p(alpha);
    double C = 0.0;
    std::vector<double> prod;
    for (double lx = -2.0; lx <= 4.0; lx += 0.05) {
      const double x = std::pow(10.0, lx);
      prod.push_back(density(p, 1.0, x) * (1.0 + std::pow(x, 1.0 + alpha)));
      C = std::max(C, prod.back());
    }
    // Bounded, and approaching the asymptotic constant Gamma(1+a) sin(pi a/2)/pi.
    const double cinf = std::tgamma(1.0 + alpha) * std::sin(std::numbers::pi * alpha / 2.0) / std::numbers::pi;
    EXPECT_LT(C, 10.0);
    EXPECT_NEAR(prod.back(), cinf, 0.05 * cinf) << alpha;
  }
}

TEST(Stable, SamplerVarianceAtAlpha2) {
  const auto v = samples(2.0, 1.0, 200000, 5);
  double m = 0, s = 0;
  for (double x : v) m += x;
  m /= v.size();
  for (double x : v) s += (x - m) * (x - m);
  s /= (v.size() - 1);
  EXPECT_NEAR(s, 2.0, 4.0 * std::sqrt(2.0 / v.size()) * 2.0);
}

TEST(Stable, SamplerKolmogorovSmirnov) {
  const std::size_t n = 100000;
  for (double alpha : {0.6, 1.0, 1.5, 2.0}) {
    StableParams p(alpha);
    const auto v = samples(alpha, 1.0, n, 11 + static_cast<std::uint64_t>(alpha * 10));
    const double d = ks_statistic(v, [&](double x) { return cdf(p, 1.0, x); });
    EXPECT_LT(d, ks_critical(n, 0.001)) << "alpha " << alpha;
  }
}

TEST(Stable, SamplerScalesAsSelfSimilar) {
  // dt = 2 sample law equals 2^{1/alpha} times the dt = 1 law.
  const double alpha = 1.5;
  StableParams p(alpha);
  const auto v = samples(alpha, 2.0, 100000, 21);
  const double s = std::pow(2.0, 1.0 / alpha);
  const double d = ks_statistic(v, [&](double x) { return cdf(p, 1.0, x / s); });
  EXPECT_LT(d, ks_critical(v.size(), 0.001));
}

TEST(Stable, VariateBufferMatchesLaw) {
  for (double alpha : {0.75, 1.0, 1.3, 2.0}) {
    StableParams p(alpha);
    RandomStream rng(99);
    VariateBuffer buf(p, rng);
    std::vector<double> v(50000);
    for (auto& x : v) x = buf.next();
    const double d = ks_statistic(v, [&](double x) { return cdf(p, 1.0, x); });
    EXPECT_LT(d, ks_critical(v.size(), 0.001)) << alpha;
  }
}

TEST(Stable, CdfAndQuantile) {
  for (double alpha : {0.5, 1.0, 1.7}) {
    StableParams p(alpha);
    EXPECT_NEAR(cdf(p, 1.0, 0.0), 0.5, 1e-12);
    for (double q : {0.01, 0.3, 0.9, 0.999}) EXPECT_NEAR(cdf(p, 2.0, quantile(p, 2.0, q)), q, 1e-9);
    EXPECT_NEAR(cdf(p, 1.0, 2.0) + cdf(p, 1.0, -2.0), 1.0, 1e-12);
  }
  EXPECT_NEAR(cdf(StableParams(1.0), 1.0, 1.0), 0.75, 1e-12);
}

TEST(DensityGrid, MassAndSymmetry) {
  for (double alpha : {1.0, 1.5, 2.0}) {
    StableParams p(alpha);
    const UniformGrid g{};
    const double tol = alpha == 2.0 ? 1e-8 : 1e-2;
    DensityGrid d(p, 1.0, g, tol);
    const double mass = d.f.integral();
    EXPECT_GE(mass, 1.0 - tol);
    EXPECT_LE(mass, 1.0 + 1e-12);
    for (std::size_t i = 1; i < g.n / 2; ++i) EXPECT_EQ(d.f.values[g.n / 2 - i], d.f.values[g.n / 2 + i]);
    for (double v : d.f.values) EXPECT_GE(v, 0.0);
  }
  EXPECT_THROW(DensityGrid(StableParams(0.7), 1.0, UniformGrid{}), AliasingError);
}

TEST(Semigroup, IdentityAtZero) {
  const auto g = UniformGrid{};
  const auto f = GridFunction::sample(g, [](double x) { return std::exp(-x * x); });
  const auto r = semigroup_apply(StableParams(1.3), 0.0, f);
  EXPECT_EQ(r.values, f.values);
}

TEST(Semigroup, GaussianClosedForm) {
  const auto g = UniformGrid{};
  const double sigma = 1.5, t = 0.8;
  const auto f = GridFunction::sample(g, [&](double x) { return std::exp(-x * x / (2 * sigma * sigma)); });
  const auto r = semigroup_apply(StableParams(2.0), t, f);
  const double v = sigma * sigma + 2 * t;
  double worst = 0.0;
  for (std::size_t i = 0; i < g.n; ++i) {
    const double x = g.x(i);
    if (std::abs(x) > 8.0) continue;  // interior, away from roundoff-level tails
    const double ref = sigma / std::sqrt(v) * std::exp(-x * x / (2 * v));
    worst = std::max(worst, std::abs(r.values[i] - ref) / ref);
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Semigroup, SemigroupPropertyAndMass) {
  const auto g = UniformGrid{};
  const auto f = GridFunction::sample(g, [](double x) { return std::exp(-x * x / 2.0); });
  for (double alpha : {0.8, 1.0, 1.6, 2.0}) {
    StableParams p(alpha);
    const auto a = semigroup_apply(p, 0.3, semigroup_apply(p, 0.5, f, 1.0), 1.0);
    const auto b = semigroup_apply(p, 0.8, f);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
    EXPECT_LT(worst, 1e-8);
    EXPECT_NEAR(b.integral(), f.integral(), 1e-8);
  }
}

TEST(Semigroup, AliasingError) {
  const auto g = UniformGrid::symmetric(8.0, 256);
  const auto f = GridFunction::sample(g, [](double x) { return std::exp(-x * x / 8.0); });
  EXPECT_THROW(semigroup_apply(StableParams(1.0), 1.0, f), AliasingError);
  const auto bad = GridFunction{UniformGrid{-1.0, 0.01, 200}, std::vector<double>(200, 0.0)};
  EXPECT_THROW(semigroup_apply(StableParams(1.0), 1.0, bad), std::invalid_argument);
}
