#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include <occlab/limit_theory.hpp>
#include <occlab/particle_system.hpp>
#include <occlab/verification.hpp>

using namespace occlab;
using std::numbers::pi;

namespace {

struct MeanSe {
  double mean, se;
};

template <class F>
MeanSe mc(std::size_t n, std::uint64_t seed, F&& f) {
  double s = 0, ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    RandomStream rng = RandomStream::for_replica(seed, i);
    const double x = f(rng);
    s += x;
    ss += x * x;
  }
  const double m = s / n;
  return {m, std::sqrt(std::max(0.0, ss / n - m * m) / (n - 1))};
}

SystemConfig small_cfg(double alpha, bool branching, double T) {
  SystemConfig c;
  c.stable = StableParams(alpha);
  c.branching = branching;
  c.rate_V = branching ? 1.0 : 0.0;
  c.horizon_T = T;
  return c;
}

}  // namespace

TEST(Config, Validation) {
  SystemConfig c;
  c.step_delta = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.step_delta = -0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.step_delta = 1e6;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.step_delta.reset();
  EXPECT_NO_THROW(c.validate());
  EXPECT_DOUBLE_EQ(c.delta(), 0.05);
  c.horizon_T = 20.0;
  EXPECT_DOUBLE_EQ(c.delta(), 0.01);
}

TEST(CutGrid, MergesObservations) {
  const auto g = CutGrid::build({0.25, 1.0, 1.37}, 0.5, 2.0);
  EXPECT_EQ(g.cuts, (std::vector<double>{0.0, 0.25, 0.5, 1.0, 1.37}));
  EXPECT_EQ(g.obs_cut, (std::vector<std::size_t>{1, 3, 4}));
  EXPECT_EQ(g.bucket_of, (std::vector<std::size_t>{0, 1, 1, 2}));
  EXPECT_THROW(CutGrid::build({1.0, 0.5}, 0.1, 2.0), std::invalid_argument);
}

TEST(Simulate, ConstantCountWithoutBranching) {
  auto cfg = small_cfg(1.5, false, 10.0);
  cfg.step_delta = 0.1;
  RandomStream rng(1);
  PointMeasure nu{{-3, 3}, {-3, -2, -1, 0, 1, 2}};
  // A bump this wide is 1 to within 1e-10 wherever the particles go.
  const std::vector<TestFunction> phis{TestFunction::gaussian_bump(0.0, 1e5, 1.0)};
  RunStats st;
  const auto v = simulate_occupation(cfg, nu, phis, {0.5, 1.0}, rng, &st);
  EXPECT_EQ(st.roots, 6u);
  EXPECT_EQ(st.branch_events, 0u);
  EXPECT_EQ(st.particle_steps, 6u * 100u);
  EXPECT_NEAR(v[0], 6.0 * 5.0, 1e-6);
  EXPECT_NEAR(v[1], 6.0 * 10.0, 1e-6);
}

TEST(Simulate, RejectsBadInput) {
  auto cfg = small_cfg(1.5, false, 10.0);
  RandomStream rng(1);
  PointMeasure nu{{0, 1}, {0.5}};
  const std::vector<TestFunction> phis{TestFunction::unit_gaussian()};
  cfg.step_delta = 0.0;
  EXPECT_THROW(simulate_occupation(cfg, nu, phis, {1.0}, rng), std::invalid_argument);
  cfg.step_delta.reset();
  EXPECT_THROW(simulate_occupation(cfg, nu, phis, {1.5}, rng), std::invalid_argument);
}

TEST(Simulate, BudgetGuard) {
  auto cfg = small_cfg(0.75, true, 100.0);
  cfg.rate_V = 5.0;
  cfg.step_budget = 1000;
  RandomStream rng(3);
  PointMeasure nu{{0, 50}, {}};
  for (int j = 0; j < 50; ++j) nu.atoms.push_back(j);
  const std::vector<TestFunction> phis{TestFunction::unit_gaussian()};
  EXPECT_THROW(simulate_occupation(cfg, nu, phis, {1.0}, rng), BudgetExceeded);
}

TEST(Simulate, BranchingPreservesMeanPopulation) {
  const std::vector<TestFunction> one{TestFunction::gaussian_bump(0.0, 1e5, 1.0)};
  const StableParams p(0.75);
  const auto r = mc(10000, 5, [&](RandomStream& rng) {
    double pop = 0.0;
    for (double x0 : {-2.0, -1.0, 0.0, 1.0, 2.0}) pop += single_particle_snapshots(p, true, 1.0, x0, {3.0}, one, rng)[0];
    return pop;
  });
  EXPECT_LT(std::abs(r.mean - 5.0), 3.0 * r.se) << r.mean << " se " << r.se;
  EXPECT_GT(r.se, 0.0);
}

TEST(Simulate, SingleParticleOccupationMean) {
  // E int_0^1 phi(eta_s) ds = int_0^1 T_s phi(0) ds = (sqrt 3 - 1) / sqrt(2 pi) for the unit Gaussian.
  auto cfg = small_cfg(2.0, false, 1.0);
  cfg.step_delta = 1e-3;
  const std::vector<TestFunction> phis{TestFunction::unit_gaussian()};
  const auto r = mc(100000, 9, [&](RandomStream& rng) { return single_particle_occupation(cfg, 0.0, {1.0}, phis, rng)[0]; });
  const double ref = (std::sqrt(3.0) - 1.0) / std::sqrt(2 * pi);
  EXPECT_LT(std::abs(r.mean - ref), 3.0 * r.se) << r.mean << " vs " << ref;
}

TEST(Simulate, SubtreeIndependence) {
  // Two atoms a million apart, each watched by its own bump.
  auto cfg = small_cfg(0.75, true, 5.0);
  const std::vector<TestFunction> phis{TestFunction::unit_gaussian(0.0), TestFunction::unit_gaussian(1e6)};
  const PointMeasure nu{{0, 1000001}, {0.0, 1e6}};
  const std::size_t n = 20000;
  Eigen::MatrixXd x(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    RandomStream rng = RandomStream::for_replica(13, i);
    const auto v = simulate_occupation(cfg, nu, phis, {1.0}, rng);
    x(i, 0) = v[0];
    x(i, 1) = v[1];
  }
  const auto e = estimate_cov(x);
  EXPECT_LT(std::abs(e.cov(0, 1)), 3.0 * e.se(0, 1));
  EXPECT_GT(e.cov(0, 0), 0.0);
}

TEST(Simulate, MixedMomentsMatchOracle) {
  const auto phi = TestFunction::unit_gaussian();
  const std::vector<TestFunction> phis{phi};
  for (auto [alpha, branching] : {std::pair{2.0, false}, std::pair{0.75, true}}) {
    const StableParams p(alpha);
    const auto r = mc(40000, 21, [&](RandomStream& rng) {
      const auto v = single_particle_snapshots(p, branching, 1.0, 0.0, {1.0, 2.0}, phis, rng);
      return v[0] * v[1];
    });
    const double ref = moment_oracle(branching, 1.0, p, 0.0, 1.0, 2.0, phi, phi).value;
    EXPECT_LT(std::abs(r.mean - ref), 3.0 * r.se) << alpha << ": " << r.mean << " vs " << ref;
  }
}

TEST(Fluctuation, CenteringAndZeroMean) {
  const std::vector<TestFunction> phis{TestFunction::unit_gaussian()};
  struct Case {
    double alpha, T;
    SamplerKind sampler;
    std::size_t n;
  };
  // The alpha = 0.5 window holds thousands of atoms, so it gets a shorter run.
  for (const auto& k : {Case{2.0, 20.0, SamplerKind::window, 2000}, Case{0.5, 20.0, SamplerKind::entrance, 2000},
                        Case{0.5, 10.0, SamplerKind::window, 300}}) {
    auto cfg = small_cfg(k.alpha, false, k.T);
    cfg.sampler = k.sampler;
    const auto th = ThetaLaw::poisson(1.0);
    const auto plan = make_plan(cfg, th, PlacementRule::iid_uniform(), phis, {0.5, 1.0},
                                classify_regime(k.alpha, false, th, 0.0));
    EXPECT_EQ(plan.sampler, k.sampler);
    // Centering is T t E(theta) int phi up to the window's truncation. For alpha < 1 the
    // mass escaping the window decays only like s / W^alpha, so there it only bounds from below.
    for (std::size_t i = 0; i < 2; ++i) {
      const double full = k.T * plan.obs_times[i];
      if (k.alpha < 1.0 && k.sampler == SamplerKind::window) {
        EXPECT_LT(plan.centering[i], full);
        EXPECT_GT(plan.centering[i], 0.85 * full);
      } else {
        EXPECT_NEAR(plan.centering[i], full, full * 2e-3);
      }
    }
    const auto s = run_replicas(plan, k.n, 31, 1);
    const auto e = estimate_cov(to_matrix(s));
    const double n = static_cast<double>(k.n);
    // Six mean checks in all, so the band is family-wise (false alarm ~4e-4).
    for (int c = 0; c < 2; ++c)
      EXPECT_LT(std::abs(e.mean(c)), 4.0 * std::sqrt(e.cov(c, c) / n)) << k.alpha << " " << to_string(k.sampler);
  }
}

TEST(Fluctuation, EntranceAndWindowAgree) {
  // Same law, two samplers: variances agree.
  const std::vector<TestFunction> phis{TestFunction::unit_gaussian()};
  const auto th = ThetaLaw::poisson(1.0);
  auto cfg = small_cfg(0.6, false, 5.0);
  cfg.step_delta = 0.01;
  std::vector<double> var, se;
  for (auto smp : {SamplerKind::window, SamplerKind::entrance}) {
    cfg.sampler = smp;
    const auto plan =
        make_plan(cfg, th, PlacementRule::iid_uniform(), phis, {1.0}, classify_regime(0.6, false, th, 0.0));
    const auto e = estimate_cov(to_matrix(run_replicas(plan, 2000, smp == SamplerKind::window ? 41 : 42, 1)));
    var.push_back(e.cov(0, 0));
    se.push_back(e.se(0, 0));
  }
  EXPECT_LT(std::abs(var[0] - var[1]), 3.0 * std::hypot(se[0], se[1])) << var[0] << " " << var[1];
}

TEST(Fluctuation, RiemannStepHalving) {
  // The expected raw integral at step d is the Riemann sum of the mean mass;
  // its shift when d is halved must stay below one Monte Carlo SE.
  const std::vector<TestFunction> phis{TestFunction::unit_gaussian(0.3)};
  const auto th = ThetaLaw::deterministic(1);
  auto cfg = small_cfg(1.5, false, 20.0);
  const auto reg = classify_regime(1.5, false, th, 0.0);
  const auto a = make_plan(cfg, th, PlacementRule::left_endpoint(), phis, {1.0}, reg);
  cfg.step_delta = cfg.delta() / 2.0;
  const auto b = make_plan(cfg, th, PlacementRule::left_endpoint(), phis, {1.0}, reg);
  const auto e = estimate_cov(to_matrix(run_replicas(a, 2000, 51, 1)));
  const double se_raw = std::sqrt(e.cov(0, 0) / 2000.0) * a.norming;
  EXPECT_LT(std::abs(a.centering[0] - b.centering[0]), se_raw);
  EXPECT_LT(std::abs(e.mean(0)), 3.0 * se_raw / a.norming);
}

TEST(Fluctuation, DeterministicAcrossThreads) {
  const std::vector<TestFunction> phis{TestFunction::unit_gaussian()};
  const auto th = ThetaLaw::poisson(1.0);
  const auto cfg = small_cfg(1.5, false, 10.0);
  const auto plan = make_plan(cfg, th, PlacementRule::iid_uniform(), phis, {0.5, 1.0}, classify_regime(1.5, false, th, 0));
  const auto a = run_replicas(plan, 40, 7, 1), b = run_replicas(plan, 40, 7, 3);
  std::ostringstream sa, sb;
  write_replicas_csv(sa, a);
  write_replicas_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str().substr(0, 32), "replica,t_index,phi_index,value\n");
}

TEST(Fluctuation, RejectsUnsupportedAndMismatchedRegime) {
  const std::vector<TestFunction> phis{TestFunction::unit_gaussian()};
  const auto th = ThetaLaw::poisson(1.0);
  auto cfg = small_cfg(1.5, true, 10.0);
  EXPECT_THROW(make_plan(cfg, th, PlacementRule::iid_uniform(), phis, {1.0}, classify_regime(1.5, true, th, 1.0)),
               RegimeError);
  cfg = small_cfg(1.5, false, 10.0);
  EXPECT_THROW(make_plan(cfg, th, PlacementRule::iid_uniform(), phis, {1.0}, classify_regime(0.5, false, th, 0.0)),
               RegimeError);
  cfg = small_cfg(0.75, true, 10.0);
  cfg.sampler = SamplerKind::entrance;
  EXPECT_THROW(make_plan(cfg, th, PlacementRule::iid_uniform(), phis, {1.0}, classify_regime(0.75, true, th, 1.0)),
               std::invalid_argument);
}

TEST(Fluctuation, WindowBudgetIsCheckedUpFront) {
  const std::vector<TestFunction> phis{TestFunction::unit_gaussian()};
  const auto th = ThetaLaw::poisson(1.0);
  auto cfg = small_cfg(0.4, true, 200.0);
  cfg.tau = 2.0;
  EXPECT_THROW(make_plan(cfg, th, PlacementRule::iid_uniform(), phis, {1.0, 2.0}, classify_regime(0.4, true, th, 1.0)),
               BudgetExceeded);
}
