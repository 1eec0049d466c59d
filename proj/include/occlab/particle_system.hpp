#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "limit_theory.hpp"
#include "measure.hpp"
#include "random.hpp"
#include "stable.hpp"
#include "test_function.hpp"

namespace occlab {

struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SamplerKind { automatic, window, entrance };

inline const char* to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::automatic: return "auto";
    case SamplerKind::window: return "window";
    case SamplerKind::entrance: return "entrance";
  }
  return "?";
}
inline SamplerKind sampler_from_string(const std::string& s) {
  if (s == "auto") return SamplerKind::automatic;
  if (s == "window") return SamplerKind::window;
  if (s == "entrance") return SamplerKind::entrance;
  throw std::invalid_argument("unknown sampler '" + s + "'");
}

struct SystemConfig {
  StableParams stable{2.0};
  bool branching = false;
  double rate_V = 0.0;
  double horizon_T = 200.0;
  double tau = 1.0;
  std::optional<double> step_delta;  // unset selects min(0.05, T tau / 2000)
  double window_cw = 12.0;
  double support_eps = 1e-12;
  double step_budget = 5e10;  // particle-steps per replica
  SamplerKind sampler = SamplerKind::automatic;

  double V() const noexcept { return branching ? rate_V : 0.0; }
  double delta() const noexcept { return step_delta ? *step_delta : std::min(0.05, horizon_T * tau / 2000.0); }

  void validate() const {
    if (!(horizon_T > 0.0)) throw std::invalid_argument("system.horizon_T must be positive");
    if (!(tau > 0.0)) throw std::invalid_argument("system.tau must be positive");
    if (step_delta && !(*step_delta > 0.0)) throw std::invalid_argument("system.step_delta must be positive");
    if (delta() > horizon_T * tau) throw std::invalid_argument("system.step_delta must not exceed T*tau");
    if (branching && !(rate_V >= 0.0)) throw std::invalid_argument("system.rate_V must be >= 0");
    if (!(window_cw > 0.0)) throw std::invalid_argument("system.window_cw must be positive");
  }
};

/// Time cuts 0 = c_0 < c_1 < ... < c_K: the Riemann grid merged with the
/// observation instants. obs_index[k] is the observation whose instant is
/// c_k, or -1.
struct CutGrid {
  std::vector<double> cuts;
  std::vector<double> len;
  std::vector<double> scale;  // len^{1/alpha}
  std::vector<int> obs_index;
  std::vector<std::size_t> obs_cut;    // cut index of each observation
  std::vector<std::size_t> bucket_of;  // step k -> first observation whose cut is >= k+1

  std::size_t steps() const noexcept { return len.size(); }

  static CutGrid build(const std::vector<double>& obs_abs, double delta, double alpha) {
    if (obs_abs.empty()) throw std::invalid_argument("at least one observation time is required");
    for (std::size_t i = 1; i < obs_abs.size(); ++i)
      if (!(obs_abs[i] > obs_abs[i - 1])) throw std::invalid_argument("observation times must be strictly increasing");
    if (obs_abs.front() < 0.0) throw std::invalid_argument("observation times must be >= 0");
    CutGrid g;
    const double end = obs_abs.back();
    g.cuts.push_back(0.0);
    std::size_t next_obs = 0;
    if (obs_abs[0] == 0.0) next_obs = 1;
    if (delta > 0.0) {
      const double tol = 1e-9 * delta;
      for (std::int64_t k = 1;; ++k) {
        const double c = static_cast<double>(k) * delta;
        while (next_obs < obs_abs.size() && obs_abs[next_obs] < c - tol) g.cuts.push_back(obs_abs[next_obs++]);
        if (c > end + tol) break;
        if (next_obs < obs_abs.size() && std::abs(obs_abs[next_obs] - c) <= tol) {
          g.cuts.push_back(obs_abs[next_obs++]);
        } else {
          g.cuts.push_back(c);
        }
      }
    }
    while (next_obs < obs_abs.size()) g.cuts.push_back(obs_abs[next_obs++]);
    g.len.resize(g.cuts.size() - 1);
    g.scale.resize(g.len.size());
    for (std::size_t k = 0; k < g.len.size(); ++k) {
      g.len[k] = g.cuts[k + 1] - g.cuts[k];
      g.scale[k] = std::pow(g.len[k], 1.0 / alpha);
    }
    g.obs_index.assign(g.cuts.size(), -1);
    g.obs_cut.resize(obs_abs.size());
    std::size_t j = 0;
    for (std::size_t k = 0; k < g.cuts.size() && j < obs_abs.size(); ++k)
      if (g.cuts[k] == obs_abs[j]) {
        g.obs_index[k] = static_cast<int>(j);
        g.obs_cut[j++] = k;
      }
    if (j != obs_abs.size()) throw std::logic_error("cut grid lost an observation instant");
    g.bucket_of.resize(g.len.size());
    std::size_t b = 0;
    for (std::size_t k = 0; k < g.len.size(); ++k) {
      while (g.obs_cut[b] < k + 1) ++b;
      g.bucket_of[k] = b;
    }
    return g;
  }
};

namespace detail {

// Bounding interval outside of which every test function vanishes; infinite
// when any of them has unbounded support.
struct SupportHull {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool compact = false;

  explicit SupportHull(const std::vector<TestFunction>& phis) {
    compact = !phis.empty();
    double l = std::numeric_limits<double>::infinity(), h = -l;
    for (const auto& f : phis) {
      if (!f.compact()) compact = false;
      l = std::min(l, f.support_lo());
      h = std::max(h, f.support_hi());
    }
    if (compact) {
      lo = l;
      hi = h;
    }
  }
  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
};

}  // namespace detail

/// Accumulates int_0^{c_{obs_cut[i]}} <N_s, phi_j> ds with left-endpoint sums.
class OccupationObserver {
 public:
  OccupationObserver(const CutGrid& g, const std::vector<TestFunction>& phis)
      : g_(&g), phis_(&phis), hull_(phis), nobs_(g.obs_cut.size()), nphi_(phis.size()),
        bucket_(nobs_ * nphi_, 0.0) {}

  void segment(std::size_t k, double x, double dt) {
    if (hull_.compact && !hull_.contains(x)) return;
    double* row = &bucket_[g_->bucket_of[k] * nphi_];
    for (std::size_t j = 0; j < nphi_; ++j) row[j] += (*phis_)[j](x) * dt;
  }
  void at_cut(std::size_t, double) {}

  /// values[i * nphi + j], cumulative over observation instants.
  std::vector<double> result() const {
    std::vector<double> out(bucket_);
    for (std::size_t i = 1; i < nobs_; ++i)
      for (std::size_t j = 0; j < nphi_; ++j) out[i * nphi_ + j] += out[(i - 1) * nphi_ + j];
    return out;
  }
  const detail::SupportHull& hull() const noexcept { return hull_; }

 private:
  const CutGrid* g_;
  const std::vector<TestFunction>* phis_;
  detail::SupportHull hull_;
  std::size_t nobs_, nphi_;
  std::vector<double> bucket_;
};

/// Accumulates <N_{c}, phi_j> at the observation cuts.
class SnapshotObserver {
 public:
  SnapshotObserver(const CutGrid& g, const std::vector<TestFunction>& phis)
      : g_(&g), phis_(&phis), nphi_(phis.size()), vals_(g.obs_cut.size() * phis.size(), 0.0) {}

  void segment(std::size_t, double, double) {}
  void at_cut(std::size_t k, double x) {
    const int i = g_->obs_index[k];
    if (i < 0) return;
    for (std::size_t j = 0; j < nphi_; ++j) vals_[static_cast<std::size_t>(i) * nphi_ + j] += (*phis_)[j](x);
  }
  std::vector<double> result() const { return vals_; }

 private:
  const CutGrid* g_;
  const std::vector<TestFunction>* phis_;
  std::size_t nphi_;
  std::vector<double> vals_;
};

struct RunStats {
  std::uint64_t particle_steps = 0;
  std::uint64_t branch_events = 0;
  std::uint64_t roots = 0;
  std::uint64_t entrance_candidates = 0;
};

namespace detail {

struct Particle {
  double x;
  std::size_t k;  // current step
  double off;     // time already spent inside step k
  double clock;   // remaining time to the next branch event
};

/// Runs the whole family of one particle started at x0 at the beginning of
/// step k0. Offspring are handled depth-first.
template <class Observer>
void run_tree(double x0, std::size_t k0, const CutGrid& g, double V, VariateBuffer& z, Observer& obs, RunStats& st,
              std::uint64_t budget, std::vector<Particle>& stack) {
  RandomStream& rng = z.stream();
  const double inv_a = 1.0 / z.alpha();
  const std::size_t K = g.steps();
  const double inf = std::numeric_limits<double>::infinity();
  auto fresh_clock = [&]() { return V > 0.0 ? rng.exponential(V) : inf; };
  ++st.roots;
  if (k0 == 0) obs.at_cut(0, x0);
  stack.clear();
  stack.push_back({x0, k0, 0.0, fresh_clock()});
  while (!stack.empty()) {
    Particle p = stack.back();
    stack.pop_back();
    while (p.k < K) {
      const double rest = g.len[p.k] - p.off;
      if (p.clock < rest) {
        obs.segment(p.k, p.x, p.clock);
        p.x += z.next() * std::pow(p.clock, inv_a);
        p.off += p.clock;
        ++st.particle_steps;
        ++st.branch_events;
        if (rng.uniform() < 0.5) {
          stack.push_back({p.x, p.k, p.off, fresh_clock()});
          stack.push_back({p.x, p.k, p.off, fresh_clock()});
        }
        break;
      }
      obs.segment(p.k, p.x, rest);
      p.x += z.next() * (p.off == 0.0 ? g.scale[p.k] : std::pow(rest, inv_a));
      p.clock -= rest;
      p.off = 0.0;
      ++p.k;
      ++st.particle_steps;
      if (g.obs_index[p.k] >= 0) obs.at_cut(p.k, p.x);
    }
    if (st.particle_steps > budget)
      throw BudgetExceeded("particle-step budget of " + std::to_string(budget) + " exceeded");
  }
}

}  // namespace detail

/// Raw occupation integrals int_0^{T t_i} <N_s, phi_j> ds for the system
/// started from `measure`; row-major (t_index, phi_index).
inline std::vector<double> simulate_occupation(const SystemConfig& cfg, const PointMeasure& measure,
                                               const std::vector<TestFunction>& phis,
                                               const std::vector<double>& obs_times, RandomStream& rng,
                                               RunStats* stats = nullptr) {
  cfg.validate();
  if (!(cfg.delta() > 0.0)) throw std::invalid_argument("step_delta must be positive");
  for (double t : obs_times)
    if (t < 0.0 || t > cfg.tau * (1.0 + 1e-12)) throw std::invalid_argument("observation times must lie in [0, tau]");
  std::vector<double> abs_t(obs_times.size());
  for (std::size_t i = 0; i < obs_times.size(); ++i) abs_t[i] = cfg.horizon_T * obs_times[i];
  const CutGrid g = CutGrid::build(abs_t, cfg.delta(), cfg.stable.alpha());
  OccupationObserver obs(g, phis);
  VariateBuffer z(cfg.stable, rng);
  RunStats st;
  std::vector<detail::Particle> stack;
  const auto budget = static_cast<std::uint64_t>(cfg.step_budget);
  for (double a : measure.atoms) detail::run_tree(a, 0, g, cfg.V(), z, obs, st, budget, stack);
  if (stats) *stats = st;
  return obs.result();
}

/// <N_{r_i}, phi_j> for the family of a single particle started at x0, at
/// absolute times r_i; exact (no Riemann grid).
inline std::vector<double> single_particle_snapshots(const StableParams& stable, bool branching, double V, double x0,
                                                     const std::vector<double>& r, const std::vector<TestFunction>& phis,
                                                     RandomStream& rng, double step_budget = 1e9) {
  const CutGrid g = CutGrid::build(r, 0.0, stable.alpha());
  SnapshotObserver obs(g, phis);
  VariateBuffer z(stable, rng);
  RunStats st;
  std::vector<detail::Particle> stack;
  detail::run_tree(x0, 0, g, branching ? V : 0.0, z, obs, st, static_cast<std::uint64_t>(step_budget), stack);
  return obs.result();
}

/// int_0^{r_i} phi_j(eta_s) ds family totals for one particle at x0 on the Riemann grid.
inline std::vector<double> single_particle_occupation(const SystemConfig& cfg, double x0, const std::vector<double>& r,
                                                      const std::vector<TestFunction>& phis, RandomStream& rng) {
  const CutGrid g = CutGrid::build(r, cfg.delta(), cfg.stable.alpha());
  OccupationObserver obs(g, phis);
  VariateBuffer z(cfg.stable, rng);
  RunStats st;
  std::vector<detail::Particle> stack;
  detail::run_tree(x0, 0, g, cfg.V(), z, obs, st, static_cast<std::uint64_t>(cfg.step_budget), stack);
  return obs.result();
}

// ---------------------------------------------------------------------------
// Fluctuation samples

struct FluctuationSample {
  std::vector<double> times;
  std::size_t nphi = 0;
  std::vector<double> values;  // (t_index, phi_index) row-major
  double norming = 1.0;
  RunStats stats;

  double at(std::size_t i, std::size_t j) const { return values[i * nphi + j]; }
};

/// Everything about a run that does not change between replicas.
struct RunPlan {
  SystemConfig cfg;
  ThetaLaw theta;
  PlacementRule placement = PlacementRule::iid_uniform();
  std::vector<TestFunction> phis;
  std::vector<double> obs_times;
  Regime regime;
  SamplerKind sampler = SamplerKind::window;  // resolved
  Window window;
  CutGrid cuts;
  std::vector<double> centering;  // (t_index, phi_index), unnormalized
  double norming = 1.0;
  std::string sampler_reason;

  nlohmann::json to_json() const {
    return {{"sampler", to_string(sampler)},
            {"sampler_reason", sampler_reason},
            {"window", {window.lo, window.hi}},
            {"steps", cuts.steps()},
            {"delta", cfg.delta()},
            {"norming", norming},
            {"regime", regime.to_json()}};
  }
};

namespace detail {

inline bool entrance_eligible(const SystemConfig& cfg, const ThetaLaw& theta, const PlacementRule& placement,
                              const std::vector<TestFunction>& phis, std::string* why) {
  auto no = [&](const char* m) {
    if (why) *why = m;
    return false;
  };
  if (cfg.branching && cfg.rate_V > 0.0) return no("branching system");
  if (theta.kind() != ThetaLaw::Kind::poisson) return no("theta is not Poisson");
  if (placement.kind() != PlacementRule::Kind::iid_uniform) return no("placement is not iid_uniform");
  if (!SupportHull(phis).compact) return no("a test function has unbounded support");
  return true;
}

inline double window_half_width(const SystemConfig& cfg, const std::vector<TestFunction>& phis) {
  double r = 0.0;
  for (const auto& f : phis) r = std::max(r, std::abs(f.center()) + f.support_radius(cfg.support_eps));
  return r + cfg.window_cw * std::pow(cfg.horizon_T * cfg.tau, 1.0 / cfg.stable.alpha());
}

}  // namespace detail

inline RunPlan make_plan(const SystemConfig& cfg, const ThetaLaw& theta, const PlacementRule& placement,
                         const std::vector<TestFunction>& phis, const std::vector<double>& obs_times,
                         const Regime& regime) {
  cfg.validate();
  if (phis.empty()) throw std::invalid_argument("at least one test function is required");
  if (regime.label == RegimeLabel::B_unsupported) throw RegimeError("regime B_unsupported cannot be simulated");
  const Regime expect = classify_regime(cfg.stable.alpha(), cfg.branching, theta, cfg.rate_V);
  if (expect.label != regime.label) throw RegimeError("regime does not match (alpha, branching)");
  for (double t : obs_times)
    if (!(t > 0.0) || t > cfg.tau * (1.0 + 1e-12)) throw std::invalid_argument("observation times must lie in (0, tau]");
  RunPlan plan;
  plan.cfg = cfg;
  plan.theta = theta;
  plan.placement = placement;
  plan.phis = phis;
  plan.obs_times = obs_times;
  plan.regime = regime;
  std::vector<double> abs_t(obs_times.size());
  for (std::size_t i = 0; i < obs_times.size(); ++i) abs_t[i] = cfg.horizon_T * obs_times[i];
  plan.cuts = CutGrid::build(abs_t, cfg.delta(), cfg.stable.alpha());
  plan.norming = regime.norming(cfg.horizon_T);

  std::string why;
  const bool ok = detail::entrance_eligible(cfg, theta, placement, phis, &why);
  switch (cfg.sampler) {
    case SamplerKind::entrance:
      if (!ok) throw std::invalid_argument("entrance sampler not applicable: " + why);
      plan.sampler = SamplerKind::entrance;
      plan.sampler_reason = "requested";
      break;
    case SamplerKind::window:
      plan.sampler = SamplerKind::window;
      plan.sampler_reason = "requested";
      break;
    case SamplerKind::automatic:
      if (ok && cfg.stable.alpha() < 1.0) {
        plan.sampler = SamplerKind::entrance;
        plan.sampler_reason = "alpha < 1 with Poisson uniform initial law";
      } else {
        plan.sampler = SamplerKind::window;
        plan.sampler_reason = ok ? "alpha >= 1" : why;
      }
      break;
  }

  const std::size_t nobs = obs_times.size(), nphi = phis.size();
  plan.centering.assign(nobs * nphi, 0.0);
  if (plan.sampler == SamplerKind::entrance) {
    const detail::SupportHull hull(phis);
    plan.window = {static_cast<std::int64_t>(std::floor(hull.lo)), static_cast<std::int64_t>(std::ceil(hull.hi))};
    for (std::size_t i = 0; i < nobs; ++i)
      for (std::size_t j = 0; j < nphi; ++j) plan.centering[i * nphi + j] = theta.mean() * abs_t[i] * phis[j].integral();
    return plan;
  }

  plan.window = Window::symmetric(detail::window_half_width(cfg, phis));
  const double expected_steps =
      theta.mean() * static_cast<double>(plan.window.size()) * static_cast<double>(plan.cuts.steps());
  if (expected_steps > cfg.step_budget)
    throw BudgetExceeded("window sampler needs about " + std::to_string(expected_steps) +
                         " particle-steps per replica (budget " + std::to_string(cfg.step_budget) + ", window " +
                         std::to_string(plan.window.size()) + " unit intervals, " +
                         std::to_string(plan.cuts.steps()) + " steps)");
  // Left-endpoint Riemann sums of the window-restricted mean mass.
  for (std::size_t j = 0; j < nphi; ++j) {
    std::vector<double> bucket(nobs, 0.0);
    for (std::size_t k = 0; k < plan.cuts.steps(); ++k) {
      const double m = mean_occupation_mass(theta, placement, cfg.stable, phis[j], plan.cuts.cuts[k], plan.window);
      bucket[plan.cuts.bucket_of[k]] += m * plan.cuts.len[k];
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < nobs; ++i) {
      acc += bucket[i];
      plan.centering[i * nphi + j] = acc;
    }
  }
  return plan;
}

namespace detail {

// Particles of a homogeneous Poisson system (intensity lambda) that ever sit
// in B = [lo, hi] at a cut are generated directly at their first such cut:
// candidates uniform in B at cut k are kept iff the time-reversed walk avoids
// B at cuts k-1, ..., 0. Every other particle contributes nothing.
inline std::vector<double> entrance_occupation(const RunPlan& plan, RandomStream& rng, RunStats& st) {
  const CutGrid& g = plan.cuts;
  OccupationObserver obs(g, plan.phis);
  const double lo = obs.hull().lo, hi = obs.hull().hi;
  const double width = hi - lo;
  const double lambda = plan.theta.mean();
  VariateBuffer z(plan.cfg.stable, rng);
  std::vector<Particle> stack;
  const auto budget = static_cast<std::uint64_t>(plan.cfg.step_budget);
  const std::size_t K = g.steps();
  for (std::size_t k = 0; k < K; ++k) {
    const std::int64_t n = rng.poisson(lambda * width);
    st.entrance_candidates += static_cast<std::uint64_t>(n);
    for (std::int64_t c = 0; c < n; ++c) {
      const double y = lo + width * rng.uniform();
      bool fresh = true;
      double w = y;
      for (std::size_t j = k; j-- > 0;) {
        w += z.next() * g.scale[j];
        ++st.particle_steps;
        if (w >= lo && w <= hi) {
          fresh = false;
          break;
        }
      }
      if (!fresh) continue;
      run_tree(y, k, g, 0.0, z, obs, st, budget, stack);
    }
    if (st.particle_steps > budget)
      throw BudgetExceeded("particle-step budget of " + std::to_string(budget) + " exceeded");
  }
  return obs.result();
}

}  // namespace detail

/// One replica: draws nu (or the entering particles), simulates, centers,
/// divides by F_T.
inline FluctuationSample fluctuation_sample(const RunPlan& plan, RandomStream& rng) {
  FluctuationSample s;
  s.times = plan.obs_times;
  s.nphi = plan.phis.size();
  s.norming = plan.norming;
  std::vector<double> raw;
  if (plan.sampler == SamplerKind::entrance) {
    raw = detail::entrance_occupation(plan, rng, s.stats);
  } else {
    const PointMeasure nu = build_measure(plan.theta, plan.placement, plan.window, rng);
    OccupationObserver obs(plan.cuts, plan.phis);
    VariateBuffer z(plan.cfg.stable, rng);
    std::vector<detail::Particle> stack;
    const auto budget = static_cast<std::uint64_t>(plan.cfg.step_budget);
    for (double a : nu.atoms) detail::run_tree(a, 0, plan.cuts, plan.cfg.V(), z, obs, s.stats, budget, stack);
    raw = obs.result();
  }
  s.values.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) s.values[i] = (raw[i] - plan.centering[i]) / plan.norming;
  return s;
}

inline FluctuationSample fluctuation_sample(const SystemConfig& cfg, const ThetaLaw& theta,
                                            const PlacementRule& placement, const std::vector<TestFunction>& phis,
                                            const std::vector<double>& obs_times, const Regime& regime,
                                            RandomStream& rng) {
  return fluctuation_sample(make_plan(cfg, theta, placement, phis, obs_times, regime), rng);
}

/// Runs replicas [first, first + n) on `threads` workers. Replica i always
/// uses stream mix_seed(master, i), so results do not depend on threading.
template <class Fn>
auto run_parallel(std::size_t first, std::size_t n, std::uint64_t master, unsigned threads, Fn&& fn,
                  const std::function<void(std::size_t)>& progress = {}) {
  using R = decltype(fn(std::size_t{0}, std::declval<RandomStream&>()));
  std::vector<R> out(n);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0}, done{0};
  std::exception_ptr err;
  std::mutex mu;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard lock(mu);
        if (err) return;
      }
      try {
        RandomStream rng = RandomStream::for_replica(master, first + i);
        out[i] = fn(first + i, rng);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!err) err = std::current_exception();
        return;
      }
      const std::size_t d = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard lock(mu);
        progress(d);
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
  return out;
}

inline std::vector<FluctuationSample> run_replicas(const RunPlan& plan, std::size_t n, std::uint64_t master,
                                                   unsigned threads = 0,
                                                   const std::function<void(std::size_t)>& progress = {}) {
  return run_parallel(
      0, n, master, threads, [&](std::size_t, RandomStream& rng) { return fluctuation_sample(plan, rng); }, progress);
}

/// CSV with columns replica,t_index,phi_index,value.
inline void write_replicas_csv(std::ostream& os, const std::vector<FluctuationSample>& samples) {
  os << "replica,t_index,phi_index,value\n";
  char buf[64];
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const auto& s = samples[r];
    for (std::size_t i = 0; i < s.times.size(); ++i)
      for (std::size_t j = 0; j < s.nphi; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", s.at(i, j));
        os << r << ',' << i << ',' << j << ',' << buf << '\n';
      }
  }
}

}  // namespace occlab
