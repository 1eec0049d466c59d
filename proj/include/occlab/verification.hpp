#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include "limit_theory.hpp"
#include "particle_system.hpp"

namespace occlab {

// ---------------------------------------------------------------------------
// Covariance estimation

struct CovEstimate {
  Eigen::MatrixXd cov;  // unbiased
  Eigen::MatrixXd se;   // delete-1 jackknife
  Eigen::VectorXd mean;
  std::size_t n = 0;
};

/// Rows are replicas, columns are observables.
inline CovEstimate estimate_cov(const Eigen::MatrixXd& x, std::size_t min_replicas = 100) {
  const auto n = x.rows(), p = x.cols();
  if (static_cast<std::size_t>(n) < min_replicas)
    throw std::invalid_argument("estimate_cov: need at least " + std::to_string(min_replicas) + " replicas, got " +
                                std::to_string(n));
  CovEstimate e;
  e.n = static_cast<std::size_t>(n);
  e.mean = x.colwise().mean();
  const Eigen::MatrixXd d = x.rowwise() - e.mean.transpose();
  e.cov = (d.transpose() * d) / static_cast<double>(n - 1);
  e.se = Eigen::MatrixXd::Zero(p, p);
  const double nn = static_cast<double>(n);
  // Leave-one-out covariances from running sums of the centered data.
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = a; b < p; ++b) {
      const double sab = d.col(a).dot(d.col(b));
      const double sa = d.col(a).sum(), sb = d.col(b).sum();
      double m = 0.0, m2 = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double xa = d(i, a), xb = d(i, b);
        const double c = (sab - xa * xb - (sa - xa) * (sb - xb) / (nn - 1.0)) / (nn - 2.0);
        m += c;
        m2 += c * c;
      }
      m /= nn;
      const double var = std::max(0.0, m2 / nn - m * m);
      e.se(a, b) = e.se(b, a) = std::sqrt((nn - 1.0) * var);
    }
  return e;
}

/// Converts replica samples into an (n x nobs*nphi) matrix.
inline Eigen::MatrixXd to_matrix(const std::vector<FluctuationSample>& s) {
  if (s.empty()) return {};
  const auto p = static_cast<Eigen::Index>(s[0].values.size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(s.size()), p);
  for (std::size_t r = 0; r < s.size(); ++r)
    for (Eigen::Index c = 0; c < p; ++c) m(static_cast<Eigen::Index>(r), c) = s[r].values[static_cast<std::size_t>(c)];
  return m;
}

// ---------------------------------------------------------------------------
// Normality tests

namespace detail {

/// P(K > lambda) for the Kolmogorov distribution.
inline double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

}  // namespace detail

/// sup |F_n - F| for a sample against a continuous cdf.
template <class Cdf>
double ks_statistic(std::vector<double> x, Cdf&& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

/// Asymptotic two-sided p-value of a one-sample KS distance.
inline double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  return detail::kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d);
}

/// Critical KS distance at level `level` (asymptotic).
inline double ks_critical(std::size_t n, double level) {
  return std::sqrt(-0.5 * std::log(level / 2.0)) / std::sqrt(static_cast<double>(n));
}

struct NormalityResult {
  double ad_statistic = 0.0;  // Stephens-adjusted A*^2
  double ad_pvalue = 1.0;
  double ks_statistic = 0.0;
  double ks_pvalue = 1.0;
};

/// Anderson-Darling and Kolmogorov-Smirnov against the fitted normal.
inline NormalityResult normality_test(std::vector<double> x, std::size_t min_n = 500) {
  if (x.size() < min_n) throw std::invalid_argument("normality_test: need at least " + std::to_string(min_n) + " samples");
  const double n = static_cast<double>(x.size());
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mu) * (v - mu);
  const double sd = std::sqrt(ss / (n - 1.0));
  NormalityResult r;
  if (!(sd > 0.0)) {
    r.ad_pvalue = r.ks_pvalue = 0.0;
    r.ad_statistic = r.ks_statistic = std::numeric_limits<double>::infinity();
    return r;
  }
  std::sort(x.begin(), x.end());
  const boost::math::normal_distribution<double> Z;
  double a2 = 0.0;
  const std::size_t N = x.size();
  for (std::size_t i = 0; i < N; ++i) {
    const double zi = (x[i] - mu) / sd, zj = (x[N - 1 - i] - mu) / sd;
    const double lf = std::log(std::max(boost::math::cdf(Z, zi), 1e-300));
    const double lc = std::log(std::max(boost::math::cdf(boost::math::complement(Z, zj)), 1e-300));
    a2 += (2.0 * static_cast<double>(i) + 1.0) * (lf + lc);
  }
  a2 = -n - a2 / n;
  const double a = a2 * (1.0 + 0.75 / n + 2.25 / (n * n));
  double p;
  // The upper fit turns back up past its minimum at a ~ 153.
  if (a >= 0.6) p = std::exp(1.2937 - 5.709 * std::min(a, 153.0) + 0.0186 * std::min(a, 153.0) * std::min(a, 153.0));
  else if (a >= 0.34) p = std::exp(0.9177 - 4.279 * a - 1.38 * a * a);
  else if (a >= 0.2) p = 1.0 - std::exp(-8.318 + 42.796 * a - 59.938 * a * a);
  else p = 1.0 - std::exp(-13.436 + 101.14 * a - 223.73 * a * a);
  r.ad_statistic = a;
  r.ad_pvalue = std::clamp(p, 0.0, 1.0);
  r.ks_statistic = ks_statistic(x, [&](double v) { return boost::math::cdf(Z, (v - mu) / sd); });
  r.ks_pvalue = ks_pvalue(r.ks_statistic, N);
  return r;
}

// ---------------------------------------------------------------------------
// Theory vs simulation

/// Limit covariance of (<X(s), phi>, <X(t), psi>).
inline double limit_covariance(const Regime& reg, const TestFunction& phi, const TestFunction& psi, double s,
                               double t) {
  switch (reg.label) {
    case RegimeLabel::NB_low:
      return (*reg.K) * (*reg.K) * phi.integral() * psi.integral() * xi_cov(reg.Etheta, reg.Vartheta, *reg.H, s, t);
    case RegimeLabel::B_low:
      return (*reg.K) * (*reg.K) * phi.integral() * psi.integral() * subfbm_cov(*reg.H, s, t);
    case RegimeLabel::NB_critical:
    case RegimeLabel::B_critical: return (*reg.K) * (*reg.K) * phi.integral() * psi.integral() * std::min(s, t);
    case RegimeLabel::NB_high: return wiener_cov(WienerKind::nb, reg.alpha, reg.Etheta, 0.0, phi, psi, s, t);
    case RegimeLabel::B_high: return wiener_cov(WienerKind::b, reg.alpha, reg.Etheta, reg.V, phi, psi, s, t);
    case RegimeLabel::B_unsupported: break;
  }
  throw RegimeError("no limit for B_unsupported");
}

/// Column c = i * nphi + j of a sample matrix corresponds to (times[i], phis[j]).
inline Eigen::MatrixXd theory_matrix(const Regime& reg, const std::vector<TestFunction>& phis,
                                     const std::vector<double>& times) {
  const std::size_t nphi = phis.size(), p = times.size() * nphi;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  // Pairings are expensive for wiener kinds; they factor as min(s,t) * c(phi, psi).
  std::vector<double> pair(nphi * nphi);
  for (std::size_t k = 0; k < nphi; ++k)
    for (std::size_t l = k; l < nphi; ++l)
      pair[k * nphi + l] = pair[l * nphi + k] = reg.high() ? limit_covariance(reg, phis[k], phis[l], 1.0, 1.0) : 0.0;
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) {
      const std::size_t i = a / nphi, k = a % nphi, j = b / nphi, l = b % nphi;
      m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          reg.high() ? pair[k * nphi + l] * std::min(times[i], times[j])
                     : limit_covariance(reg, phis[k], phis[l], times[i], times[j]);
    }
  return m;
}

/// n draws of the limit field at (times x phis), rows laid out as in
/// to_matrix. Uses a symmetric square root since low-regime limits are
/// rank one in the test functions.
inline Eigen::MatrixXd sample_limit(const Regime& reg, const std::vector<TestFunction>& phis,
                                    const std::vector<double>& times, std::size_t n, RandomStream& rng) {
  const Eigen::MatrixXd c = theory_matrix(reg, phis, times);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  if (es.info() != Eigen::Success) throw std::runtime_error("sample_limit: eigendecomposition failed");
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd f = es.eigenvectors() * ev.asDiagonal();
  const auto d = c.rows();
  Eigen::MatrixXd z(d, static_cast<Eigen::Index>(n));
  for (Eigen::Index col = 0; col < z.cols(); ++col)
    for (Eigen::Index r = 0; r < d; ++r) z(r, col) = rng.normal();
  return (f * z).transpose();
}

struct ReportEntry {
  std::size_t ti, tj, pk, pl;
  double estimate, se, theory, z;
  bool pass;
};

struct McReport {
  std::vector<ReportEntry> entries;
  std::vector<std::size_t> norm_t, norm_phi;
  std::vector<NormalityResult> normality;
  std::size_t replicas = 0;
  std::string fingerprint;
  Regime regime;
  std::vector<double> times;
  double band = 3.0;

  std::size_t passed() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](auto& e) { return e.pass; }));
  }

  nlohmann::json to_json() const {
    nlohmann::json ent = nlohmann::json::array();
    for (const auto& e : entries)
      ent.push_back({{"t_i", times[e.ti]}, {"t_j", times[e.tj]}, {"t_index_i", e.ti}, {"t_index_j", e.tj},
                     {"phi_k", e.pk}, {"phi_l", e.pl}, {"estimate", e.estimate}, {"se", e.se},
                     {"theory", e.theory}, {"z", e.z}, {"pass", e.pass}});
    nlohmann::json norm = nlohmann::json::array();
    for (std::size_t i = 0; i < normality.size(); ++i)
      norm.push_back({{"t_index", norm_t[i]}, {"phi_index", norm_phi[i]},
                      {"ad_statistic", normality[i].ad_statistic}, {"ad_pvalue", normality[i].ad_pvalue},
                      {"ks_statistic", normality[i].ks_statistic}, {"ks_pvalue", normality[i].ks_pvalue}});
    const bool all = passed() == entries.size();
    nlohmann::json j{{"replicas", replicas},
                     {"fingerprint", fingerprint},
                     {"regime", regime.to_json()},
                     {"band_se", band},
                     {"entries", ent},
                     {"normality", norm},
                     {"passed", passed()},
                     {"total", entries.size()},
                     {"verdict", all ? "pass" : "flag"}};
    if (!all)
      j["recommendation"] =
          "finite-T deviation: rerun with a larger horizon_T (e.g. 1000) and more replicas before drawing conclusions";
    return j;
  }

  void write_csv(std::ostream& os) const {
    os << "t_i,t_j,phi_k,phi_l,estimate,se,theory,z,pass\n";
    char buf[256];
    for (const auto& e : entries) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu,%zu,%.17g,%.17g,%.17g,%.17g,%d\n", times[e.ti], times[e.tj],
                    e.pk, e.pl, e.estimate, e.se, e.theory, e.z, e.pass ? 1 : 0);
      os << buf;
    }
  }
};

inline McReport compare_to_limit(const CovEstimate& est, const Regime& regime, const std::vector<TestFunction>& phis,
                                 const std::vector<double>& times, const ThetaLaw& theta, double band = 3.0) {
  if (regime.label == RegimeLabel::B_unsupported) throw RegimeError("compare_to_limit: unsupported regime");
  if (std::abs(theta.mean() - regime.Etheta) > 1e-12 || std::abs(theta.variance() - regime.Vartheta) > 1e-12)
    throw RegimeError("compare_to_limit: theta law does not match the regime");
  const std::size_t nphi = phis.size();
  if (static_cast<std::size_t>(est.cov.rows()) != times.size() * nphi)
    throw std::invalid_argument("compare_to_limit: estimate size does not match times x test functions");
  const Eigen::MatrixXd th = theory_matrix(regime, phis, times);
  McReport r;
  r.replicas = est.n;
  r.regime = regime;
  r.times = times;
  r.band = band;
  const std::size_t p = times.size() * nphi;
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = a; b < p; ++b) {
      const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
      ReportEntry e{a / nphi, b / nphi, a % nphi, b % nphi, est.cov(ia, ib), est.se(ia, ib), th(ia, ib), 0.0, false};
      const double diff = e.estimate - e.theory;
      e.z = e.se > 0.0 ? diff / e.se : (diff == 0.0 ? 0.0 : std::copysign(1e300, diff));
      e.pass = std::abs(e.z) <= band;
      r.entries.push_back(e);
    }
  return r;
}

inline void add_normality(McReport& r, const Eigen::MatrixXd& x, std::size_t nphi) {
  if (x.rows() < 500) return;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<double> v(x.col(c).data(), x.col(c).data() + x.rows());
    r.normality.push_back(normality_test(v));
    r.norm_t.push_back(static_cast<std::size_t>(c) / nphi);
    r.norm_phi.push_back(static_cast<std::size_t>(c) % nphi);
  }
}

// ---------------------------------------------------------------------------
// Increment decay

/// Cov(Z(1) - Z(0), Z(tau + 1) - Z(tau)) for a kernel with K(0, .) = 0.
inline double lag_increment_cov(const CovarianceModel& k, double lag) { return k(1.0, lag + 1.0) - k(1.0, lag); }

/// Least-squares slope of log|Cov| against log(lag).
inline double lrd_slope(const CovarianceModel& k, const std::vector<double>& lags) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(lags.size());
  for (double l : lags) {
    const double x = std::log(l), y = std::log(std::abs(lag_increment_cov(k, l)));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Window doubling diagnostic

struct DoublingResult {
  double base, base_se, doubled, doubled_se;
  bool ok;
};

/// Re-runs with the window half-width doubled and compares the variance at
/// (t_index, phi_index); ok when the shift is below one standard error.
inline DoublingResult window_doubling_diagnostic(const RunPlan& plan, std::size_t n, std::uint64_t seed,
                                                 std::size_t t_index, std::size_t phi_index, unsigned threads = 0) {
  if (plan.sampler != SamplerKind::window) throw std::invalid_argument("doubling diagnostic applies to window runs");
  // Solve R + c' (T tau)^{1/alpha} = 2 L for the widened constant c'.
  const double L = detail::window_half_width(plan.cfg, plan.phis);
  SystemConfig c2 = plan.cfg;
  c2.window_cw = plan.cfg.window_cw + L / std::pow(plan.cfg.horizon_T * plan.cfg.tau, 1.0 / plan.cfg.stable.alpha());
  c2.step_budget = plan.cfg.step_budget * 2.0;
  c2.sampler = SamplerKind::window;
  const RunPlan wide = make_plan(c2, plan.theta, plan.placement, plan.phis, plan.obs_times, plan.regime);
  const std::size_t col = t_index * plan.phis.size() + phi_index;
  auto var_of = [&](const RunPlan& p) {
    const auto e = estimate_cov(to_matrix(run_replicas(p, n, seed, threads)));
    const auto c = static_cast<Eigen::Index>(col);
    return std::pair{e.cov(c, c), e.se(c, c)};
  };
  const auto [b, bse] = var_of(plan);
  const auto [d, dse] = var_of(wide);
  return {b, bse, d, dse, std::abs(d - b) < std::max(bse, dse)};
}

// ---------------------------------------------------------------------------
// Replica files and oracle checks

/// Inverse of write_replicas_csv: one row per replica, column t_index * nphi + phi_index.
inline Eigen::MatrixXd read_replicas_csv(std::istream& in, std::size_t ntimes, std::size_t nphi) {
  std::string line;
  if (!std::getline(in, line) || line != "replica,t_index,phi_index,value")
    throw std::invalid_argument("replicas.csv: unexpected header");
  const std::size_t p = ntimes * nphi;
  std::vector<double> vals;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t r, t, f;
    double v;
    if (std::sscanf(line.c_str(), "%zu,%zu,%zu,%lf", &r, &t, &f, &v) != 4 || t >= ntimes || f >= nphi)
      throw std::invalid_argument("replicas.csv line " + std::to_string(lineno) + ": malformed row");
    const std::size_t k = vals.size();
    if (r != k / p || t * nphi + f != k % p)
      throw std::invalid_argument("replicas.csv line " + std::to_string(lineno) + ": rows out of order");
    vals.push_back(v);
  }
  if (vals.size() % p != 0) throw std::invalid_argument("replicas.csv: truncated final replica");
  const auto n = static_cast<Eigen::Index>(vals.size() / p);
  Eigen::MatrixXd m(n, static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = vals[static_cast<std::size_t>(i * m.cols() + c)];
  return m;
}

struct OracleCheck {
  double r, rp, oracle, mc, se, z;
  bool pass;
};

/// Monte Carlo E[<N_r, phi><N_r', psi>] for one particle at x0 against the
/// deterministic oracle. The SE of a mean is its delete-1 jackknife SE.
inline OracleCheck oracle_check(const StableParams& p, bool branching, double V, double x0, double r, double rp,
                                const TestFunction& phi, const TestFunction& psi, std::size_t n, std::uint64_t seed,
                                unsigned threads = 0, double band = 3.0) {
  if (n < 2) throw std::invalid_argument("oracle_check: need at least 2 replicas");
  const std::vector<TestFunction> fs{phi, psi};
  const bool same = r == rp;
  const std::vector<double> times = same ? std::vector<double>{r} : std::vector<double>{std::min(r, rp), std::max(r, rp)};
  const auto prods = run_parallel(0, n, seed, threads, [&](std::size_t, RandomStream& rng) {
    const auto v = single_particle_snapshots(p, branching, V, x0, times, fs, rng);
    // v is (time, function) row-major with two functions per time.
    const std::size_t ir = same ? 0 : (r < rp ? 0 : 1), irp = same ? 0 : 1 - ir;
    return v[ir * 2] * v[irp * 2 + 1];
  });
  double m = 0.0;
  for (double x : prods) m += x;
  m /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : prods) ss += (x - m) * (x - m);
  const double se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  const double o = moment_oracle(branching, V, p, x0, r, rp, phi, psi).value;
  const double z = se > 0.0 ? (m - o) / se : (m == o ? 0.0 : 1e300);
  return {r, rp, o, m, se, z, std::abs(z) <= band};
}

}  // namespace occlab
