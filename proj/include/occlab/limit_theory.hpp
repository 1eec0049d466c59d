#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>
#include <json.hpp>

#include "measure.hpp"
#include "stable.hpp"
#include "test_function.hpp"

namespace occlab {

enum class RegimeLabel { NB_low, NB_critical, NB_high, B_low, B_critical, B_high, B_unsupported };

inline const char* to_string(RegimeLabel r) {
  switch (r) {
    case RegimeLabel::NB_low: return "NB_low";
    case RegimeLabel::NB_critical: return "NB_critical";
    case RegimeLabel::NB_high: return "NB_high";
    case RegimeLabel::B_low: return "B_low";
    case RegimeLabel::B_critical: return "B_critical";
    case RegimeLabel::B_high: return "B_high";
    case RegimeLabel::B_unsupported: return "B_unsupported";
  }
  return "?";
}

struct RegimeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Regime {
  RegimeLabel label = RegimeLabel::NB_low;
  std::optional<double> H;
  std::optional<double> K;
  double alpha = 2.0;
  bool branching = false;
  double V = 0.0;
  double Etheta = 1.0;
  double Vartheta = 0.0;

  bool high() const noexcept { return label == RegimeLabel::NB_high || label == RegimeLabel::B_high; }
  bool critical() const noexcept { return label == RegimeLabel::NB_critical || label == RegimeLabel::B_critical; }

  std::string norming_form() const {
    switch (label) {
      case RegimeLabel::NB_low: return "T^(1-1/(2alpha))";
      case RegimeLabel::NB_critical:
      case RegimeLabel::B_critical: return "sqrt(T log T)";
      case RegimeLabel::NB_high:
      case RegimeLabel::B_high: return "sqrt(T)";
      case RegimeLabel::B_low: return "T^((3-1/alpha)/2)";
      case RegimeLabel::B_unsupported: return "none";
    }
    return "none";
  }

  /// F_T (natural logarithm in the critical case).
  double norming(double T) const {
    switch (label) {
      case RegimeLabel::NB_low: return std::pow(T, 1.0 - 1.0 / (2.0 * alpha));
      case RegimeLabel::NB_critical:
      case RegimeLabel::B_critical: return std::sqrt(T * std::log(T));
      case RegimeLabel::NB_high:
      case RegimeLabel::B_high: return std::sqrt(T);
      case RegimeLabel::B_low: return std::pow(T, (3.0 - 1.0 / alpha) / 2.0);
      case RegimeLabel::B_unsupported: break;
    }
    throw RegimeError("no norming for an unsupported regime");
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"label", to_string(label)}, {"F_T", norming_form()}, {"alpha", alpha},
                     {"branching", branching},      {"V", V},                {"Etheta", Etheta},
                     {"Vartheta", Vartheta}};
    j["H"] = H ? nlohmann::json(*H) : nlohmann::json(nullptr);
    j["K"] = K ? nlohmann::json(*K) : nlohmann::json(nullptr);
    return j;
  }
};

/// (Gamma(2-2H) / (2 pi alpha H (2H-1)))^{1/2}
inline double k_low(double alpha, double H) {
  return std::sqrt(std::tgamma(2.0 - 2.0 * H) / (2.0 * std::numbers::pi * alpha * H * (2.0 * H - 1.0)));
}

inline Regime classify_regime(double alpha, bool branching, const ThetaLaw& theta, double V) {
  StableParams check(alpha);
  (void)check;
  Regime r;
  r.alpha = alpha;
  r.branching = branching;
  r.V = branching ? V : 0.0;
  r.Etheta = theta.mean();
  r.Vartheta = theta.variance();
  const double E = r.Etheta;
  if (!branching) {
    if (alpha > 1.0) {
      r.label = RegimeLabel::NB_low;
      r.H = 1.0 - 1.0 / (2.0 * alpha);
      r.K = k_low(alpha, *r.H);
    } else if (alpha == 1.0) {
      r.label = RegimeLabel::NB_critical;
      r.H = 0.5;
      r.K = std::sqrt(2.0 * E / std::numbers::pi);
    } else {
      r.label = RegimeLabel::NB_high;
    }
    return r;
  }
  if (!(V >= 0.0)) throw RegimeError("branching rate V must be >= 0");
  if (alpha >= 1.0) {
    r.label = RegimeLabel::B_unsupported;
  } else if (alpha > 0.5) {
    r.label = RegimeLabel::B_low;
    r.H = (3.0 - 1.0 / alpha) / 2.0;
    r.K = std::sqrt(E * V) * k_low(alpha, *r.H);
  } else if (alpha == 0.5) {
    r.label = RegimeLabel::B_critical;
    r.H = 0.5;
    r.K = std::sqrt(2.0 * V * E / std::numbers::pi);
  } else {
    r.label = RegimeLabel::B_high;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Time kernels

inline void check_kernel_domain(double H, double s, double t) {
  if (!(H > 0.0 && H < 1.0)) throw std::invalid_argument("kernel: H must lie in (0,1)");
  if (!(s >= 0.0 && t >= 0.0)) throw std::invalid_argument("kernel: times must be >= 0");
}

/// C^H(s,t) = s^{2H} + t^{2H} - ((s+t)^{2H} + |s-t|^{2H}) / 2
inline double subfbm_cov(double H, double s, double t) {
  check_kernel_domain(H, s, t);
  const double h = 2.0 * H;
  return std::pow(s, h) + std::pow(t, h) - 0.5 * (std::pow(s + t, h) + std::pow(std::abs(s - t), h));
}

/// Q^H(s,t) = sgn(2H-1) ((s+t)^{2H} - s^{2H} - t^{2H}) / 2; identically 0 at H = 1/2.
inline double theta_cov(double H, double s, double t) {
  check_kernel_domain(H, s, t);
  if (H == 0.5) return 0.0;
  const double h = 2.0 * H;
  const double sg = H > 0.5 ? 1.0 : -1.0;
  return 0.5 * sg * (std::pow(s + t, h) - std::pow(s, h) - std::pow(t, h));
}

inline double xi_cov(double Etheta, double Vartheta, double H, double s, double t) {
  return Etheta * subfbm_cov(H, s, t) + Vartheta * theta_cov(H, s, t);
}

/// (m/2)(s^{2H} + t^{2H} - |s-t|^{2H})
inline double fbm_cov(double m, double H, double s, double t) {
  check_kernel_domain(H, s, t);
  const double h = 2.0 * H;
  return 0.5 * m * (std::pow(s, h) + std::pow(t, h) - std::pow(std::abs(s - t), h));
}

// ---------------------------------------------------------------------------
// Potential operator G = int_0^inf T_t dt, kernel C_alpha |x-y|^{alpha-1}

inline double c_alpha(double alpha) {
  return std::tgamma((1.0 - alpha) / 2.0) /
         (std::pow(2.0, alpha) * std::sqrt(std::numbers::pi) * std::tgamma(alpha / 2.0));
}

struct PotentialOperator {
  double alpha;
  double C_alpha;

  explicit PotentialOperator(double a) : alpha(a), C_alpha(0.0) {
    if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("potential operator needs 0 < alpha < 1");
    C_alpha = c_alpha(a);
  }
};

namespace detail {

// int_{-1}^{1} (1-|v|) |m - v|^{alpha-1} dv, exact.
inline double hat_weight(double alpha, double m) {
  auto F = [alpha](double u) { return std::pow(std::abs(u), alpha + 1.0); };
  return (F(m + 1.0) - 2.0 * F(m) + F(m - 1.0)) / (alpha * (alpha + 1.0));
}

// G applied to the piecewise-linear interpolant of f on its grid (Toeplitz
// product via zero-padded FFT).
inline GridFunction potential_on_grid(const PotentialOperator& op, const GridFunction& f) {
  const std::size_t n = f.grid.n, N = 2 * n;
  std::vector<double> w(N, 0.0), a(N, 0.0);
  for (std::size_t m = 0; m < n; ++m) w[m] = hat_weight(op.alpha, static_cast<double>(m));
  for (std::size_t m = 1; m < n; ++m) w[N - m] = w[m];
  for (std::size_t i = 0; i < n; ++i) a[i] = f.values[i];
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> W, A;
  fft.fwd(W, w);
  fft.fwd(A, a);
  for (std::size_t k = 0; k < N; ++k) A[k] *= W[k];
  std::vector<double> c;
  fft.inv(c, A);
  GridFunction out{f.grid, std::vector<double>(n)};
  const double scale = op.C_alpha * std::pow(f.grid.h, op.alpha);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = scale * c[i];
  return out;
}

}  // namespace detail

/// G phi on the grid; Richardson-combined across h and h/2 (error O(h^{2+alpha})).
inline GridFunction potential_apply(const PotentialOperator& op, const TestFunction& phi,
                                    const UniformGrid& grid = UniformGrid::symmetric(64.0, 1 << 14)) {
  const GridFunction coarse = detail::potential_on_grid(op, GridFunction::sample(grid, phi));
  const UniformGrid fine_grid{grid.x0, grid.h / 2.0, grid.n * 2};
  const GridFunction fine = detail::potential_on_grid(op, GridFunction::sample(fine_grid, phi));
  GridFunction out{grid, std::vector<double>(grid.n)};
  for (std::size_t i = 0; i < grid.n; ++i) out.values[i] = (4.0 * fine.values[2 * i] - coarse.values[i]) / 3.0;
  return out;
}

namespace detail {

inline double binom_general(double a, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= (a - i) / (i + 1);
  return r;
}

inline std::vector<double> moments(const TestFunction& phi, int kmax) {
  std::vector<double> m(kmax + 1);
  for (int k = 0; k <= kmax; ++k)
    m[k] = integrate_against(phi, [k](double y) { return std::pow(y, k); });
  return m;
}

// int_{|x|>X} (G phi)(G psi) dx from the far-field expansion
// G phi(x) = C |x|^{alpha-1} sum_k binom(alpha-1,k) (-y/x)^k moments.
inline double far_field_gg(double alpha, double C, const TestFunction& phi, const TestFunction& psi, double X) {
  const int kmax = 10;
  const auto mp = moments(phi, kmax), mq = moments(psi, kmax);
  double s = 0.0;
  for (int k = 0; k <= kmax; ++k)
    for (int l = 0; l + k <= kmax; ++l) {
      const double p = 2.0 * alpha - 2.0 - k - l;
      const double integral = std::pow(X, p + 1.0) / (-(p + 1.0));
      const double coeff = binom_general(alpha - 1.0, k) * binom_general(alpha - 1.0, l) * mp[k] * mq[l];
      // x > X contributes (-1)^{k+l}, x < -X contributes +1.
      const double sign_sum = ((k + l) % 2 == 0) ? 2.0 : 0.0;
      s += coeff * integral * sign_sum;
    }
  return C * C * s;
}

// int_{|x|>X} phi G psi for compact phi inside [-X, X] is zero; for
// non-compact phi the product decays like |x|^{alpha-1-m}.
inline double far_field_pg(double alpha, double C, const TestFunction& phi, const TestFunction& psi, double X) {
  if (phi.compact() && phi.support_lo() >= -X && phi.support_hi() <= X) return 0.0;
  const double m = phi.exponent();
  const double p = alpha - 1.0 - m;
  return 2.0 * C * psi.integral() * std::pow(X, p + 1.0) / (-(p + 1.0));
}

}  // namespace detail

struct PotentialPairings {
  double phi_G_psi;  // int phi G psi
  double G_G;        // int (G phi)(G psi); +inf when alpha >= 1/2
};

inline PotentialPairings potential_pairings(const PotentialOperator& op, const TestFunction& phi,
                                            const TestFunction& psi,
                                            const UniformGrid& grid = UniformGrid::symmetric(64.0, 1 << 14)) {
  const GridFunction Gphi = potential_apply(op, phi, grid);
  const GridFunction Gpsi = potential_apply(op, psi, grid);
  const GridFunction ph = GridFunction::sample(grid, phi);
  // Gphi, Gpsi are smooth but do not vanish at the edges, so the plain
  // trapezoid rule with end corrections is used instead of the periodic one.
  double pg = 0.0, gg = 0.0;
  for (std::size_t i = 0; i < grid.n; ++i) {
    const double wgt = (i == 0) ? 0.5 : 1.0;
    pg += wgt * ph.values[i] * Gpsi.values[i];
    gg += wgt * Gphi.values[i] * Gpsi.values[i];
  }
  // Close the interval at x0 + n h with the far-field value.
  const double X = -grid.x0;
  pg *= grid.h;
  gg *= grid.h;
  pg += detail::far_field_pg(op.alpha, op.C_alpha, phi, psi, X);
  double G_G = std::numeric_limits<double>::infinity();
  if (op.alpha < 0.5) {
    // Right end node x0 + n h = X is missing from the grid; add its half weight.
    auto g_far = [&](const TestFunction& f, double x) {
      const auto m = detail::moments(f, 10);
      double s = 0.0;
      for (int k = 0; k <= 10; ++k) s += detail::binom_general(op.alpha - 1.0, k) * std::pow(-1.0 / x, k) * m[k];
      return op.C_alpha * std::pow(std::abs(x), op.alpha - 1.0) * s;
    };
    gg += 0.5 * grid.h * g_far(phi, X) * g_far(psi, X);
    G_G = gg + detail::far_field_gg(op.alpha, op.C_alpha, phi, psi, X);
  }
  return {pg, G_G};
}

enum class WienerKind { nb, b };

/// nb: 2 E(s^t) int phi G psi;  b: E(s^t) int (2 phi G psi + V G phi G psi)
inline double wiener_cov(WienerKind kind, double alpha, double Etheta, double V, const TestFunction& phi,
                         const TestFunction& psi, double s, double t) {
  if (kind == WienerKind::nb && !(alpha < 1.0)) throw RegimeError("wiener_cov(nb) requires alpha < 1");
  if (kind == WienerKind::b && !(alpha < 0.5)) throw RegimeError("wiener_cov(b) requires alpha < 1/2");
  const PotentialOperator op(alpha);
  const auto pp = potential_pairings(op, phi, psi);
  const double m = std::min(s, t);
  if (kind == WienerKind::nb) return 2.0 * Etheta * m * pp.phi_G_psi;
  return Etheta * m * (2.0 * pp.phi_G_psi + V * pp.G_G);
}

// ---------------------------------------------------------------------------
// Covariance models on time grids

class CovarianceModel {
 public:
  enum class Kind { subfbm, theta_proc, xi, brownian, wiener_nb, wiener_b };

  static CovarianceModel subfbm(double H) { return CovarianceModel(Kind::subfbm, H); }
  static CovarianceModel theta_proc(double H) { return CovarianceModel(Kind::theta_proc, H); }
  static CovarianceModel xi(double Etheta, double Vartheta, double H) {
    CovarianceModel m(Kind::xi, H);
    m.e_ = Etheta;
    m.v_ = Vartheta;
    return m;
  }
  static CovarianceModel brownian(double scale) {
    CovarianceModel m(Kind::brownian, 0.5);
    m.scale_ = scale;
    return m;
  }
  /// Wiener kinds are bound to one test-function pair at construction.
  static CovarianceModel wiener_nb(double alpha, double Etheta, const TestFunction& phi, const TestFunction& psi) {
    CovarianceModel m(Kind::wiener_nb, 0.5);
    m.scale_ = wiener_cov(WienerKind::nb, alpha, Etheta, 0.0, phi, psi, 1.0, 1.0);
    return m;
  }
  static CovarianceModel wiener_b(double alpha, double Etheta, double V, const TestFunction& phi,
                                  const TestFunction& psi) {
    CovarianceModel m(Kind::wiener_b, 0.5);
    m.scale_ = wiener_cov(WienerKind::b, alpha, Etheta, V, phi, psi, 1.0, 1.0);
    return m;
  }

  Kind kind() const noexcept { return kind_; }
  double H() const noexcept { return H_; }

  double operator()(double s, double t) const {
    switch (kind_) {
      case Kind::subfbm: return subfbm_cov(H_, s, t);
      case Kind::theta_proc: return theta_cov(H_, s, t);
      case Kind::xi: return xi_cov(e_, v_, H_, s, t);
      case Kind::brownian:
      case Kind::wiener_nb:
      case Kind::wiener_b: return scale_ * std::min(s, t);
    }
    return 0.0;
  }

  Eigen::MatrixXd matrix(const std::vector<double>& grid) const {
    const auto n = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) m(i, j) = m(j, i) = (*this)(grid[i], grid[j]);
    return m;
  }

  std::string name() const {
    switch (kind_) {
      case Kind::subfbm: return "subfbm(H=" + std::to_string(H_) + ")";
      case Kind::theta_proc: return "theta_proc(H=" + std::to_string(H_) + ")";
      case Kind::xi: return "xi(H=" + std::to_string(H_) + ")";
      case Kind::brownian: return "brownian";
      case Kind::wiener_nb: return "wiener_nb";
      case Kind::wiener_b: return "wiener_b";
    }
    return "?";
  }

 private:
  CovarianceModel(Kind k, double H) : kind_(k), H_(H) {}
  Kind kind_;
  double H_;
  double e_ = 1.0, v_ = 0.0, scale_ = 1.0;
};

// ---------------------------------------------------------------------------
// Finite-time second moments E <N^x_r, phi> <N^x_r', psi>

struct OracleOptions {
  std::size_t simpson_panels = 64;
  double tail_tol = kDefaultTailTol;
  std::size_t max_nodes = std::size_t{1} << 22;
};

struct OracleResult {
  double value;
  double richardson_delta;  // |S_64 - S_32| style estimate of the u-quadrature error
  UniformGrid grid;
};

namespace detail {

// Grid wide enough that periodic images of p_t tails stay below ~1e-6 of the
// value near the origin, fine enough to resolve phi and psi.
inline UniformGrid oracle_grid(const StableParams& p, double tmax, const TestFunction& phi, const TestFunction& psi) {
  double h = 1.0 / 16.0;
  for (const auto* f : {&phi, &psi})
    if (f->kind() == TestFunction::Kind::gaussian_bump) h = std::min(h, f->width() / 16.0);
  double reach = 64.0;
  for (const auto* f : {&phi, &psi}) reach = std::max(reach, 2.0 * (std::abs(f->center()) + f->support_radius(1e-12)));
  if (p.alpha() < 2.0) {
    const double a = p.alpha();
    const double c = std::tgamma(1.0 + a) * std::sin(std::numbers::pi * a / 2.0) / std::numbers::pi;
    reach = std::max(reach, std::pow(2.0 * c * std::max(tmax, 1.0) * 1e6, 1.0 / (1.0 + a)));
  } else {
    reach = std::max(reach, 12.0 * std::sqrt(2.0 * std::max(tmax, 1.0)));
  }
  std::size_t n = 1;
  while (static_cast<double>(n) * h < 2.0 * reach) n <<= 1;
  return {-h * static_cast<double>(n / 2), h, n};
}

inline double eval_at(const GridFunction& f, double x) { return f.at(x); }

}  // namespace detail

inline OracleResult moment_oracle(bool branching, double V, const StableParams& p, double x, double r, double rp,
                                  const TestFunction& phi, const TestFunction& psi, const OracleOptions& opt = {}) {
  if (r > rp) return moment_oracle(branching, V, p, x, rp, r, psi, phi, opt);
  if (r < 0) throw std::invalid_argument("moment_oracle: times must be >= 0");
  UniformGrid g = detail::oracle_grid(p, rp, phi, psi);
  for (;;) {
    try {
      const GridFunction ph = GridFunction::sample(g, phi), ps = GridFunction::sample(g, psi);
      auto T = [&](double t, const GridFunction& f) { return semigroup_apply(p, t, f, opt.tail_tol); };
      auto mul = [](const GridFunction& a, const GridFunction& b) {
        GridFunction c{a.grid, std::vector<double>(a.grid.n)};
        for (std::size_t i = 0; i < a.grid.n; ++i) c.values[i] = a.values[i] * b.values[i];
        return c;
      };
      const double base = detail::eval_at(T(r, mul(ph, T(rp - r, ps))), x);
      if (!branching || V == 0.0 || r == 0.0) return {base, 0.0, g};
      std::size_t panels = opt.simpson_panels + (opt.simpson_panels % 2);
      std::vector<double> vals(panels + 1);
      for (std::size_t i = 0; i <= panels; ++i) {
        const double u = r * static_cast<double>(i) / static_cast<double>(panels);
        vals[i] = detail::eval_at(T(u, mul(T(r - u, ph), T(rp - u, ps))), x);
      }
      auto simpson = [&](std::size_t stride) {
        const std::size_t m = panels / stride;
        const double h = r / static_cast<double>(m);
        double s = vals[0] + vals[panels];
        for (std::size_t i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * vals[i * stride];
        return s * h / 3.0;
      };
      const double fine = simpson(1);
      const double coarse = (panels % 4 == 0) ? simpson(2) : fine;
      // Richardson: Simpson error ~ h^4.
      const double extrap = fine + (fine - coarse) / 15.0;
      return {base + V * extrap, V * std::abs(extrap - fine), g};
    } catch (const AliasingError&) {
      if (g.n * 2 > opt.max_nodes) throw;
      g = {g.x0 * 2.0, g.h, g.n * 2};
    }
  }
}

}  // namespace occlab
