#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>
#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>

#include "detail/simd_stable.hpp"
#include "random.hpp"

namespace occlab {

/// Raised when a grid function is not small enough at the grid edges for a
/// periodic transform to be trusted.
struct AliasingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultTailTol = 1e-8;

/// Index of the standard symmetric alpha-stable motion, E exp(i xi eta_t) = exp(-t |xi|^alpha).
class StableParams {
 public:
  explicit StableParams(double alpha) : alpha_(alpha) {
    if (!(alpha > 0.0 && alpha <= 2.0))
      throw std::invalid_argument("stable.alpha must lie in (0, 2], got " + std::to_string(alpha));
  }
  double alpha() const noexcept { return alpha_; }
  bool operator==(const StableParams&) const = default;

 private:
  double alpha_;
};

// ---------------------------------------------------------------------------
// Sampling

/// One draw of eta_1.
inline double standard_variate(const StableParams& p, RandomStream& rng) {
  const double a = p.alpha();
  if (a == 2.0) return std::numbers::sqrt2 * rng.normal();
  if (a == 1.0) return std::tan(std::numbers::pi * (rng.uniform() - 0.5));
  const double v = std::numbers::pi * (rng.uniform() - 0.5);
  const double w = rng.exponential();
  return std::sin(a * v) / std::pow(std::cos(v), 1.0 / a) * std::pow(std::cos((1.0 - a) * v) / w, (1.0 - a) / a);
}

/// One draw of eta_dt.
inline double sample_increment(const StableParams& p, double dt, RandomStream& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("sample_increment: dt must be positive");
  return standard_variate(p, rng) * std::pow(dt, 1.0 / p.alpha());
}

/// Buffered eta_1 draws refilled in blocks; the hot loop of the simulator
/// pulls from here. Holds a reference to the stream it drains.
class VariateBuffer {
 public:
  static constexpr std::size_t kBlock = 2048;

  VariateBuffer(const StableParams& p, RandomStream& rng) : alpha_(p.alpha()), rng_(&rng) {
    buf_.resize(kBlock);
    u1_.resize(kBlock);
    u2_.resize(kBlock);
  }

  double next() {
    if (pos_ == filled_) refill();
    return buf_[pos_++];
  }

  double alpha() const noexcept { return alpha_; }
  RandomStream& stream() noexcept { return *rng_; }

 private:
  void refill() {
    const std::size_t n = kBlock;
    if (alpha_ == 2.0) {
      for (std::size_t i = 0; i < n; ++i) buf_[i] = std::numbers::sqrt2 * rng_->normal();
    } else if (alpha_ == 1.0) {
      for (std::size_t i = 0; i < n; ++i) buf_[i] = std::tan(std::numbers::pi * (rng_->uniform() - 0.5));
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        u1_[i] = rng_->uniform();
        u2_[i] = rng_->uniform();
      }
      detail::cms_batch(u1_.data(), u2_.data(), buf_.data(), n, alpha_);
    }
    pos_ = 0;
    filled_ = n;
  }

  double alpha_;
  RandomStream* rng_;
  std::vector<double> buf_, u1_, u2_;
  std::size_t pos_ = 0, filled_ = 0;
};

// ---------------------------------------------------------------------------
// Density and distribution function of eta_1

namespace detail {

// Integrates exp(-xi^alpha) * kern(xi) over (0, inf) where kern oscillates
// with angular frequency x. Half-period Gauss-Legendre panels after a
// tanh-sinh first panel that absorbs the xi^alpha cusp at the origin.
template <class Kern>
double oscillatory_transform(double alpha, double x, Kern kern) {
  using boost::math::quadrature::gauss;
  using boost::math::quadrature::tanh_sinh;
  const double xi_max = std::pow(41.5, 1.0 / alpha);
  auto f = [&](double xi) { return std::exp(-std::pow(xi, alpha)) * kern(xi); };
  const double period = x > 0.0 ? std::numbers::pi / x : xi_max;
  const double first = std::min(period, xi_max);
  static thread_local tanh_sinh<double> ts(12);
  double sum = ts.integrate(f, 0.0, first, 1e-15);
  for (double a = first; a < xi_max; a += period) {
    const double b = std::min(a + period, xi_max);
    sum += gauss<double, 20>::integrate(f, a, b);
  }
  return sum;
}

inline double inversion_density(double alpha, double x) {
  x = std::abs(x);
  if (x == 0.0) {
    static thread_local boost::math::quadrature::exp_sinh<double> es;
    return es.integrate([&](double xi) { return std::exp(-std::pow(xi, alpha)); }, 0.0,
                        std::numeric_limits<double>::infinity(), 1e-15) /
           std::numbers::pi;
  }
  return oscillatory_transform(alpha, x, [x](double xi) { return std::cos(x * xi); }) / std::numbers::pi;
}

inline double inversion_cdf(double alpha, double x) {
  if (x == 0.0) return 0.5;
  const double ax = std::abs(x);
  const double v = oscillatory_transform(alpha, ax, [ax](double xi) {
    return xi == 0.0 ? ax : std::sin(ax * xi) / xi;
  });
  const double upper = 0.5 + v / std::numbers::pi;
  return x > 0 ? upper : 1.0 - upper;
}

struct SeriesValue {
  double value;
  double err;
};

// Large-|x| expansion of the density (k_shift = 1) or the survival function
// (k_shift = 0). Convergent for alpha < 1, asymptotic for alpha > 1.
inline SeriesValue tail_series(double alpha, double x, bool survival) {
  const double lx = std::log(x);
  double sum = 0.0, last = 0.0, max_term = 0.0, prev_mag = std::numeric_limits<double>::infinity();
  int k = 1;
  for (; k <= 400; ++k) {
    const double ka = k * alpha;
    const double s = std::sin(ka * std::numbers::pi / 2.0);
    const double lmag = (survival ? std::lgamma(ka) : std::lgamma(ka + 1.0)) - std::lgamma(k + 1.0) -
                        (survival ? ka : ka + 1.0) * lx;
    const double mag = std::exp(lmag);
    if (alpha > 1.0 && mag > prev_mag) break;
    prev_mag = mag;
    const double term = ((k % 2) ? 1.0 : -1.0) * s * mag;
    sum += term;
    last = mag;
    max_term = std::max(max_term, mag);
    if (mag < 1e-17 * std::abs(sum)) break;
  }
  sum /= std::numbers::pi;
  const double err = (last + 1e-15 * max_term * k) / std::numbers::pi;
  return {sum, err};
}

// Cached density and CDF of eta_1 on [0, x_c] (sinh-mapped spline nodes),
// tail series beyond x_c.
class StableTable {
 public:
  explicit StableTable(double alpha) : alpha_(alpha) {
    x_c_ = 1.0;
    for (double x = 0.25; x < 1e4; x *= 1.05) {
      auto d = tail_series(alpha, x, false), s = tail_series(alpha, x, true);
      if (d.err <= 1e-13 * std::abs(d.value) && s.err <= 1e-13 * std::abs(s.value) && d.value > 0) {
        x_c_ = x;
        break;
      }
    }
    const std::size_t n = 1025;
    u_max_ = std::asinh(x_c_ / kScale);
    const double du = u_max_ / static_cast<double>(n - 1);
    std::vector<double> pd(n), cd(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = kScale * std::sinh(du * static_cast<double>(i));
      pd[i] = inversion_density(alpha, x);
      cd[i] = inversion_cdf(alpha, x);
    }
    pdf_ = std::make_unique<Spline>(pd.begin(), pd.end(), 0.0, du);
    cdf_ = std::make_unique<Spline>(cd.begin(), cd.end(), 0.0, du);
  }

  double x_c() const noexcept { return x_c_; }

  double pdf(double x) const {
    x = std::abs(x);
    if (x > x_c_) return tail_series(alpha_, x, false).value;
    return (*pdf_)(std::asinh(x / kScale));
  }

  double survival(double x) const {
    if (x < 0) return 1.0 - survival(-x);
    if (x > x_c_) return tail_series(alpha_, x, true).value;
    return 1.0 - (*cdf_)(std::asinh(x / kScale));
  }

  double cdf(double x) const {
    if (x < 0) return survival(-x);
    if (x > x_c_) return 1.0 - tail_series(alpha_, x, true).value;
    return (*cdf_)(std::asinh(x / kScale));
  }

  static const StableTable& get(double alpha) {
    static std::mutex mu;
    static std::map<double, std::unique_ptr<StableTable>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[alpha];
    if (!slot) slot = std::make_unique<StableTable>(alpha);
    return *slot;
  }

 private:
  using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;
  static constexpr double kScale = 0.5;
  double alpha_, x_c_, u_max_;
  std::unique_ptr<Spline> pdf_, cdf_;
};

}  // namespace detail

/// p_1(x) by inversion, no caching; closed forms at alpha = 1, 2.
inline double density_direct(const StableParams& p, double x) {
  const double a = p.alpha();
  if (a == 2.0) return std::exp(-x * x / 4.0) / (2.0 * std::sqrt(std::numbers::pi));
  if (a == 1.0) return 1.0 / (std::numbers::pi * (1.0 + x * x));
  return detail::inversion_density(a, x);
}

/// p_t(x) = t^{-1/alpha} p_1(t^{-1/alpha} x).
inline double density(const StableParams& p, double t, double x) {
  if (!(t > 0.0)) throw std::invalid_argument("density: t must be positive");
  const double a = p.alpha();
  const double s = std::pow(t, -1.0 / a);
  const double y = s * x;
  if (a == 2.0 || a == 1.0) return s * density_direct(p, y);
  return s * detail::StableTable::get(a).pdf(y);
}

/// P(eta_t <= x).
inline double cdf(const StableParams& p, double t, double x) {
  if (!(t > 0.0)) throw std::invalid_argument("cdf: t must be positive");
  const double a = p.alpha();
  const double y = std::pow(t, -1.0 / a) * x;
  if (a == 2.0) return 0.5 * std::erfc(-y / 2.0);
  if (a == 1.0) return 0.5 + std::atan(y) / std::numbers::pi;
  return detail::StableTable::get(a).cdf(y);
}

/// P(eta_t > x), accurate in the far tail.
inline double survival(const StableParams& p, double t, double x) {
  if (!(t > 0.0)) throw std::invalid_argument("survival: t must be positive");
  const double a = p.alpha();
  const double y = std::pow(t, -1.0 / a) * x;
  if (a == 2.0) return 0.5 * std::erfc(y / 2.0);
  if (a == 1.0) return std::atan2(1.0, y) / std::numbers::pi;
  return detail::StableTable::get(a).survival(y);
}

inline double cdf_direct(const StableParams& p, double x) {
  const double a = p.alpha();
  if (a == 2.0) return 0.5 * std::erfc(-x / 2.0);
  if (a == 1.0) return 0.5 + std::atan(x) / std::numbers::pi;
  return detail::inversion_cdf(a, x);
}

inline double quantile(const StableParams& p, double t, double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("quantile: prob must lie in (0,1)");
  if (prob == 0.5) return 0.0;
  if (prob < 0.5) return -quantile(p, t, 1.0 - prob);
  auto f = [&](double x) { return cdf(p, 1.0, x) - prob; };
  double hi = 1.0;
  while (f(hi) < 0) hi *= 2.0;
  std::uintmax_t iters = 200;
  auto r = boost::math::tools::toms748_solve(f, 0.0, hi, boost::math::tools::eps_tolerance<double>(50), iters);
  return 0.5 * (r.first + r.second) * std::pow(t, 1.0 / p.alpha());
}

// ---------------------------------------------------------------------------
// Grid functions and the semigroup

/// Uniform grid x_i = x0 + i*h, i < n, n a power of two.
struct UniformGrid {
  double x0 = -64.0;
  double h = 128.0 / 8192.0;
  std::size_t n = 8192;

  double x(std::size_t i) const noexcept { return x0 + h * static_cast<double>(i); }
  double extent() const noexcept { return h * static_cast<double>(n); }

  static UniformGrid symmetric(double half_width, std::size_t n) { return {-half_width, 2.0 * half_width / n, n}; }
};

struct GridFunction {
  UniformGrid grid;
  std::vector<double> values;

  template <class F>
  static GridFunction sample(const UniformGrid& g, F&& f) {
    GridFunction out{g, std::vector<double>(g.n)};
    for (std::size_t i = 0; i < g.n; ++i) out.values[i] = f(g.x(i));
    return out;
  }

  /// Periodic trapezoid rule, h * sum f_i.
  double integral() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * grid.h;
  }

  /// Linear interpolation; zero outside the grid.
  double at(double x) const {
    const double u = (x - grid.x0) / grid.h;
    if (u < 0.0 || u > static_cast<double>(grid.n - 1)) return 0.0;
    const auto i = static_cast<std::size_t>(u);
    if (i + 1 >= grid.n) return values.back();
    const double w = u - static_cast<double>(i);
    return (1.0 - w) * values[i] + w * values[i + 1];
  }
};

/// Density p_t sampled on a grid; rejects grids carrying more than tail_tol
/// of the mass outside.
struct DensityGrid {
  double t;
  GridFunction f;

  DensityGrid(const StableParams& p, double t_, const UniformGrid& g, double tail_tol = kDefaultTailTol) : t(t_) {
    const double edge = std::min(-g.x0, g.x(g.n - 1));
    if (2.0 * survival(p, t, edge) > tail_tol)
      throw AliasingError("density grid too narrow: outside mass " + std::to_string(2.0 * survival(p, t, edge)));
    f = GridFunction::sample(g, [&](double x) { return density(p, t, std::abs(x)); });
  }
};

inline bool is_pow2(std::size_t n) { return n >= 2 && std::has_single_bit(n); }

inline void check_edges(const GridFunction& f, double tail_tol) {
  double mx = 0.0;
  for (double v : f.values) mx = std::max(mx, std::abs(v));
  const double edge = std::max(std::abs(f.values.front()), std::abs(f.values.back()));
  if (mx > 0.0 && edge > tail_tol * mx)
    throw AliasingError("grid too narrow for periodic transform: edge/max = " + std::to_string(edge / mx));
}

/// Fourier multiplier exp(-t |xi|^alpha) applied on the periodic grid. The
/// multiplier may be composed: mult[k] for the DFT index k.
inline std::vector<double> stable_multiplier(const StableParams& p, double t, const UniformGrid& g) {
  std::vector<double> m(g.n);
  const double dxi = 2.0 * std::numbers::pi / g.extent();
  for (std::size_t k = 0; k < g.n; ++k) {
    const double kk = k <= g.n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(g.n);
    m[k] = std::exp(-t * std::pow(std::abs(kk * dxi), p.alpha()));
  }
  return m;
}

/// Multiplies the DFT of f by mult and transforms back.
inline GridFunction apply_multiplier(const GridFunction& f, const std::vector<double>& mult) {
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, f.values);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= mult[k];
  GridFunction out{f.grid, {}};
  fft.inv(out.values, spec);
  return out;
}

/// T_t f = p_t * f on the grid of f.
inline GridFunction semigroup_apply(const StableParams& p, double t, const GridFunction& f,
                                    double tail_tol = kDefaultTailTol) {
  if (t < 0.0) throw std::invalid_argument("semigroup_apply: t must be nonnegative");
  if (!is_pow2(f.grid.n)) throw std::invalid_argument("semigroup_apply: grid size must be a power of two");
  if (f.values.size() != f.grid.n) throw std::invalid_argument("semigroup_apply: value count mismatch");
  check_edges(f, tail_tol);
  if (t == 0.0) return f;
  return apply_multiplier(f, stable_multiplier(p, t, f.grid));
}

}  // namespace occlab
