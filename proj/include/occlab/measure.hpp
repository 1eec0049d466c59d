#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <json.hpp>

#include "random.hpp"
#include "stable.hpp"
#include "test_function.hpp"

namespace occlab {

struct TruncationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Law of the per-interval count theta. All supported kinds have finite
/// third moment; heavy-tailed counts are deliberately not constructible.
class ThetaLaw {
 public:
  enum class Kind { deterministic, poisson, categorical };

  static ThetaLaw deterministic(std::int64_t k) {
    if (k < 0) throw std::invalid_argument("theta: deterministic count must be >= 0");
    ThetaLaw t;
    t.kind_ = Kind::deterministic;
    t.k_ = k;
    return t;
  }
  static ThetaLaw poisson(double mean) {
    if (!(mean > 0.0)) throw std::invalid_argument("theta: poisson mean must be positive");
    ThetaLaw t;
    t.kind_ = Kind::poisson;
    t.mean_ = mean;
    return t;
  }
  static ThetaLaw categorical(std::vector<double> p) {
    if (p.empty()) throw std::invalid_argument("theta: categorical needs at least one probability");
    double s = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) throw std::invalid_argument("theta: categorical probabilities must be >= 0");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("theta: categorical probabilities must sum to 1");
    ThetaLaw t;
    t.kind_ = Kind::categorical;
    t.p_ = std::move(p);
    t.cum_.resize(t.p_.size());
    std::partial_sum(t.p_.begin(), t.p_.end(), t.cum_.begin());
    return t;
  }

  Kind kind() const noexcept { return kind_; }
  const std::vector<double>& probabilities() const noexcept { return p_; }
  std::int64_t count() const noexcept { return k_; }

  double mean() const { return raw_moment(1); }
  double variance() const {
    const double m = mean();
    return raw_moment(2) - m * m;
  }
  double third_moment() const { return raw_moment(3); }

  double pmf(std::int64_t k) const {
    if (k < 0) return 0.0;
    switch (kind_) {
      case Kind::deterministic: return k == k_ ? 1.0 : 0.0;
      case Kind::poisson: return std::exp(k * std::log(mean_) - mean_ - std::lgamma(k + 1.0));
      case Kind::categorical: return k < static_cast<std::int64_t>(p_.size()) ? p_[k] : 0.0;
    }
    return 0.0;
  }

  /// Largest count with positive probability, or -1 if unbounded.
  std::int64_t max_count() const noexcept {
    if (kind_ == Kind::deterministic) return k_;
    if (kind_ == Kind::categorical) return static_cast<std::int64_t>(p_.size()) - 1;
    return -1;
  }

  std::int64_t sample(RandomStream& rng) const {
    switch (kind_) {
      case Kind::deterministic: return k_;
      case Kind::poisson: return rng.poisson(mean_);
      case Kind::categorical: {
        const double u = rng.uniform();
        auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
        if (it == cum_.end()) --it;
        return it - cum_.begin();
      }
    }
    return 0;
  }

  nlohmann::json to_json() const {
    switch (kind_) {
      case Kind::deterministic: return {{"kind", "deterministic"}, {"k", k_}};
      case Kind::poisson: return {{"kind", "poisson"}, {"mean", mean_}};
      case Kind::categorical: return {{"kind", "categorical"}, {"p", p_}};
    }
    return {};
  }
  static ThetaLaw from_json(const nlohmann::json& j) {
    const std::string k = j.at("kind").get<std::string>();
    if (k == "deterministic") return deterministic(j.at("k").get<std::int64_t>());
    if (k == "poisson") return poisson(j.at("mean").get<double>());
    if (k == "categorical") return categorical(j.at("p").get<std::vector<double>>());
    throw std::invalid_argument("unknown theta kind '" + k + "'");
  }

 private:
  double raw_moment(int r) const {
    switch (kind_) {
      case Kind::deterministic: return std::pow(static_cast<double>(k_), r);
      case Kind::poisson: {
        const double l = mean_;
        if (r == 1) return l;
        if (r == 2) return l + l * l;
        return l + 3 * l * l + l * l * l;
      }
      case Kind::categorical: {
        double s = 0.0;
        for (std::size_t k = 0; k < p_.size(); ++k) s += p_[k] * std::pow(static_cast<double>(k), r);
        return s;
      }
    }
    return 0.0;
  }

  Kind kind_ = Kind::deterministic;
  std::int64_t k_ = 1;
  double mean_ = 1.0;
  std::vector<double> p_, cum_;
};

/// How the theta_j points are placed inside [j, j+1).
class PlacementRule {
 public:
  enum class Kind { left_endpoint, fixed_offsets, iid_uniform };

  static PlacementRule left_endpoint() { return PlacementRule(Kind::left_endpoint); }
  static PlacementRule iid_uniform() { return PlacementRule(Kind::iid_uniform); }
  /// offsets[k] lists the k offsets used when the count is k.
  static PlacementRule fixed_offsets(std::map<std::int64_t, std::vector<double>> offsets) {
    for (const auto& [k, v] : offsets) {
      if (static_cast<std::int64_t>(v.size()) != k)
        throw std::invalid_argument("placement: count " + std::to_string(k) + " needs exactly " + std::to_string(k) +
                                    " offsets");
      for (double o : v)
        if (!(o >= 0.0 && o < 1.0)) throw std::invalid_argument("placement: offsets must lie in [0, 1)");
    }
    PlacementRule r(Kind::fixed_offsets);
    r.offsets_ = std::move(offsets);
    return r;
  }

  Kind kind() const noexcept { return kind_; }
  const std::map<std::int64_t, std::vector<double>>& offsets() const noexcept { return offsets_; }

  nlohmann::json to_json() const {
    switch (kind_) {
      case Kind::left_endpoint: return {{"kind", "left_endpoint"}};
      case Kind::iid_uniform: return {{"kind", "iid_uniform"}};
      case Kind::fixed_offsets: {
        nlohmann::json o = nlohmann::json::object();
        for (const auto& [k, v] : offsets_) o[std::to_string(k)] = v;
        return {{"kind", "fixed_offsets"}, {"offsets", o}};
      }
    }
    return {};
  }
  static PlacementRule from_json(const nlohmann::json& j) {
    const std::string k = j.at("kind").get<std::string>();
    if (k == "left_endpoint") return left_endpoint();
    if (k == "iid_uniform") return iid_uniform();
    if (k == "fixed_offsets") {
      std::map<std::int64_t, std::vector<double>> m;
      for (auto& [key, v] : j.at("offsets").items()) m[std::stoll(key)] = v.get<std::vector<double>>();
      return fixed_offsets(std::move(m));
    }
    throw std::invalid_argument("unknown placement kind '" + k + "'");
  }

 private:
  explicit PlacementRule(Kind k) : kind_(k) {}
  Kind kind_;
  std::map<std::int64_t, std::vector<double>> offsets_;
};

/// Integer window [lo, hi).
struct Window {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::int64_t size() const noexcept { return hi - lo; }
  static Window symmetric(double half_width) {
    const auto l = static_cast<std::int64_t>(std::ceil(half_width));
    return {-l, l};
  }
};

struct PointMeasure {
  Window window;
  std::vector<double> atoms;

  std::int64_t count_in(std::int64_t j) const {
    auto a = std::lower_bound(atoms.begin(), atoms.end(), static_cast<double>(j));
    auto b = std::lower_bound(atoms.begin(), atoms.end(), static_cast<double>(j + 1));
    return b - a;
  }

  nlohmann::json to_json() const { return {{"window", {window.lo, window.hi}}, {"atoms", atoms}}; }
  static PointMeasure from_json(const nlohmann::json& j) {
    PointMeasure m;
    m.window = {j.at("window").at(0).get<std::int64_t>(), j.at("window").at(1).get<std::int64_t>()};
    m.atoms = j.at("atoms").get<std::vector<double>>();
    return m;
  }
};

inline PointMeasure build_measure(const ThetaLaw& theta, const PlacementRule& placement, const Window& window,
                                  RandomStream& rng) {
  if (window.size() <= 0) throw std::invalid_argument("build_measure: empty window");
  PointMeasure m;
  m.window = window;
  m.atoms.reserve(static_cast<std::size_t>(std::max(0.0, theta.mean() * static_cast<double>(window.size()) * 1.1)));
  for (std::int64_t j = window.lo; j < window.hi; ++j) {
    const std::int64_t k = theta.sample(rng);
    const double base = static_cast<double>(j);
    switch (placement.kind()) {
      case PlacementRule::Kind::left_endpoint:
        for (std::int64_t i = 0; i < k; ++i) m.atoms.push_back(base);
        break;
      case PlacementRule::Kind::fixed_offsets: {
        if (k == 0) break;
        auto it = placement.offsets().find(k);
        if (it == placement.offsets().end())
          throw std::invalid_argument("build_measure: no offsets given for count " + std::to_string(k));
        const std::size_t first = m.atoms.size();
        for (double o : it->second) m.atoms.push_back(base + o);
        std::sort(m.atoms.begin() + static_cast<std::ptrdiff_t>(first), m.atoms.end());
        break;
      }
      case PlacementRule::Kind::iid_uniform: {
        const std::size_t first = m.atoms.size();
        for (std::int64_t i = 0; i < k; ++i) {
          double x = base + rng.uniform();
          if (x >= base + 1.0) x = std::nextafter(base + 1.0, base);
          m.atoms.push_back(x);
        }
        std::sort(m.atoms.begin() + static_cast<std::ptrdiff_t>(first), m.atoms.end());
        break;
      }
    }
  }
  return m;
}

namespace detail {

/// int phi(y) g(y) dy with panels matched to the shape of phi.
template <class G>
double integrate_against(const TestFunction& phi, G&& g) {
  using boost::math::quadrature::gauss;
  auto f = [&](double y) { return phi(y) * g(y); };
  double s = 0.0;
  if (phi.compact()) {
    const double c = phi.center(), w = phi.width();
    const double r = phi.support_radius(1e-300);
    const double step = w;
    for (double a = c - r; a < c + r; a += step) s += gauss<double, 20>::integrate(f, a, std::min(a + step, c + r));
    return s;
  }
  const double inner = 64.0;
  for (double a = -inner; a < inner; a += 1.0) s += gauss<double, 20>::integrate(f, a, a + 1.0);
  static thread_local boost::math::quadrature::exp_sinh<double> es;
  s += es.integrate(f, inner, std::numeric_limits<double>::infinity(), 1e-13);
  s += es.integrate([&](double y) { return f(-y); }, inner, std::numeric_limits<double>::infinity(), 1e-13);
  return s;
}

/// int phi'(y) g(y) dy on the same panels.
template <class G>
double integrate_against_derivative(const TestFunction& phi, G&& g) {
  using boost::math::quadrature::gauss;
  auto f = [&](double y) { return phi.derivative(y) * g(y); };
  double s = 0.0;
  if (phi.compact()) {
    const double c = phi.center(), w = phi.width();
    const double r = phi.support_radius(1e-300);
    for (double a = c - r; a < c + r; a += w) s += gauss<double, 20>::integrate(f, a, std::min(a + w, c + r));
    return s;
  }
  for (double a = -64.0; a < 64.0; a += 1.0) s += gauss<double, 20>::integrate(f, a, a + 1.0);
  static thread_local boost::math::quadrature::exp_sinh<double> es;
  s += es.integrate(f, 64.0, std::numeric_limits<double>::infinity(), 1e-13);
  s += es.integrate([&](double y) { return f(-y); }, 64.0, std::numeric_limits<double>::infinity(), 1e-13);
  return s;
}

/// int_a^inf (T_s phi)(x) dx.
inline double upper_mass(const StableParams& p, const TestFunction& phi, double s, double a) {
  if (s == 0.0) return phi.integral() - phi.primitive(a);
  return integrate_against(phi, [&](double y) { return survival(p, s, a - y); });
}

/// sum over j in [lo, hi) of (T_s phi)(j + o), from Poisson summation on the
/// full lattice minus midpoint-rule estimates of the two outer tails.
inline double lattice_mass(const StableParams& p, const TestFunction& phi, double s, double o, const Window& w) {
  if (s == 0.0) {
    std::int64_t lo = w.lo, hi = w.hi;
    if (phi.compact()) {
      lo = std::max(lo, static_cast<std::int64_t>(std::floor(phi.support_lo())) - 1);
      hi = std::min(hi, static_cast<std::int64_t>(std::ceil(phi.support_hi())) + 1);
    } else if (hi - lo > (1LL << 26)) {
      throw std::invalid_argument("lattice_mass: window too large for direct summation");
    }
    double acc = 0.0;
    for (std::int64_t j = lo; j < hi; ++j) acc += phi(static_cast<double>(j) + o);
    return acc;
  }
  double full = phi.fourier(0.0).real();
  const double f0 = std::abs(full);
  for (int m = 1; m < 200000; ++m) {
    const double xi = 2.0 * std::numbers::pi * m;
    const double damp = std::exp(-s * std::pow(xi, p.alpha()));
    const std::complex<double> fh = phi.fourier(xi) * damp;
    const std::complex<double> ph = std::polar(1.0, xi * o);
    full += 2.0 * (fh * ph).real();
    if (std::abs(fh) < 1e-17 * f0) break;
  }
  const double hi_edge = static_cast<double>(w.hi) + o - 0.5;
  const double lo_edge = static_cast<double>(w.lo) + o - 0.5;
  // Midpoint-rule correction: sum_{j>=0} f(a + 1/2 + j) = int_a^inf f + f'(a)/24 + O(f''').
  auto slope = [&](double a) { return integrate_against_derivative(phi, [&](double y) { return density(p, s, a - y); }); };
  const double right = upper_mass(p, phi, s, hi_edge) + slope(hi_edge) / 24.0;
  const double left = phi.integral() - upper_mass(p, phi, s, lo_edge) - slope(lo_edge) / 24.0;
  return full - right - left;
}

}  // namespace detail

/// E <N_s, phi> for the system started from the window-restricted measure.
/// Throws TruncationError when the window loses more than max_truncation
/// (relative) of the full-line value.
inline constexpr Window kFullLine{-(1LL << 40), 1LL << 40};

inline double mean_occupation_mass(const ThetaLaw& theta, const PlacementRule& placement, const StableParams& stable,
                                   const TestFunction& phi, double s, const Window& window,
                                   double max_truncation = 1.0) {
  if (s < 0.0) throw std::invalid_argument("mean_occupation_mass: s must be >= 0");
  if (window.size() <= 0) throw std::invalid_argument("mean_occupation_mass: empty window");
  const double lo = static_cast<double>(window.lo), hi = static_cast<double>(window.hi);
  double value = 0.0, full = 0.0;
  switch (placement.kind()) {
    case PlacementRule::Kind::iid_uniform: {
      // E over uniform offsets smears the lattice into Lebesgue measure on the window.
      const double inside = phi.integral() - detail::upper_mass(stable, phi, s, hi) -
                            (phi.integral() - detail::upper_mass(stable, phi, s, lo));
      value = theta.mean() * inside;
      full = theta.mean() * phi.integral();
      break;
    }
    case PlacementRule::Kind::left_endpoint: {
      value = theta.mean() * detail::lattice_mass(stable, phi, s, 0.0, window);
      full = theta.mean() * detail::lattice_mass(stable, phi, s, 0.0, kFullLine);
      break;
    }
    case PlacementRule::Kind::fixed_offsets: {
      for (const auto& [k, offs] : placement.offsets()) {
        const double pk = theta.pmf(k);
        if (pk == 0.0) continue;
        for (double o : offs) {
          value += pk * detail::lattice_mass(stable, phi, s, o, window);
          full += pk * detail::lattice_mass(stable, phi, s, o, kFullLine);
        }
      }
      break;
    }
  }
  if (full != 0.0 && std::abs(full - value) > max_truncation * std::abs(full))
    throw TruncationError("window [" + std::to_string(window.lo) + ", " + std::to_string(window.hi) +
                          ") truncates the mean by " + std::to_string(std::abs(full - value) / std::abs(full)));
  return value;
}

}  // namespace occlab
