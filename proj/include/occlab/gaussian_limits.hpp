#pragma once

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "limit_theory.hpp"
#include "random.hpp"

namespace occlab {

struct GaussianPathModel {
  CovarianceModel cov;
  std::vector<double> grid;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd factor;  // lower triangular, factor * factor^T ~ covariance
  double jitter = 0.0;
};

inline GaussianPathModel build_model(const CovarianceModel& cov, const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("build_model: empty grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) throw std::invalid_argument("build_model: grid times must be positive");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw std::invalid_argument("build_model: grid must be strictly increasing");
  }
  GaussianPathModel m{cov, grid, cov.matrix(grid), {}, 0.0};
  const auto n = m.covariance.rows();
  const double tr = m.covariance.trace() / static_cast<double>(n);
  if (tr == 0.0) {
    m.factor = Eigen::MatrixXd::Zero(n, n);
    return m;
  }
  for (double j : {0.0, 1e-12, 1e-10}) {
    Eigen::MatrixXd a = m.covariance;
    a.diagonal().array() += j * tr;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      m.factor = llt.matrixL();
      m.jitter = j * tr;
      return m;
    }
  }
  std::string g;
  for (double t : grid) g += (g.empty() ? "" : ",") + std::to_string(t);
  throw std::runtime_error("covariance of " + cov.name() + " on grid {" + g + "} is not positive definite");
}

/// n x grid matrix; each row an independent draw.
inline Eigen::MatrixXd sample_paths(const GaussianPathModel& m, std::size_t n, RandomStream& rng) {
  const auto d = m.factor.rows();
  Eigen::MatrixXd z(d, static_cast<Eigen::Index>(n));
  for (Eigen::Index c = 0; c < z.cols(); ++c)
    for (Eigen::Index r = 0; r < d; ++r) z(r, c) = rng.normal();
  return (m.factor.triangularView<Eigen::Lower>() * z).transpose();
}

/// sqrt(E) zeta^H + sqrt(Var) vartheta^H with independent components.
inline Eigen::MatrixXd sample_xi(double Etheta, double Vartheta, double H, const std::vector<double>& grid,
                                 std::size_t n, RandomStream& rng) {
  if (Etheta < 0.0 || Vartheta < 0.0) throw std::invalid_argument("sample_xi: moments must be >= 0");
  const auto zeta = build_model(CovarianceModel::subfbm(H), grid);
  const auto vart = build_model(CovarianceModel::theta_proc(H), grid);
  Eigen::MatrixXd a = sample_paths(zeta, n, rng);
  Eigen::MatrixXd b = sample_paths(vart, n, rng);
  return std::sqrt(Etheta) * a + std::sqrt(Vartheta) * b;
}

inline void write_paths_csv(std::ostream& os, const std::vector<double>& grid, const Eigen::MatrixXd& paths) {
  char buf[64];
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", grid[i]);
    os << (i ? "," : "") << "t=" << buf;
  }
  os << '\n';
  for (Eigen::Index r = 0; r < paths.rows(); ++r) {
    for (Eigen::Index c = 0; c < paths.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", paths(r, c));
      os << (c ? "," : "") << buf;
    }
    os << '\n';
  }
}

}  // namespace occlab
