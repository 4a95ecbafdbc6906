#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <variant>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "error.hpp"
#include "vae.hpp"

namespace vaecompare {

struct FullGaussian {
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;  // symmetric positive-definite

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mu.size()); }
};

namespace detail {

inline Eigen::LLT<Eigen::MatrixXd> cholesky(const Eigen::MatrixXd& cov) {
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw NumericError("covariance is not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("covariance is not positive-definite");
  return llt;
}

inline double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace detail

// KL(a || b) = 1/2 [log|Sb| - log|Sa| - d + tr(Sb^-1 Sa) + dmu' Sb^-1 dmu],
// via Cholesky solves.
inline double kl_gaussian_full(const FullGaussian& a, const FullGaussian& b) {
  const auto d = a.mu.size();
  if (b.mu.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d || b.cov.cols() != d)
    throw DimensionError("kl_gaussian_full: dimension mismatch");
  const auto la = detail::cholesky(a.cov);
  const auto lb = detail::cholesky(b.cov);
  const double trace = lb.solve(a.cov).trace();
  const Eigen::VectorXd dmu = b.mu - a.mu;
  const double quad = dmu.dot(lb.solve(dmu));
  const double kl = 0.5 * (detail::log_det(lb) - detail::log_det(la) - static_cast<double>(d) + trace + quad);
  return std::max(kl, 0.0);
}

// Diagonal specialization; the mean term is divided by sigma_b^2 (Sb^-1).
inline double kl_gaussian_diag(const DiagGaussian& a, const DiagGaussian& b) {
  const std::size_t d = a.dim();
  if (b.dim() != d || a.sigma.size() != d || b.sigma.size() != d)
    throw DimensionError("kl_gaussian_diag: dimension mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double log_ratio = std::log(b.sigma[i]) - std::log(a.sigma[i]);
    const double dmu = b.mu[i] - a.mu[i];
    kl += 2.0 * log_ratio - 1.0 + std::exp(-2.0 * log_ratio) + dmu * dmu / (b.sigma[i] * b.sigma[i]);
  }
  return std::max(0.5 * kl, 0.0);
}

// KL(p || q) + KL(q || p) for independent Bernoulli coordinates.
inline double sym_kl_bernoulli(const BernoulliVec& p, const BernoulliVec& q) {
  if (p.dim() != q.dim()) throw DimensionError("sym_kl_bernoulli: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    const double a = p.p[i], b = q.p[i];
    s += (b - a) * (std::log(b) - std::log(a) + std::log1p(-a) - std::log1p(-b));
  }
  return s;
}

// (KL(x, y) + KL(y, x)) / (2d)
inline double avg_sym_divergence(const DiagGaussian& x, const DiagGaussian& y) {
  if (x.dim() != y.dim() || x.dim() == 0) throw DimensionError("avg_sym_divergence: dimension mismatch");
  return (kl_gaussian_diag(x, y) + kl_gaussian_diag(y, x)) / (2.0 * static_cast<double>(x.dim()));
}

inline double avg_sym_divergence(const BernoulliVec& x, const BernoulliVec& y) {
  if (x.dim() != y.dim() || x.dim() == 0) throw DimensionError("avg_sym_divergence: dimension mismatch");
  return sym_kl_bernoulli(x, y) / (2.0 * static_cast<double>(x.dim()));
}

inline double avg_sym_divergence(const OutputDist& x, const OutputDist& y) {
  if (x.index() != y.index()) throw ConfigError("avg_sym_divergence: family mismatch");
  if (const auto* gx = std::get_if<DiagGaussian>(&x)) return avg_sym_divergence(*gx, std::get<DiagGaussian>(y));
  return avg_sym_divergence(std::get<BernoulliVec>(x), std::get<BernoulliVec>(y));
}

// Divergence between the constant Bernoulli vectors (p, ..., p) and (q, ..., q);
// independent of d.
inline double bernoulli_baseline(double p, double q, std::size_t d = 1) {
  if (!(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0)) throw ConfigError("bernoulli_baseline: p, q must lie in (0, 1)");
  if (d == 0) throw ConfigError("bernoulli_baseline: d must be >= 1");
  return avg_sym_divergence(BernoulliVec{std::vector<double>(d, p)}, BernoulliVec{std::vector<double>(d, q)});
}

}  // namespace vaecompare
