#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Cholesky>

#include "test_util.hpp"
#include "vaecompare/divergence.hpp"

using namespace vaecompare;
using vaecompare::testing::mean_and_error;

namespace {

FullGaussian to_full(const DiagGaussian& g) {
  const auto d = static_cast<Eigen::Index>(g.dim());
  FullGaussian f{Eigen::VectorXd(d), Eigen::MatrixXd::Zero(d, d)};
  for (Eigen::Index i = 0; i < d; ++i) {
    f.mu(i) = g.mu[static_cast<std::size_t>(i)];
    f.cov(i, i) = g.sigma[static_cast<std::size_t>(i)] * g.sigma[static_cast<std::size_t>(i)];
  }
  return f;
}

DiagGaussian random_diag(std::size_t d, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> s(0.3, 3.0);
  DiagGaussian g{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t i = 0; i < d; ++i) {
    g.mu[i] = n(rng);
    g.sigma[i] = s(rng);
  }
  return g;
}

FullGaussian random_full(std::size_t d, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  FullGaussian g{Eigen::VectorXd(d), a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(d, d)};
  for (Eigen::Index i = 0; i < g.mu.size(); ++i) g.mu(i) = n(rng);
  return g;
}

// Monte-Carlo E_a[log a(x) - log b(x)] from explicit log-densities.
vaecompare::testing::MeanAndError mc_kl(const FullGaussian& a, const FullGaussian& b, std::size_t draws,
                                        std::uint64_t seed) {
  const Eigen::MatrixXd la = a.cov.llt().matrixL();
  const Eigen::LLT<Eigen::MatrixXd> lb(b.cov);
  const Eigen::MatrixXd lbm = lb.matrixL();
  const double logdet_a = 2.0 * la.diagonal().array().log().sum();
  const double logdet_b = 2.0 * lbm.diagonal().array().log().sum();
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(draws);
  Eigen::VectorXd e(a.mu.size());
  for (auto& out : v) {
    for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = n(rng);
    const Eigen::VectorXd x = a.mu + la * e;
    const Eigen::VectorXd db = lbm.triangularView<Eigen::Lower>().solve(x - b.mu);
    out = -0.5 * logdet_a - 0.5 * e.squaredNorm() + 0.5 * logdet_b + 0.5 * db.squaredNorm();
  }
  return mean_and_error(v);
}

double enumerated_sym_kl(const BernoulliVec& p, const BernoulliVec& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i)
    for (int x = 0; x <= 1; ++x) {
      const double pp = x ? p.p[i] : 1.0 - p.p[i];
      const double qq = x ? q.p[i] : 1.0 - q.p[i];
      s += pp * std::log(pp / qq) + qq * std::log(qq / pp);
    }
  return s;
}

}  // namespace

TEST(KlGaussianFull, IdenticalIsZero) {
  Rng rng(1);
  const auto g = random_full(4, rng);
  EXPECT_NEAR(kl_gaussian_full(g, g), 0.0, 1e-12);
}

TEST(KlGaussianFull, UnitMeanShiftIsHalfD) {
  for (int d : {1, 3, 10}) {
    FullGaussian a{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)};
    FullGaussian b{Eigen::VectorXd::Ones(d), Eigen::MatrixXd::Identity(d, d)};
    EXPECT_NEAR(kl_gaussian_full(a, b), d / 2.0, 1e-12);
  }
}

TEST(KlGaussianFull, MatchesMonteCarlo) {
  Rng rng(17);
  const auto a = random_full(2, rng), b = random_full(2, rng);
  const auto mc = mc_kl(a, b, 1'000'000, 5);
  EXPECT_NEAR(kl_gaussian_full(a, b), mc.mean, 3.0 * mc.standard_error);
}

TEST(KlGaussianFull, RejectsNonPositiveDefinite) {
  FullGaussian a{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
  FullGaussian b{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
  b.cov(1, 1) = -1.0;
  EXPECT_THROW(kl_gaussian_full(a, b), NumericError);
  b.cov = Eigen::MatrixXd::Identity(2, 2);
  b.cov(0, 1) = 0.5;
  EXPECT_THROW(kl_gaussian_full(a, b), NumericError);
}

TEST(KlGaussianDiag, IdenticalIsZero) {
  Rng rng(2);
  const auto g = random_diag(5, rng);
  EXPECT_EQ(kl_gaussian_diag(g, g), 0.0);
}

TEST(KlGaussianDiag, WorkedExample) {
  const DiagGaussian a{{0.0}, {1.0}}, b{{1.0}, {2.0}};
  const double expected = 0.5 * (2.0 * std::log(2.0) - 1.0 + 0.25 + 0.25);
  EXPECT_NEAR(expected, 0.44314718055994530942, 1e-15);
  EXPECT_NEAR(kl_gaussian_diag(a, b), expected, 1e-15);
  const auto mc = mc_kl(to_full(a), to_full(b), 1'000'000, 9);
  EXPECT_NEAR(kl_gaussian_diag(a, b), mc.mean, 3.0 * mc.standard_error);
}

TEST(KlGaussianDiag, AgreesWithFullCovarianceFormula) {
  Rng rng(3);
  std::uniform_int_distribution<std::size_t> dim(1, 12);
  for (int i = 0; i < 100; ++i) {
    const std::size_t d = dim(rng);
    const auto a = random_diag(d, rng), b = random_diag(d, rng);
    const double full = kl_gaussian_full(to_full(a), to_full(b));
    EXPECT_NEAR(kl_gaussian_diag(a, b), full, 1e-10 * std::max(full, 1e-300));
  }
}

TEST(KlGaussianDiag, StableNearSigmaClampBounds) {
  const DiagGaussian a{{0.0}, {std::exp(-10.0)}}, b{{0.0}, {std::exp(10.0)}};
  const double kl = kl_gaussian_diag(a, b);
  EXPECT_TRUE(std::isfinite(kl));
  EXPECT_NEAR(kl, 0.5 * (40.0 - 1.0 + std::exp(-40.0)), 1e-9);
}

TEST(SymKlBernoulli, EqualIsZero) {
  const BernoulliVec p{{0.1, 0.5, 0.9}};
  EXPECT_EQ(sym_kl_bernoulli(p, p), 0.0);
}

TEST(SymKlBernoulli, WorkedExample) {
  const BernoulliVec p{{0.5}}, q{{0.8}};
  EXPECT_NEAR(sym_kl_bernoulli(p, q), 0.3 * std::log(4.0), 1e-15);
  EXPECT_NEAR(0.3 * std::log(4.0), 0.41588830833596715, 1e-15);
  EXPECT_NEAR(sym_kl_bernoulli(p, q), enumerated_sym_kl(p, q), 1e-15);
}

TEST(SymKlBernoulli, MatchesEnumeration) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(kProbFloor, 1.0 - kProbFloor);
  std::uniform_int_distribution<std::size_t> dim(1, 10);
  for (int i = 0; i < 50; ++i) {
    const std::size_t d = dim(rng);
    BernoulliVec p{std::vector<double>(d)}, q{std::vector<double>(d)};
    for (std::size_t j = 0; j < d; ++j) {
      p.p[j] = u(rng);
      q.p[j] = u(rng);
    }
    EXPECT_NEAR(sym_kl_bernoulli(p, q), enumerated_sym_kl(p, q), 1e-12);
  }
}

TEST(AvgSymDivergence, YardstickIsOneHalf) {
  for (std::size_t d : {1u, 10u, 784u}) {
    const DiagGaussian n0{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
    const DiagGaussian n1{std::vector<double>(d, 1.0), std::vector<double>(d, 1.0)};
    EXPECT_NEAR(avg_sym_divergence(n0, n1), 0.5, 1e-12);
  }
}

TEST(AvgSymDivergence, SelfIsZeroAndSymmetric) {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto a = random_diag(6, rng), b = random_diag(6, rng);
    EXPECT_EQ(avg_sym_divergence(a, a), 0.0);
    EXPECT_EQ(avg_sym_divergence(a, b), avg_sym_divergence(b, a));
    EXPECT_GT(avg_sym_divergence(a, b), 0.0);
  }
  const OutputDist p = BernoulliVec{{0.2, 0.7}}, q = BernoulliVec{{0.6, 0.1}};
  EXPECT_EQ(avg_sym_divergence(p, q), avg_sym_divergence(q, p));
}

TEST(AvgSymDivergence, FamilyMismatchThrows) {
  const OutputDist g = DiagGaussian{{0.0}, {1.0}}, b = BernoulliVec{{0.5}};
  EXPECT_THROW(avg_sym_divergence(g, b), ConfigError);
}

TEST(AvgSymDivergence, InvariantUnderJointCoordinatePermutation) {
  Rng rng(6);
  const auto a = random_diag(8, rng), b = random_diag(8, rng);
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  DiagGaussian pa = a, pb = b;
  for (std::size_t i = 0; i < 8; ++i) {
    pa.mu[i] = a.mu[perm[i]];
    pa.sigma[i] = a.sigma[perm[i]];
    pb.mu[i] = b.mu[perm[i]];
    pb.sigma[i] = b.sigma[perm[i]];
  }
  EXPECT_NEAR(avg_sym_divergence(pa, pb), avg_sym_divergence(a, b), 1e-13);
}

TEST(AvgSymDivergence, InvariantUnderCoordinateDuplication) {
  Rng rng(7);
  const auto a = random_diag(5, rng), b = random_diag(5, rng);
  auto dup = [](DiagGaussian g) {
    g.mu.insert(g.mu.end(), g.mu.begin(), g.mu.end());
    g.sigma.insert(g.sigma.end(), g.sigma.begin(), g.sigma.end());
    return g;
  };
  EXPECT_NEAR(avg_sym_divergence(dup(a), dup(b)), avg_sym_divergence(a, b), 1e-13);
  const BernoulliVec p{{0.2, 0.9}}, q{{0.4, 0.3}};
  const BernoulliVec p2{{0.2, 0.9, 0.2, 0.9}}, q2{{0.4, 0.3, 0.4, 0.3}};
  EXPECT_NEAR(avg_sym_divergence(p2, q2), avg_sym_divergence(p, q), 1e-15);
}

TEST(BernoulliBaseline, Values) {
  EXPECT_EQ(bernoulli_baseline(0.5, 0.5, 7), 0.0);
  EXPECT_NEAR(bernoulli_baseline(0.5, 0.8, 100), 0.3 * std::log(4.0) / 2.0, 1e-14);
  EXPECT_NEAR(bernoulli_baseline(0.5, 0.8, 100), 0.20794415416798358, 1e-14);
  for (std::size_t d : {1u, 2u, 33u, 784u})
    EXPECT_NEAR(bernoulli_baseline(0.3, 0.6, d), bernoulli_baseline(0.3, 0.6, 1), 1e-14);
  EXPECT_THROW(bernoulli_baseline(0.0, 0.5), ConfigError);
}
