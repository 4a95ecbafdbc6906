#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "error.hpp"
#include "htest.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace vaecompare {

inline constexpr std::size_t kSimDim = 10;

// Row model: lognormal(location, alpha_i) - lognormal(location, beta_i)
//            + normal(gaussian_mean, gaussian_scale) + k, per coordinate.
// Scales are standard deviations.
struct GeneratorParams {
  std::array<double, kSimDim> alpha{};
  std::array<double, kSimDim> beta{};
  double lognormal_location = std::numbers::ln2;
  double gaussian_mean = 1.0;
  double gaussian_scale = 2.0;

  static GeneratorParams standard() {
    GeneratorParams g;
    for (std::size_t i = 0; i < kSimDim; ++i) {
      g.alpha[i] = 0.2 + 0.7 * static_cast<double>(i) / 9.0;
      g.beta[i] = 0.5;
    }
    return g;
  }

  double coordinate_mean(std::size_t i, double shift) const {
    const double loc = std::exp(lognormal_location);
    return loc * std::exp(alpha[i] * alpha[i] / 2) - loc * std::exp(beta[i] * beta[i] / 2) + gaussian_mean + shift;
  }

  double coordinate_variance(std::size_t i) const {
    auto lognormal_var = [&](double s) {
      return (std::exp(s * s) - 1.0) * std::exp(2.0 * lognormal_location + s * s);
    };
    return lognormal_var(alpha[i]) + lognormal_var(beta[i]) + gaussian_scale * gaussian_scale;
  }
};

struct SimConfig {
  std::size_t n_rows = 500;
  double shift_k = 0.0;
  std::uint64_t seed = 0;
  static constexpr std::size_t dim = kSimDim;
};

// The shift is added after all draws, so configs that differ only in k share
// the same underlying noise.
inline Matrix simulate_dataset(const SimConfig& config, const GeneratorParams& params = GeneratorParams::standard()) {
  if (config.n_rows < 1) throw ConfigError("simulate: n_rows must be >= 1");
  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(config.n_rows, kSimDim);
  for (std::size_t r = 0; r < config.n_rows; ++r)
    for (std::size_t i = 0; i < kSimDim; ++i) {
      const double a = std::exp(params.lognormal_location + params.alpha[i] * normal(rng));
      const double b = std::exp(params.lognormal_location + params.beta[i] * normal(rng));
      const double g = params.gaussian_mean + params.gaussian_scale * normal(rng);
      m(r, i) = a - b + g + config.shift_k;
    }
  return m;
}

struct EcdfPoint {
  double x = 0.0;
  double f = 0.0;
};

inline std::vector<EcdfPoint> ecdf(std::span<const double> values) {
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  std::vector<EcdfPoint> pts;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 1 < s.size() && s[i + 1] == s[i]) continue;
    pts.push_back({s[i], static_cast<double>(i + 1) / static_cast<double>(s.size())});
  }
  return pts;
}

// Kolmogorov-Smirnov distance between the sample and Uniform[0, 1].
inline double ks_uniform_distance(std::span<const double> values) {
  if (values.empty()) throw DataError("ks_uniform_distance: empty sample");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double u = std::clamp(s[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - u, u - static_cast<double>(i) / n});
  }
  return d;
}

// Asymptotic one-sample KS critical value sqrt(-ln(alpha / 2) / 2) / sqrt(n).
inline double ks_critical_value(std::size_t n, double alpha) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

struct ShiftResult {
  double shift = 0.0;
  std::vector<double> p_values;
  std::vector<EcdfPoint> ecdf;
  double rejection_rate = 0.0;  // at the test's alpha
};

struct EcdfExperiment {
  std::vector<ShiftResult> shifts;
  std::uint64_t master_seed = 0;
  std::size_t n_rows = 0;
};

struct EcdfExperimentConfig {
  std::vector<double> shifts{0.0, 1.0, 2.0, 4.0};
  std::size_t runs_per_shift = 50;
  std::size_t n_rows = 500;
  std::uint64_t master_seed = 0;
  HtestConfig htest;  // comparison.master_seed is replaced per run
};

// progress(shift index, run index, p-value) after each run.
using EcdfProgress = std::function<void(std::size_t, std::size_t, double)>;

// Run j draws its datasets and test seeds from (master_seed, j) only, so every
// shift sees the same base noise and the same test randomness.
inline EcdfExperiment pvalue_ecdf_experiment(const EcdfExperimentConfig& config, const EcdfProgress& progress = {}) {
  if (config.runs_per_shift < 1) throw ConfigError("ecdf experiment: runs_per_shift must be >= 1");
  if (config.shifts.empty()) throw ConfigError("ecdf experiment: no shifts");
  config.htest.validate();
  EcdfExperiment out;
  out.master_seed = config.master_seed;
  out.n_rows = config.n_rows;
  for (std::size_t si = 0; si < config.shifts.size(); ++si) {
    ShiftResult res;
    res.shift = config.shifts[si];
    std::size_t rejections = 0;
    for (std::size_t j = 0; j < config.runs_per_shift; ++j) {
      const Matrix d1 = simulate_dataset({config.n_rows, 0.0, derive_seed({config.master_seed, j, tag::dataset1})});
      const Matrix d2 =
          simulate_dataset({config.n_rows, res.shift, derive_seed({config.master_seed, j, tag::dataset2})});
      HtestConfig hc = config.htest;
      hc.comparison.master_seed = derive_seed({config.master_seed, j, tag::compare});
      const TestReport rep = permutation_test(d1, d2, hc);
      res.p_values.push_back(rep.p_value);
      if (rep.decision == Decision::reject) ++rejections;
      if (progress) progress(si, j, rep.p_value);
    }
    res.ecdf = ecdf(res.p_values);
    res.rejection_rate = static_cast<double>(rejections) / static_cast<double>(config.runs_per_shift);
    out.shifts.push_back(std::move(res));
  }
  return out;
}

}  // namespace vaecompare
