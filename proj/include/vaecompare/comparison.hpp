#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "divergence.hpp"
#include "error.hpp"
#include "matrix.hpp"
#include "optim.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "vae.hpp"

namespace vaecompare {

struct ComparisonConfig {
  std::size_t samples_per_refit = 100;
  std::size_t refits = 3;
  Family family = Family::gaussian;
  VaeArchitecture architecture;
  TrainConfig train;  // train.seed is replaced per refit
  std::uint64_t master_seed = 0;
  unsigned threads = 1;
  // Gaussian family only: z-score every column with statistics pooled over
  // both datasets before fitting. The averaged symmetric divergence between
  // diagonal Gaussians is invariant under a shared per-coordinate affine map.
  bool standardize = true;

  void validate() const {
    if (samples_per_refit < 1) throw ConfigError("comparison: samples_per_refit must be >= 1");
    if (refits < 1) throw ConfigError("comparison: refits must be >= 1");
    architecture.validate();
    train.validate();
  }
};

struct DivergenceSamples {
  std::vector<double> values;
  std::vector<std::size_t> refit_index;
  std::vector<std::uint64_t> refit_seeds;  // (dataset 1, dataset 2) training seeds per refit
  ComparisonConfig config;
};

// Training seed for the VAE fitted to dataset `which` (tag::dataset1/2) in
// refit r.
inline std::uint64_t refit_seed(std::uint64_t master_seed, std::size_t refit, std::uint64_t which) {
  return derive_seed({master_seed, refit, which});
}

struct ColumnScaling {
  std::vector<double> mean;
  std::vector<double> scale;
};

inline ColumnScaling pooled_scaling(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("pooled_scaling: column counts differ");
  const std::size_t cols = a.cols();
  const double n = static_cast<double>(a.rows() + b.rows());
  ColumnScaling s{std::vector<double>(cols, 0.0), std::vector<double>(cols, 0.0)};
  for (const Matrix* m : {&a, &b})
    for (std::size_t r = 0; r < m->rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) s.mean[c] += (*m)(r, c);
  for (double& v : s.mean) v /= n;
  for (const Matrix* m : {&a, &b})
    for (std::size_t r = 0; r < m->rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) s.scale[c] += ((*m)(r, c) - s.mean[c]) * ((*m)(r, c) - s.mean[c]);
  for (double& v : s.scale) {
    v = std::sqrt(v / n);
    if (!(v > 0.0)) v = 1.0;
  }
  return s;
}

inline Matrix apply_scaling(const Matrix& m, const ColumnScaling& s) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = (out(r, c) - s.mean[c]) / s.scale[c];
  return out;
}

// For each refit: fit one VAE per dataset, draw n output distributions from
// each and record the averaged symmetric divergence of each pair.
inline DivergenceSamples generate_divergence_samples(const Matrix& d1, const Matrix& d2,
                                                     const ComparisonConfig& config) {
  config.validate();
  if (d1.empty() || d2.empty()) throw DataError("generate_divergence_samples: empty dataset");
  if (d1.cols() != d2.cols()) throw DimensionError("generate_divergence_samples: column counts differ");
  if (d1.rows() < 10 || d2.rows() < 10) throw DataError("generate_divergence_samples: each dataset needs >= 10 rows");

  const std::size_t n = config.samples_per_refit, refits = config.refits;
  DivergenceSamples out;
  out.values.assign(n * refits, 0.0);
  out.refit_index.assign(n * refits, 0);
  out.refit_seeds.assign(2 * refits, 0);
  out.config = config;

  Matrix s1, s2;
  const bool scale = config.standardize && config.family == Family::gaussian;
  if (scale) {
    const auto sc = pooled_scaling(d1, d2);
    s1 = apply_scaling(d1, sc);
    s2 = apply_scaling(d2, sc);
  }
  const Matrix& x1 = scale ? s1 : d1;
  const Matrix& x2 = scale ? s2 : d2;

  std::vector<std::vector<OutputDist>> outputs(2 * refits);
  parallel_for(2 * refits, config.threads, [&](std::size_t task) {
    const std::size_t r = task / 2;
    const bool first = task % 2 == 0;
    TrainConfig tc = config.train;
    tc.seed = refit_seed(config.master_seed, r, first ? tag::dataset1 : tag::dataset2);
    out.refit_seeds[task] = tc.seed;
    try {
      const auto fit = train_vae(first ? x1 : x2, config.family, config.architecture, tc);
      Rng rng(derive_seed({config.master_seed, r, first ? tag::sample1 : tag::sample2}));
      outputs[task] = sample_outputs(fit.model, n, rng);
    } catch (const RefitError&) {
      throw;
    } catch (const Error& e) {
      throw RefitError(r, e.what());
    }
  });

  for (std::size_t r = 0; r < refits; ++r)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = avg_sym_divergence(outputs[2 * r][j], outputs[2 * r + 1][j]);
      if (!std::isfinite(v)) throw RefitError(r, "non-finite divergence sample");
      out.values[r * n + j] = v;
      out.refit_index[r * n + j] = r;
    }
  return out;
}

// Seeded shuffle, then floor(rows/2) rows to the first half and the rest to
// the second.
inline std::pair<Matrix, Matrix> split_half(const Matrix& data, std::uint64_t seed) {
  if (data.rows() < 2) throw DataError("split_half: need at least 2 rows");
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed({seed, tag::split}));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t half = data.rows() / 2;
  return {gather_rows(data, std::span(order).first(half)), gather_rows(data, std::span(order).subspan(half))};
}

struct SummaryStats {
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::size_t outlier_count = 0;
};

// Linear-interpolation quantile of sorted values (R type 7).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DataError("quantile: empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) throw DataError("mean: empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median_of(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s, 0.5);
}

// Box-plot summary with Tukey whiskers at 1.5 IQR.
inline SummaryStats summarize(std::span<const double> values) {
  if (values.empty()) throw DataError("summarize: empty sample");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  SummaryStats st;
  st.mean = mean_of(s);
  st.median = quantile_sorted(s, 0.5);
  st.q1 = quantile_sorted(s, 0.25);
  st.q3 = quantile_sorted(s, 0.75);
  const double iqr = st.q3 - st.q1;
  const double lo_fence = st.q1 - 1.5 * iqr, hi_fence = st.q3 + 1.5 * iqr;
  st.whisker_low = st.q1;
  st.whisker_high = st.q3;
  for (double v : s) {
    if (v < lo_fence || v > hi_fence) {
      ++st.outlier_count;
      continue;
    }
    st.whisker_low = std::min(st.whisker_low, v);
    st.whisker_high = std::max(st.whisker_high, v);
  }
  return st;
}

inline SummaryStats summarize(const DivergenceSamples& s) { return summarize(s.values); }

// Divergence between N(0, I) and N(1, I).
inline double gaussian_baseline() { return 0.5; }

}  // namespace vaecompare
