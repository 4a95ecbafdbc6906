#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "comparison.hpp"
#include "error.hpp"
#include "matrix.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace vaecompare {

enum class Averaging { mean, median };
enum class Decision { reject, retain };
enum class Outcome { good, type1, type2 };

inline std::string_view to_string(Averaging a) noexcept { return a == Averaging::mean ? "mean" : "median"; }
inline std::string_view to_string(Decision d) noexcept { return d == Decision::reject ? "reject" : "retain"; }
inline std::string_view to_string(Outcome o) noexcept {
  switch (o) {
    case Outcome::good: return "good";
    case Outcome::type1: return "type1";
    case Outcome::type2: return "type2";
  }
  return "good";
}

inline Averaging parse_averaging(std::string_view s) {
  if (s == "mean") return Averaging::mean;
  if (s == "median") return Averaging::median;
  throw ConfigError("unknown averaging '" + std::string(s) + "' (expected mean|median)");
}

inline double average(std::span<const double> values, Averaging how) {
  return how == Averaging::mean ? mean_of(values) : median_of(values);
}

struct HtestConfig {
  ComparisonConfig comparison;  // comparison.master_seed seeds the whole test
  std::size_t permutations = 100;
  Averaging averaging = Averaging::mean;
  double alpha = 0.05;

  void validate() const {
    comparison.validate();
    if (permutations < 1) throw ConfigError("htest: permutations must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("htest: alpha must lie in (0, 1)");
  }
};

struct TestReport {
  double p_value = 1.0;
  std::vector<double> statistics;  // K_0 (observed), K_1..K_t (permuted)
  DivergenceSamples observed;
  Decision decision = Decision::retain;
  double alpha = 0.05;
  Averaging averaging = Averaging::mean;
  std::vector<std::uint64_t> permutation_seeds;  // one per K_1..K_t
};

// Pools the rows of both datasets, shuffles, and reassigns the first |d1|
// rows to the new d1.
inline std::pair<Matrix, Matrix> permute_pair(const Matrix& d1, const Matrix& d2, Rng& rng) {
  if (d1.cols() != d2.cols()) throw DimensionError("permute_pair: column counts differ");
  const Matrix pool = vstack(d1, d2);
  std::vector<std::size_t> order(pool.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return {gather_rows(pool, std::span(order).first(d1.rows())),
          gather_rows(pool, std::span(order).subspan(d1.rows()))};
}

// Fraction of permuted statistics at least as large as the observed one.
inline double permutation_p_value(double observed, std::span<const double> permuted) {
  if (permuted.empty()) throw ConfigError("permutation_p_value: no permuted statistics");
  const auto ge = std::count_if(permuted.begin(), permuted.end(), [&](double k) { return k >= observed; });
  return static_cast<double>(ge) / static_cast<double>(permuted.size());
}

inline Decision decide(double p_value, double alpha) noexcept {
  return p_value < alpha ? Decision::reject : Decision::retain;
}
inline Decision decide(const TestReport& report, double alpha) noexcept { return decide(report.p_value, alpha); }

inline Outcome classify_outcome(Decision decision, bool ground_truth_same) noexcept {
  if (decision == Decision::reject && ground_truth_same) return Outcome::type1;
  if (decision == Decision::retain && !ground_truth_same) return Outcome::type2;
  return Outcome::good;
}

// Iteration i = 0 compares the datasets as given; i >= 1 compares a fresh
// pooled shuffle. Every iteration runs the comparison with its own master
// seed. Pooled shuffles are uniform, so this matches cumulative re-permutation
// in distribution while keeping iterations independent.
inline TestReport permutation_test(const Matrix& d1, const Matrix& d2, const HtestConfig& config) {
  config.validate();
  if (d1.rows() < 10 || d2.rows() < 10) throw DataError("permutation_test: both datasets need >= 10 rows");
  if (d1.cols() != d2.cols()) throw DimensionError("permutation_test: column counts differ");

  const std::size_t t = config.permutations;
  const std::uint64_t master = config.comparison.master_seed;
  TestReport report;
  report.alpha = config.alpha;
  report.averaging = config.averaging;
  report.statistics.assign(t + 1, 0.0);
  report.permutation_seeds.resize(t);
  for (std::size_t i = 1; i <= t; ++i) report.permutation_seeds[i - 1] = derive_seed({master, i, tag::permute});

  // Outer parallelism over iterations; each comparison then runs serially.
  const unsigned outer = config.comparison.threads;
  parallel_for(t + 1, outer, [&](std::size_t i) {
    ComparisonConfig cc = config.comparison;
    cc.master_seed = derive_seed({master, i, tag::compare});
    cc.threads = 1;
    DivergenceSamples s;
    if (i == 0) {
      s = generate_divergence_samples(d1, d2, cc);
    } else {
      Rng rng(report.permutation_seeds[i - 1]);
      const auto [p1, p2] = permute_pair(d1, d2, rng);
      s = generate_divergence_samples(p1, p2, cc);
    }
    report.statistics[i] = average(s.values, config.averaging);
    if (i == 0) report.observed = std::move(s);
  });

  report.p_value = permutation_p_value(report.statistics[0], std::span(report.statistics).subspan(1));
  report.decision = decide(report.p_value, config.alpha);
  return report;
}

}  // namespace vaecompare
