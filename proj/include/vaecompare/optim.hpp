#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "neural.hpp"
#include "rng.hpp"

namespace vaecompare {

struct AdamaxState {
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double learning_rate = 0.01;
  double epsilon = 1e-8;  // floor for the infinity-norm estimate
  std::vector<double> first_moment;
  std::vector<double> inf_norm;
};

// One Adamax update:
//   m <- b1 m + (1 - b1) g,  u <- max(b2 u, |g|),
//   theta <- theta - lr / (1 - b1^t) * m / max(u, eps)
inline void adamax_step(std::span<double> params, std::span<const double> grads, AdamaxState& state) {
  if (grads.size() != params.size()) throw DimensionError("adamax_step: grads/params size mismatch");
  if (state.first_moment.empty() && state.inf_norm.empty()) {
    state.first_moment.assign(params.size(), 0.0);
    state.inf_norm.assign(params.size(), 0.0);
  }
  if (state.first_moment.size() != params.size() || state.inf_norm.size() != params.size())
    throw DimensionError("adamax_step: optimizer state size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("adamax_step: non-finite gradient");

  ++state.step;
  const double step_size =
      state.learning_rate / (1.0 - std::pow(state.beta1, static_cast<double>(state.step)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * grads[i];
    state.inf_norm[i] = std::max(state.beta2 * state.inf_norm[i], std::abs(grads[i]));
    params[i] -= step_size * state.first_moment[i] / std::max(state.inf_norm[i], state.epsilon);
  }
}

struct TrainConfig {
  double initial_lr = 0.01;
  std::size_t patience_epochs = 50;
  double val_fraction = 0.10;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 1000;
  std::size_t lr_halving_patience = 20;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(initial_lr > 0.0)) throw ConfigError("train: initial_lr must be positive");
    if (patience_epochs < 1) throw ConfigError("train: patience_epochs must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
      throw ConfigError("train: val_fraction must lie in (0, 1)");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (lr_halving_patience < 1) throw ConfigError("train: lr_halving_patience must be >= 1");
  }
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // empty unless requested
};

template <class M>
concept Trainable = std::copyable<M> && requires(M m, const M cm, std::span<const double> p) {
  { cm.parameters() } -> std::convertible_to<std::vector<double>>;
  m.set_parameters(p);
  m.set_mode(Mode::train);
};

// loss(model, batch, rng, with_grad)
template <class F, class M>
concept LossFunction = std::invocable<F&, M&, const Matrix&, Rng&, bool> &&
    std::convertible_to<std::invoke_result_t<F&, M&, const Matrix&, Rng&, bool>, LossResult>;

struct EpochRecord {
  std::size_t epoch = 0;  // 0 = before any update
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

template <class M>
struct TrainResult {
  M model;  // parameters from the best validation epoch, eval mode
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

// Seeded train/validation split, minibatch Adamax, learning-rate halving on
// plateau, and early stopping with restoration of the best-validation model.
template <Trainable M, LossFunction<M> F>
TrainResult<M> train_early_stopping(M model, const Matrix& data, F&& loss_fn, const TrainConfig& config) {
  config.validate();
  if (data.rows() < 10)
    throw DataError("train: need at least 10 rows, got " + std::to_string(data.rows()));

  const std::size_t n = data.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed({config.seed, tag::split}));
  std::shuffle(order.begin(), order.end(), split_rng);
  auto n_val = static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  const Matrix validation = gather_rows(data, std::span(order).first(n_val));
  std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  Rng batch_rng(derive_seed({config.seed, tag::batches}));
  const std::uint64_t val_seed = derive_seed({config.seed, tag::validation});

  auto validate = [&](M& m) {
    m.set_mode(Mode::eval);
    Rng val_rng(val_seed);
    const double v = LossResult(loss_fn(m, validation, val_rng, false)).loss;
    m.set_mode(Mode::train);
    if (!std::isfinite(v)) throw NumericError("train: non-finite validation loss");
    return v;
  };

  TrainResult<M> result{model, {}, 0, 0.0};
  result.best_val_loss = validate(model);
  result.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), result.best_val_loss,
                            config.initial_lr});

  AdamaxState opt;
  opt.learning_rate = config.initial_lr;
  std::vector<double> params = model.parameters();
  std::size_t since_best = 0, since_lr_change = 0;
  const std::size_t n_train = train_rows.size();
  const std::size_t n_batches = (n_train + config.batch_size - 1) / config.batch_size;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(train_rows.begin(), train_rows.end(), batch_rng);
    double train_loss = 0.0;
    std::size_t begin = 0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      // near-equal batch sizes so no batch degenerates to a single row
      const std::size_t end = n_train * (b + 1) / n_batches;
      const Matrix batch = gather_rows(data, std::span(train_rows).subspan(begin, end - begin));
      LossResult r = loss_fn(model, batch, batch_rng, true);
      if (!std::isfinite(r.loss)) throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
      adamax_step(params, r.grad, opt);
      model.set_parameters(params);
      train_loss += r.loss * static_cast<double>(end - begin);
      begin = end;
    }
    train_loss /= static_cast<double>(n_train);

    const double val_loss = validate(model);
    result.history.push_back({epoch, train_loss, val_loss, opt.learning_rate});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
      since_lr_change = 0;
    } else {
      ++since_best;
      if (++since_lr_change >= config.lr_halving_patience) {
        opt.learning_rate *= 0.5;
        since_lr_change = 0;
      }
    }
    if (since_best >= config.patience_epochs) break;
  }
  result.model.set_mode(Mode::eval);
  return result;
}

}  // namespace vaecompare
