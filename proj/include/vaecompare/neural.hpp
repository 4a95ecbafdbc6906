#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace vaecompare {

enum class Activation { linear, elu };
enum class Mode { train, eval };

inline double elu(double x) noexcept { return x > 0.0 ? x : std::expm1(x); }
inline double elu_derivative(double x) noexcept { return x > 0.0 ? 1.0 : std::exp(x); }

// He initialization: i.i.d. N(0, 2 / fan_in), shaped fan_in x fan_out.
inline Matrix he_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0) throw DimensionError("he_init: fan_in and fan_out must be >= 1");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Matrix w(fan_in, fan_out);
  for (double& v : w.values()) v = dist(rng);
  return w;
}

struct BatchNorm {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t width)
      : gamma(width, 1.0), beta(width, 0.0), running_mean(width, 0.0), running_var(width, 1.0) {}
};

struct LayerSpec {
  std::size_t width = 0;
  Activation activation = Activation::linear;
  bool batchnorm = false;
  bool dropout = false;
};

// One dense block: affine -> batch-norm -> activation -> dropout.
struct DenseLayer {
  Matrix weights;  // in x out
  std::vector<double> bias;
  std::optional<BatchNorm> batchnorm;
  Activation activation = Activation::linear;
  bool dropout = false;

  std::size_t in() const noexcept { return weights.rows(); }
  std::size_t out() const noexcept { return weights.cols(); }
  LayerSpec spec() const { return {out(), activation, batchnorm.has_value(), dropout}; }
};

struct Gradients {
  std::vector<double> params;  // same order as DenseNet::parameters()
  Matrix input;                // d loss / d batch
};

class DenseNet {
 public:
  DenseNet() = default;

  DenseNet(std::size_t input_width, std::span<const LayerSpec> specs, double dropout_rate, Rng& rng)
      : input_width_(input_width), dropout_rate_(dropout_rate) {
    check_dropout_rate();
    std::size_t in = input_width;
    for (const auto& s : specs) {
      DenseLayer layer;
      layer.weights = he_init(in, s.width, rng);
      layer.bias.assign(s.width, 0.0);
      if (s.batchnorm) layer.batchnorm.emplace(s.width);
      layer.activation = s.activation;
      layer.dropout = s.dropout;
      layers_.push_back(std::move(layer));
      in = s.width;
    }
    if (layers_.empty()) throw DimensionError("DenseNet: at least one layer required");
  }

  DenseNet(std::size_t input_width, std::vector<DenseLayer> layers, double dropout_rate)
      : input_width_(input_width), dropout_rate_(dropout_rate), layers_(std::move(layers)) {
    check_dropout_rate();
    if (layers_.empty()) throw DimensionError("DenseNet: at least one layer required");
    std::size_t in = input_width_;
    for (const auto& l : layers_) {
      if (l.in() != in || l.bias.size() != l.out())
        throw DimensionError("DenseNet: layer dimensions do not chain");
      if (l.batchnorm) {
        const auto& bn = *l.batchnorm;
        if (bn.gamma.size() != l.out() || bn.beta.size() != l.out() ||
            bn.running_mean.size() != l.out() || bn.running_var.size() != l.out())
          throw DimensionError("DenseNet: batch-norm width mismatch");
        for (double v : bn.running_var)
          if (!(v > 0.0)) throw DataError("DenseNet: running variance must be positive");
      }
      in = l.out();
    }
  }

  // Hidden blocks are affine -> batch-norm -> ELU -> dropout; the output
  // block is a plain affine map.
  static DenseNet mlp(std::size_t input_width, std::size_t hidden_layers, std::size_t hidden_width,
                      std::size_t output_width, bool batchnorm, double dropout_rate, Rng& rng) {
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i < hidden_layers; ++i)
      specs.push_back({hidden_width, Activation::elu, batchnorm, dropout_rate > 0.0});
    specs.push_back({output_width, Activation::linear, false, false});
    return DenseNet(input_width, specs, dropout_rate, rng);
  }

  std::size_t input_width() const noexcept { return input_width_; }
  std::size_t output_width() const noexcept { return layers_.back().out(); }
  double dropout_rate() const noexcept { return dropout_rate_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode m) noexcept { mode_ = m; }

  // In train mode, uses batch statistics, updates running statistics, draws
  // dropout masks from rng and caches intermediates for backward().
  Matrix forward(const Matrix& batch, Rng& rng) {
    if (mode_ == Mode::eval) {
      cache_.clear();
      return infer(batch);
    }
    check_input(batch);
    cache_.assign(layers_.size(), {});
    Matrix x = batch;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      auto& layer = layers_[li];
      auto& c = cache_[li];
      c.input = std::move(x);
      Matrix a = affine(layer, c.input);
      const std::size_t n = a.rows(), w = a.cols();
      if (layer.batchnorm) {
        auto& bn = *layer.batchnorm;
        c.inv_std.assign(w, 0.0);
        c.xhat = Matrix(n, w);
        for (std::size_t j = 0; j < w; ++j) {
          double mean = 0.0;
          for (std::size_t r = 0; r < n; ++r) mean += a(r, j);
          mean /= static_cast<double>(n);
          double var = 0.0;
          for (std::size_t r = 0; r < n; ++r) var += (a(r, j) - mean) * (a(r, j) - mean);
          var /= static_cast<double>(n);
          c.inv_std[j] = 1.0 / std::sqrt(var + bn.epsilon);
          for (std::size_t r = 0; r < n; ++r) {
            c.xhat(r, j) = (a(r, j) - mean) * c.inv_std[j];
            a(r, j) = bn.gamma[j] * c.xhat(r, j) + bn.beta[j];
          }
          const double unbiased = n > 1 ? var * n / static_cast<double>(n - 1) : var;
          bn.running_mean[j] = (1.0 - bn.momentum) * bn.running_mean[j] + bn.momentum * mean;
          bn.running_var[j] = (1.0 - bn.momentum) * bn.running_var[j] + bn.momentum * unbiased;
        }
      }
      c.pre_activation = a;
      if (layer.activation == Activation::elu)
        for (double& v : a.values()) v = elu(v);
      if (layer.dropout && dropout_rate_ > 0.0) {
        const double keep = 1.0 - dropout_rate_;
        std::bernoulli_distribution coin(keep);
        c.mask = Matrix(n, w);
        for (std::size_t i = 0; i < a.size(); ++i) {
          c.mask.values()[i] = coin(rng) ? 1.0 / keep : 0.0;
          a.values()[i] *= c.mask.values()[i];
        }
      }
      x = std::move(a);
    }
    return x;
  }

  // Eval-mode forward pass: running statistics, no dropout, no caching.
  Matrix infer(const Matrix& batch) const {
    check_input(batch);
    Matrix x = batch;
    for (const auto& layer : layers_) {
      Matrix a = affine(layer, x);
      if (layer.batchnorm) {
        const auto& bn = *layer.batchnorm;
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t j = 0; j < a.cols(); ++j)
            a(r, j) = bn.gamma[j] * (a(r, j) - bn.running_mean[j]) /
                          std::sqrt(bn.running_var[j] + bn.epsilon) +
                      bn.beta[j];
      }
      if (layer.activation == Activation::elu)
        for (double& v : a.values()) v = elu(v);
      x = std::move(a);
    }
    return x;
  }

  bool has_cache() const noexcept { return !cache_.empty(); }

  // Gradient of a scalar loss given d loss / d output of the last train-mode
  // forward pass.
  Gradients backward(const Matrix& loss_grad) const {
    if (cache_.empty()) throw Error("DenseNet::backward: no cached train-mode forward pass");
    const std::size_t n = cache_.front().input.rows();
    if (loss_grad.rows() != n || loss_grad.cols() != output_width())
      throw DimensionError("DenseNet::backward: loss gradient shape mismatch");

    Gradients out;
    out.params.assign(parameter_count(), 0.0);
    Matrix g = loss_grad;
    std::size_t offset = parameter_count();
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& layer = layers_[li];
      const auto& c = cache_[li];
      const std::size_t in = layer.in(), w = layer.out();
      offset -= layer_parameter_count(layer);
      double* dw = out.params.data() + offset;
      double* db = dw + in * w;
      double* dgamma = db + w;
      double* dbeta = dgamma + w;

      if (layer.dropout && dropout_rate_ > 0.0)
        for (std::size_t i = 0; i < g.size(); ++i) g.values()[i] *= c.mask.values()[i];
      if (layer.activation == Activation::elu)
        for (std::size_t i = 0; i < g.size(); ++i)
          g.values()[i] *= elu_derivative(c.pre_activation.values()[i]);
      if (layer.batchnorm) {
        const auto& bn = *layer.batchnorm;
        const double nn = static_cast<double>(n);
        for (std::size_t j = 0; j < w; ++j) {
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::size_t r = 0; r < n; ++r) {
            dgamma[j] += g(r, j) * c.xhat(r, j);
            dbeta[j] += g(r, j);
            const double dxhat = g(r, j) * bn.gamma[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * c.xhat(r, j);
          }
          for (std::size_t r = 0; r < n; ++r) {
            const double dxhat = g(r, j) * bn.gamma[j];
            g(r, j) = c.inv_std[j] / nn * (nn * dxhat - sum_dxhat - c.xhat(r, j) * sum_dxhat_xhat);
          }
        }
      }
      Matrix dx(n, in);
      for (std::size_t r = 0; r < n; ++r) {
        const double* __restrict gr = g.row(r).data();
        const double* __restrict xr = c.input.row(r).data();
        double* __restrict dxr = dx.row(r).data();
        for (std::size_t k = 0; k < in; ++k) {
          const double xv = xr[k];
          double* __restrict dwk = dw + k * w;
          for (std::size_t j = 0; j < w; ++j) dwk[j] += xv * gr[j];
        }
        for (std::size_t k = 0; k < in; ++k) {
          const double* __restrict wk = layer.weights.row(k).data();
          double acc = 0.0;
          for (std::size_t j = 0; j < w; ++j) acc += gr[j] * wk[j];
          dxr[k] = acc;
        }
        for (std::size_t j = 0; j < w; ++j) db[j] += gr[j];
      }
      g = std::move(dx);
    }
    out.input = std::move(g);
    return out;
  }

  void clear_cache() noexcept { cache_.clear(); }

  // Trainable parameters per layer: weights (row-major), bias, then
  // batch-norm gamma and beta when present.
  std::size_t parameter_count() const noexcept {
    std::size_t total = 0;
    for (const auto& l : layers_) total += layer_parameter_count(l);
    return total;
  }

  std::vector<double> parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    for (const auto& l : layers_) {
      p.insert(p.end(), l.weights.values().begin(), l.weights.values().end());
      p.insert(p.end(), l.bias.begin(), l.bias.end());
      if (l.batchnorm) {
        p.insert(p.end(), l.batchnorm->gamma.begin(), l.batchnorm->gamma.end());
        p.insert(p.end(), l.batchnorm->beta.begin(), l.batchnorm->beta.end());
      }
    }
    return p;
  }

  void set_parameters(std::span<const double> p) {
    if (p.size() != parameter_count()) throw DimensionError("DenseNet: parameter count mismatch");
    auto it = p.begin();
    auto take = [&it](std::span<double> dst) {
      std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
      it += static_cast<std::ptrdiff_t>(dst.size());
    };
    for (auto& l : layers_) {
      take(l.weights.values());
      take(l.bias);
      if (l.batchnorm) {
        take(l.batchnorm->gamma);
        take(l.batchnorm->beta);
      }
    }
  }

 private:
  struct LayerCache {
    Matrix input;
    Matrix xhat;
    std::vector<double> inv_std;
    Matrix pre_activation;
    Matrix mask;
  };

  static std::size_t layer_parameter_count(const DenseLayer& l) noexcept {
    return l.in() * l.out() + l.out() + (l.batchnorm ? 2 * l.out() : 0);
  }

  static Matrix affine(const DenseLayer& layer, const Matrix& x) {
    const std::size_t n = x.rows(), in = layer.in(), w = layer.out();
    Matrix a(n, w);
    for (std::size_t r = 0; r < n; ++r) {
      double* __restrict ar = a.row(r).data();
      std::copy(layer.bias.begin(), layer.bias.end(), ar);
      const double* __restrict xr = x.row(r).data();
      for (std::size_t k = 0; k < in; ++k) {
        const double xv = xr[k];
        const double* __restrict wk = layer.weights.row(k).data();
        for (std::size_t j = 0; j < w; ++j) ar[j] += xv * wk[j];
      }
    }
    return a;
  }

  void check_input(const Matrix& batch) const {
    if (batch.cols() != input_width_)
      throw DimensionError("DenseNet: batch has " + std::to_string(batch.cols()) +
                           " columns, expected " + std::to_string(input_width_));
    if (batch.rows() == 0) throw DimensionError("DenseNet: empty batch");
  }

  void check_dropout_rate() const {
    if (!(dropout_rate_ >= 0.0 && dropout_rate_ < 1.0))
      throw ConfigError("DenseNet: dropout rate must lie in [0, 1)");
  }

  std::size_t input_width_ = 0;
  double dropout_rate_ = 0.0;
  std::vector<DenseLayer> layers_;
  Mode mode_ = Mode::train;
  std::vector<LayerCache> cache_;
};

}  // namespace vaecompare
