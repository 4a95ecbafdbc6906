#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "neural.hpp"
#include "optim.hpp"
#include "rng.hpp"

namespace vaecompare {

enum class Family { gaussian, bernoulli };

inline std::string_view to_string(Family f) noexcept {
  return f == Family::gaussian ? "gaussian" : "bernoulli";
}

inline Family parse_family(std::string_view s) {
  if (s == "gaussian") return Family::gaussian;
  if (s == "bernoulli") return Family::bernoulli;
  throw ConfigError("unknown family '" + std::string(s) + "' (expected gaussian|bernoulli)");
}

// Gaussian with diagonal covariance diag(sigma^2).
struct DiagGaussian {
  std::vector<double> mu;
  std::vector<double> sigma;

  std::size_t dim() const noexcept { return mu.size(); }
  friend bool operator==(const DiagGaussian&, const DiagGaussian&) = default;
};

// Independent Bernoulli coordinates.
struct BernoulliVec {
  std::vector<double> p;

  std::size_t dim() const noexcept { return p.size(); }
  friend bool operator==(const BernoulliVec&, const BernoulliVec&) = default;
};

using OutputDist = std::variant<DiagGaussian, BernoulliVec>;

inline constexpr double kLogVarBound = 20.0;
inline constexpr double kProbFloor = 1e-6;

inline double clamp_logvar(double v) noexcept { return std::clamp(v, -kLogVarBound, kLogVarBound); }
inline bool logvar_clamped(double v) noexcept { return v < -kLogVarBound || v > kLogVarBound; }

inline double clamp_prob(double p) noexcept { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

inline double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct VaeArchitecture {
  std::size_t latent_dim = 10;
  std::size_t hidden_layers = 3;
  std::size_t hidden_width = 50;
  bool batchnorm = true;
  double dropout_rate = 0.5;

  // Encoder and decoder of ten 100-unit hidden layers.
  static VaeArchitecture reference() { return {10, 10, 100, true, 0.5}; }

  void validate() const {
    if (latent_dim < 1) throw ConfigError("vae: latent_dim must be >= 1");
    if (hidden_layers > 0 && hidden_width < 1) throw ConfigError("vae: hidden_width must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("vae: dropout must lie in [0, 1)");
  }
};

// Encoder maps x to (mu, log-variance) of the latent posterior; decoder maps z
// to (mu, log-variance) of x for the Gaussian family or to Bernoulli logits.
class VaeModel {
 public:
  VaeModel() = default;

  VaeModel(std::size_t data_dim, Family family, const VaeArchitecture& arch, std::uint64_t seed)
      : data_dim_(data_dim), family_(family), arch_(arch), seed_(seed) {
    arch.validate();
    if (data_dim < 1) throw DimensionError("vae: data_dim must be >= 1");
    Rng rng(derive_seed({seed, tag::init}));
    encoder_ = DenseNet::mlp(data_dim, arch.hidden_layers, arch.hidden_width, 2 * arch.latent_dim,
                             arch.batchnorm, arch.dropout_rate, rng);
    decoder_ = DenseNet::mlp(arch.latent_dim, arch.hidden_layers, arch.hidden_width, decoder_width(),
                             arch.batchnorm, arch.dropout_rate, rng);
  }

  VaeModel(std::size_t data_dim, Family family, const VaeArchitecture& arch, std::uint64_t seed,
           DenseNet encoder, DenseNet decoder)
      : data_dim_(data_dim), family_(family), arch_(arch), seed_(seed),
        encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
    arch.validate();
    if (encoder_.input_width() != data_dim || encoder_.output_width() != 2 * arch.latent_dim)
      throw DimensionError("vae: encoder must map data_dim -> 2 * latent_dim");
    if (decoder_.input_width() != arch.latent_dim || decoder_.output_width() != decoder_width())
      throw DimensionError("vae: decoder output width does not match family");
  }

  std::size_t data_dim() const noexcept { return data_dim_; }
  std::size_t latent_dim() const noexcept { return arch_.latent_dim; }
  Family family() const noexcept { return family_; }
  const VaeArchitecture& architecture() const noexcept { return arch_; }
  std::uint64_t seed() const noexcept { return seed_; }

  const DenseNet& encoder() const noexcept { return encoder_; }
  const DenseNet& decoder() const noexcept { return decoder_; }
  DenseNet& encoder() noexcept { return encoder_; }
  DenseNet& decoder() noexcept { return decoder_; }

  Mode mode() const noexcept { return encoder_.mode(); }
  void set_mode(Mode m) noexcept {
    encoder_.set_mode(m);
    decoder_.set_mode(m);
  }

  std::vector<double> parameters() const {
    auto p = encoder_.parameters();
    const auto q = decoder_.parameters();
    p.insert(p.end(), q.begin(), q.end());
    return p;
  }

  void set_parameters(std::span<const double> p) {
    const std::size_t ne = encoder_.parameter_count();
    if (p.size() != ne + decoder_.parameter_count()) throw DimensionError("vae: parameter count mismatch");
    encoder_.set_parameters(p.first(ne));
    decoder_.set_parameters(p.subspan(ne));
  }

 private:
  std::size_t decoder_width() const noexcept {
    return family_ == Family::gaussian ? 2 * data_dim_ : data_dim_;
  }

  std::size_t data_dim_ = 0;
  Family family_ = Family::gaussian;
  VaeArchitecture arch_;
  std::uint64_t seed_ = 0;
  DenseNet encoder_;
  DenseNet decoder_;
};

namespace detail {

inline DiagGaussian gaussian_from_row(std::span<const double> raw, std::size_t k) {
  DiagGaussian g{std::vector<double>(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(k)),
                 std::vector<double>(k)};
  for (std::size_t i = 0; i < k; ++i) g.sigma[i] = std::exp(0.5 * clamp_logvar(raw[k + i]));
  return g;
}

inline OutputDist output_from_row(Family family, std::span<const double> raw, std::size_t d) {
  if (family == Family::gaussian) return gaussian_from_row(raw, d);
  BernoulliVec b{std::vector<double>(d)};
  for (std::size_t i = 0; i < d; ++i) b.p[i] = clamp_prob(logistic(raw[i]));
  return b;
}

inline Matrix as_row(std::span<const double> v) {
  return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

}  // namespace detail

// Approximate posterior Q(Z | x), eval-mode encoder.
inline DiagGaussian encode(const VaeModel& model, std::span<const double> x) {
  if (x.size() != model.data_dim()) throw DimensionError("encode: input length != data_dim");
  const Matrix h = model.encoder().infer(detail::as_row(x));
  return detail::gaussian_from_row(h.row(0), model.latent_dim());
}

inline std::vector<double> reparameterize(const DiagGaussian& q, std::span<const double> eps) {
  if (eps.size() != q.dim() || q.sigma.size() != q.dim())
    throw DimensionError("reparameterize: dimension mismatch");
  std::vector<double> z(q.dim());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = q.mu[i] + q.sigma[i] * eps[i];
  return z;
}

// Decoder output distribution for latent z, eval-mode decoder.
inline OutputDist decode(const VaeModel& model, std::span<const double> z) {
  if (z.size() != model.latent_dim()) throw DimensionError("decode: latent length != latent_dim");
  const Matrix g = model.decoder().infer(detail::as_row(z));
  return detail::output_from_row(model.family(), g.row(0), model.data_dim());
}

// KL(N(mu, diag sigma^2) || N(0, I)).
inline double kl_posterior_prior(const DiagGaussian& q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i)
    kl += q.mu[i] * q.mu[i] + q.sigma[i] * q.sigma[i] - 1.0 - 2.0 * std::log(q.sigma[i]);
  return 0.5 * kl;
}

// Batch mean of -ELBO with one reparameterized latent draw per instance.
// Train mode runs the networks with batch-norm statistics and dropout; eval
// mode uses running statistics. Gradients require train mode.
inline LossResult negative_elbo(VaeModel& model, const Matrix& batch, Rng& rng, bool with_grad) {
  const std::size_t n = batch.rows(), d = model.data_dim(), k = model.latent_dim();
  if (n == 0) throw DimensionError("negative_elbo: empty batch");
  if (batch.cols() != d) throw DimensionError("negative_elbo: batch width != data_dim");
  const bool bernoulli = model.family() == Family::bernoulli;
  if (bernoulli)
    for (double v : batch.values())
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("negative_elbo: Bernoulli family needs inputs in [0, 1]");
  const bool train = model.mode() == Mode::train;
  if (with_grad && !train) throw Error("negative_elbo: gradients require train mode");

  const Matrix h = train ? model.encoder().forward(batch, rng) : model.encoder().infer(batch);
  Matrix eps(n, k), z(n, k);
  double kl_total = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < k; ++j) {
      const double mu = h(r, j), lv = clamp_logvar(h(r, k + j));
      eps(r, j) = standard_normal(rng);
      z(r, j) = mu + std::exp(0.5 * lv) * eps(r, j);
      kl_total += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
    }
  const Matrix g = train ? model.decoder().forward(z, rng) : model.decoder().infer(z);

  constexpr double half_log_2pi = 0.91893853320467274178;
  const double inv_n = 1.0 / static_cast<double>(n);
  double recon_total = 0.0;
  Matrix dg(with_grad ? n : 0, with_grad ? g.cols() : 0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < d; ++i) {
      const double x = batch(r, i);
      if (bernoulli) {
        const double raw_p = logistic(g(r, i));
        const double p = clamp_prob(raw_p);
        recon_total += x * std::log(p) + (1.0 - x) * std::log1p(-p);
        if (with_grad && raw_p == p) dg(r, i) = (p - x) * inv_n;
      } else {
        const double mu = g(r, i), raw_lv = g(r, d + i), lv = clamp_logvar(raw_lv);
        const double prec = std::exp(-lv), diff = x - mu;
        recon_total += -half_log_2pi - 0.5 * lv - 0.5 * diff * diff * prec;
        if (with_grad) {
          dg(r, i) = -diff * prec * inv_n;
          if (!logvar_clamped(raw_lv)) dg(r, d + i) = (0.5 - 0.5 * diff * diff * prec) * inv_n;
        }
      }
    }

  LossResult out;
  out.loss = (kl_total - recon_total) * inv_n;
  if (!std::isfinite(out.loss)) throw NumericError("negative_elbo: non-finite loss");
  if (!with_grad) return out;

  const Gradients dec = model.decoder().backward(dg);
  Matrix dh(n, 2 * k);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < k; ++j) {
      const double mu = h(r, j), raw_lv = h(r, k + j), lv = clamp_logvar(raw_lv);
      const double dz = dec.input(r, j);
      dh(r, j) = dz + mu * inv_n;
      if (!logvar_clamped(raw_lv))
        dh(r, k + j) = dz * 0.5 * std::exp(0.5 * lv) * eps(r, j) + 0.5 * (std::exp(lv) - 1.0) * inv_n;
    }
  const Gradients enc = model.encoder().backward(dh);
  out.grad = enc.params;
  out.grad.insert(out.grad.end(), dec.params.begin(), dec.params.end());
  return out;
}

// Fits a VAE by early-stopped minimization of -ELBO; network initialization
// and the training schedule are both seeded from config.seed.
inline TrainResult<VaeModel> train_vae(const Matrix& data, Family family, const VaeArchitecture& arch,
                                       const TrainConfig& config) {
  if (data.rows() < 10) throw DataError("train_vae: need at least 10 rows");
  VaeModel model(data.cols(), family, arch, config.seed);
  auto result = train_early_stopping(std::move(model), data, negative_elbo, config);
  result.model.encoder().clear_cache();
  result.model.decoder().clear_cache();
  return result;
}

// Draws z ~ N(0, I) and returns the decoder output distributions (not data
// samples).
inline std::vector<OutputDist> sample_outputs(const VaeModel& model, std::size_t n, Rng& rng) {
  if (n == 0) throw ConfigError("sample_outputs: n must be >= 1");
  Matrix z(n, model.latent_dim());
  for (double& v : z.values()) v = standard_normal(rng);
  const Matrix g = model.decoder().infer(z);
  std::vector<OutputDist> out;
  out.reserve(n);
  for (std::size_t r = 0; r < n; ++r) out.push_back(detail::output_from_row(model.family(), g.row(r), model.data_dim()));
  return out;
}

}  // namespace vaecompare
