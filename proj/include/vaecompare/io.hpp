#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "error.hpp"
#include "matrix.hpp"
#include "neural.hpp"
#include "vae.hpp"

namespace vaecompare {

enum class DatasetFormat { csv, bin };

inline std::string_view to_string(DatasetFormat f) noexcept { return f == DatasetFormat::csv ? "csv" : "bin"; }

inline DatasetFormat parse_dataset_format(std::string_view s) {
  if (s == "csv") return DatasetFormat::csv;
  if (s == "bin") return DatasetFormat::bin;
  throw ConfigError("unknown dataset format '" + std::string(s) + "' (expected csv|bin)");
}

// ".bin" / ".vdat" -> bin, anything else -> csv
inline DatasetFormat format_from_path(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  return ext == ".bin" || ext == ".vdat" ? DatasetFormat::bin : DatasetFormat::csv;
}

namespace le {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), b.size());
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), b.size());
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void read_exact(std::istream& is, char* dst, std::size_t n, std::string_view what) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw DataError(std::string(what) + ": truncated input");
}

inline std::uint64_t get_uint(std::istream& is, int bytes, std::string_view what) {
  std::array<unsigned char, 8> b{};
  read_exact(is, reinterpret_cast<char*>(b.data()), static_cast<std::size_t>(bytes), what);
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

inline std::uint32_t get_u32(std::istream& is, std::string_view what) {
  return static_cast<std::uint32_t>(get_uint(is, 4, what));
}
inline std::uint64_t get_u64(std::istream& is, std::string_view what) { return get_uint(is, 8, what); }
inline double get_f64(std::istream& is, std::string_view what) { return std::bit_cast<double>(get_u64(is, what)); }

inline void expect_magic(std::istream& is, std::string_view magic, std::string_view what) {
  std::array<char, 4> m{};
  read_exact(is, m.data(), 4, what);
  if (std::string_view(m.data(), 4) != magic)
    throw DataError(std::string(what) + ": bad magic (expected \"" + std::string(magic) + "\")");
}

}  // namespace le

// ---------------------------------------------------------------------------
// Datasets

inline Matrix read_csv(std::istream& is) {
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t count = 0;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      std::string_view cell = rest.substr(0, comma);
      while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
      while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
      if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw DataError("csv line " + std::to_string(line_no) + ": non-numeric cell '" + std::string(cell) + "'");
      values.push_back(v);
      ++count;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw DataError("csv line " + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                      " columns, found " + std::to_string(count));
    }
    ++rows;
  }
  return Matrix(rows, cols, std::move(values));
}

// Shortest round-trip decimal representation.
inline void write_csv(std::ostream& os, const Matrix& m) {
  std::array<char, 64> buf{};
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) os.put(',');
      const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), m(r, c));
      os.write(buf.data(), res.ptr - buf.data());
    }
    os.put('\n');
  }
}

inline constexpr std::uint32_t kDatasetVersion = 1;

// "VDAT", u32 version, u64 rows, u64 cols, rows*cols f64; all little-endian.
inline void write_bin(std::ostream& os, const Matrix& m) {
  os.write("VDAT", 4);
  le::put_u32(os, kDatasetVersion);
  le::put_u64(os, m.rows());
  le::put_u64(os, m.cols());
  for (double v : m.values()) le::put_f64(os, v);
}

inline Matrix read_bin(std::istream& is) {
  le::expect_magic(is, "VDAT", "dataset");
  const auto version = le::get_u32(is, "dataset");
  if (version != kDatasetVersion) throw DataError("dataset: unsupported version " + std::to_string(version));
  const auto rows = le::get_u64(is, "dataset"), cols = le::get_u64(is, "dataset");
  if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols) throw DataError("dataset: implausible shape");
  std::vector<double> values(rows * cols);
  for (double& v : values) v = le::get_f64(is, "dataset");
  return Matrix(rows, cols, std::move(values));
}

inline void check_bernoulli_range(const Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      if (!(m(r, c) >= 0.0 && m(r, c) <= 1.0))
        throw DataError("row " + std::to_string(r + 1) + ", column " + std::to_string(c + 1) +
                        ": value outside [0, 1] for bernoulli family");
}

inline Matrix load_dataset(const std::filesystem::path& path, std::optional<DatasetFormat> format = std::nullopt,
                           std::optional<Family> family = std::nullopt) {
  const DatasetFormat fmt = format.value_or(format_from_path(path));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  Matrix m;
  try {
    m = fmt == DatasetFormat::csv ? read_csv(in) : read_bin(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (m.empty()) throw DataError(path.string() + ": empty dataset");
  if (!m.all_finite()) throw DataError(path.string() + ": non-finite values");
  if (family == Family::bernoulli) check_bernoulli_range(m);
  return m;
}

inline void save_dataset(const std::filesystem::path& path, const Matrix& m,
                         std::optional<DatasetFormat> format = std::nullopt) {
  const DatasetFormat fmt = format.value_or(format_from_path(path));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write dataset '" + path.string() + "'");
  fmt == DatasetFormat::csv ? write_csv(out, m) : write_bin(out, m);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Model checkpoints
//
// "VAEC", u32 version, u32 metadata length, UTF-8 JSON metadata, then every
// parameter as little-endian f64: encoder layers then decoder layers, each as
// weights (row-major), bias, and gamma, beta, running mean, running variance
// for batch-norm layers.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json topology_json(const DenseNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    nlohmann::json j{{"in", l.in()},
                     {"out", l.out()},
                     {"activation", l.activation == Activation::elu ? "elu" : "linear"},
                     {"batchnorm", l.batchnorm.has_value()},
                     {"dropout", l.dropout}};
    if (l.batchnorm) {
      j["bn_momentum"] = l.batchnorm->momentum;
      j["bn_epsilon"] = l.batchnorm->epsilon;
    }
    layers.push_back(std::move(j));
  }
  return {{"input", net.input_width()}, {"dropout_rate", net.dropout_rate()}, {"layers", std::move(layers)}};
}

inline void write_net(std::ostream& os, const DenseNet& net) {
  auto put = [&os](std::span<const double> v) {
    for (double x : v) le::put_f64(os, x);
  };
  for (const auto& l : net.layers()) {
    put(l.weights.values());
    put(l.bias);
    if (l.batchnorm) {
      put(l.batchnorm->gamma);
      put(l.batchnorm->beta);
      put(l.batchnorm->running_mean);
      put(l.batchnorm->running_var);
    }
  }
}

inline DenseNet read_net(std::istream& is, const nlohmann::json& topo) {
  auto take = [&is](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = le::get_f64(is, "checkpoint");
    return v;
  };
  std::vector<DenseLayer> layers;
  for (const auto& j : topo.at("layers")) {
    DenseLayer l;
    const std::size_t in = j.at("in"), out = j.at("out");
    const std::string act = j.at("activation");
    if (act != "elu" && act != "linear") throw DataError("checkpoint: unknown activation '" + act + "'");
    l.activation = act == "elu" ? Activation::elu : Activation::linear;
    l.dropout = j.at("dropout");
    l.weights = Matrix(in, out, take(in * out));
    l.bias = take(out);
    if (j.at("batchnorm").get<bool>()) {
      BatchNorm bn;
      bn.momentum = j.at("bn_momentum");
      bn.epsilon = j.at("bn_epsilon");
      bn.gamma = take(out);
      bn.beta = take(out);
      bn.running_mean = take(out);
      bn.running_var = take(out);
      l.batchnorm = std::move(bn);
    }
    layers.push_back(std::move(l));
  }
  return DenseNet(topo.at("input").get<std::size_t>(), std::move(layers), topo.at("dropout_rate").get<double>());
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const VaeModel& model) {
  const auto& a = model.architecture();
  const nlohmann::json meta{{"data_dim", model.data_dim()},
                            {"latent_dim", model.latent_dim()},
                            {"family", to_string(model.family())},
                            {"seed", model.seed()},
                            {"architecture",
                             {{"hidden_layers", a.hidden_layers},
                              {"hidden_width", a.hidden_width},
                              {"batchnorm", a.batchnorm},
                              {"dropout_rate", a.dropout_rate}}},
                            {"encoder", detail::topology_json(model.encoder())},
                            {"decoder", detail::topology_json(model.decoder())}};
  const std::string text = meta.dump();
  os.write("VAEC", 4);
  le::put_u32(os, kCheckpointVersion);
  le::put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::write_net(os, model.encoder());
  detail::write_net(os, model.decoder());
}

inline VaeModel read_checkpoint(std::istream& is) {
  le::expect_magic(is, "VAEC", "checkpoint");
  const auto version = le::get_u32(is, "checkpoint");
  if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto len = le::get_u32(is, "checkpoint");
  std::string text(len, '\0');
  le::read_exact(is, text.data(), len, "checkpoint");
  try {
    const auto meta = nlohmann::json::parse(text);
    VaeArchitecture arch;
    const auto& ja = meta.at("architecture");
    arch.latent_dim = meta.at("latent_dim");
    arch.hidden_layers = ja.at("hidden_layers");
    arch.hidden_width = ja.at("hidden_width");
    arch.batchnorm = ja.at("batchnorm");
    arch.dropout_rate = ja.at("dropout_rate");
    DenseNet enc = detail::read_net(is, meta.at("encoder"));
    DenseNet dec = detail::read_net(is, meta.at("decoder"));
    VaeModel model(meta.at("data_dim").get<std::size_t>(), parse_family(meta.at("family").get<std::string>()), arch,
                   meta.at("seed").get<std::uint64_t>(), std::move(enc), std::move(dec));
    model.set_mode(Mode::eval);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad metadata: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const VaeModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  write_checkpoint(out, model);
}

inline VaeModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace vaecompare
