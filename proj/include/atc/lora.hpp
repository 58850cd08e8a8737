// Copyright 2026 The atc Authors
// Low-rank adapter arithmetic: adapted forward pass, weight merging,
// parameter counting and a finite-difference gradient check
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "atc/error.hpp"
#include "atc/featio.hpp"
#include "atc/matrix.hpp"

namespace atc::lora {

/// A frozen d_out x d_in projection weight.
struct BaseLinear {
  Matrix<double> weight;

  explicit BaseLinear(Matrix<double> w) : weight(std::move(w)) {
    if (weight.rows() == 0 || weight.cols() == 0 || !weight.all_finite()) {
      throw invalid_argument("base weight must be non-empty and finite");
    }
  }

  std::size_t d_out() const { return weight.rows(); }
  std::size_t d_in() const { return weight.cols(); }
};

/// Low-rank pair scaled by alpha / rank. `down` projects d_in -> r and `up`
/// projects r -> d_out, so the adapted weight is W + (alpha/r) * up * down.
class LoraAdapter {
 public:
  LoraAdapter(Matrix<double> down, Matrix<double> up, double alpha)
      : down_(std::move(down)), up_(std::move(up)), alpha_(alpha) {
    if (down_.rows() == 0) throw invalid_argument("adapter rank must be >= 1");
    if (up_.cols() != down_.rows()) {
      throw invalid_argument("adapter rank mismatch: up has " + std::to_string(up_.cols()) +
                             " columns but down has " + std::to_string(down_.rows()) + " rows");
    }
    if (!down_.all_finite() || !up_.all_finite() || !std::isfinite(alpha_)) {
      throw invalid_argument("adapter weights and alpha must be finite");
    }
  }

  const Matrix<double>& down() const { return down_; }
  const Matrix<double>& up() const { return up_; }
  std::size_t rank() const { return down_.rows(); }
  std::size_t d_in() const { return down_.cols(); }
  std::size_t d_out() const { return up_.rows(); }
  double alpha() const { return alpha_; }
  double scaling() const { return alpha_ / static_cast<double>(rank()); }

  friend bool operator==(const LoraAdapter&, const LoraAdapter&) = default;

 private:
  Matrix<double> down_;  // r x d_in
  Matrix<double> up_;    // d_out x r
  double alpha_;
};

namespace detail {

inline void check_shapes(const BaseLinear& base, const LoraAdapter& ad) {
  if (ad.d_in() != base.d_in() || ad.d_out() != base.d_out()) {
    throw invalid_argument("adapter shape " + std::to_string(ad.d_out()) + "x" +
                           std::to_string(ad.d_in()) + " does not match base " +
                           std::to_string(base.d_out()) + "x" + std::to_string(base.d_in()));
  }
}

inline std::vector<double> mat_vec(const Matrix<double>& m, std::span<const double> x) {
  if (x.size() != m.cols()) {
    throw invalid_argument("vector length " + std::to_string(x.size()) +
                           " does not match matrix with " + std::to_string(m.cols()) +
                           " columns");
  }
  std::vector<double> y(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    std::span<const double> row = m.row(r);
    for (std::size_t c = 0; c < x.size(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

}  // namespace detail

/// The adapter's contribution alone: (alpha/r) * up * (down * x).
/// The scale is applied as one final multiply per element, so doubling alpha
/// doubles every element exactly.
inline std::vector<double> adapter_delta(const LoraAdapter& ad, std::span<const double> x) {
  std::vector<double> hidden = detail::mat_vec(ad.down(), x);
  std::vector<double> delta = detail::mat_vec(ad.up(), hidden);
  const double s = ad.scaling();
  for (double& v : delta) v *= s;
  return delta;
}

/// y = W*x + (alpha/r) * up * (down * x). With a zero up matrix this equals
/// the base forward exactly.
inline std::vector<double> forward(const BaseLinear& base, const LoraAdapter& ad,
                                   std::span<const double> x) {
  detail::check_shapes(base, ad);
  std::vector<double> y = detail::mat_vec(base.weight, x);
  const std::vector<double> delta = adapter_delta(ad, x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += delta[i];
  return y;
}

/// Folds the adapter into the frozen weight: W' = W + (alpha/r) * up * down.
inline BaseLinear merge(const BaseLinear& base, const LoraAdapter& ad) {
  detail::check_shapes(base, ad);
  Matrix<double> merged = base.weight;
  const double s = ad.scaling();
  for (std::size_t i = 0; i < ad.d_out(); ++i) {
    for (std::size_t j = 0; j < ad.d_in(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < ad.rank(); ++k) {
        acc += ad.up()(i, k) * ad.down()(k, j);
      }
      merged(i, j) += s * acc;
    }
  }
  return BaseLinear(std::move(merged));
}

struct LayerSpec {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
};

/// Trainable parameter count for adapters of the given rank over a set of
/// projection layers: sum of r * (d_in + d_out).
inline std::size_t param_count(std::span<const LayerSpec> layers, std::size_t rank) {
  if (rank == 0) throw invalid_argument("rank must be >= 1");
  std::size_t total = 0;
  for (const LayerSpec& l : layers) total += rank * (l.d_in + l.d_out);
  return total;
}

/// Checks the analytic gradients of loss = upstream . y against central finite
/// differences and returns the largest relative error over all adapter
/// entries. For this bilinear loss:
///   d loss / d up   = s * upstream (x) (down*x)
///   d loss / d down = s * (up^T upstream) (x) x
inline double grad_check(const BaseLinear& base, const LoraAdapter& ad,
                         std::span<const double> x, std::span<const double> upstream,
                         double step = 1e-4) {
  detail::check_shapes(base, ad);
  if (upstream.size() != base.d_out()) {
    throw invalid_argument("upstream length does not match output dimension");
  }

  const double s = ad.scaling();
  const std::vector<double> hidden = detail::mat_vec(ad.down(), x);  // down * x

  // up^T * upstream
  std::vector<double> up_t_upstream(ad.rank(), 0.0);
  for (std::size_t k = 0; k < ad.rank(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ad.d_out(); ++i) acc += ad.up()(i, k) * upstream[i];
    up_t_upstream[k] = acc;
  }

  auto loss_at = [&](const Matrix<double>& down, const Matrix<double>& up) {
    LoraAdapter probe(down, up, ad.alpha());
    const std::vector<double> y = forward(base, probe, x);
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) loss += upstream[i] * y[i];
    return loss;
  };

  auto rel_error = [](double analytic, double numeric) {
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
  };

  double max_err = 0.0;
  Matrix<double> down = ad.down();
  Matrix<double> up = ad.up();

  for (std::size_t i = 0; i < ad.d_out(); ++i) {
    for (std::size_t k = 0; k < ad.rank(); ++k) {
      const double analytic = s * upstream[i] * hidden[k];
      const double saved = up(i, k);
      up(i, k) = saved + step;
      const double plus = loss_at(down, up);
      up(i, k) = saved - step;
      const double minus = loss_at(down, up);
      up(i, k) = saved;
      max_err = std::max(max_err, rel_error(analytic, (plus - minus) / (2.0 * step)));
    }
  }
  for (std::size_t k = 0; k < ad.rank(); ++k) {
    for (std::size_t j = 0; j < ad.d_in(); ++j) {
      const double analytic = s * up_t_upstream[k] * x[j];
      const double saved = down(k, j);
      down(k, j) = saved + step;
      const double plus = loss_at(down, up);
      down(k, j) = saved - step;
      const double minus = loss_at(down, up);
      down(k, j) = saved;
      max_err = std::max(max_err, rel_error(analytic, (plus - minus) / (2.0 * step)));
    }
  }
  return max_err;
}

/// Fresh adapter in the standard zero-init: up = 0 (so the adapted model
/// starts identical to the base) and down ~ U(-1/sqrt(d_in), 1/sqrt(d_in)).
inline LoraAdapter make_adapter(std::size_t d_in, std::size_t d_out, std::size_t rank,
                                double alpha, std::uint64_t seed = 0) {
  if (rank == 0) throw invalid_argument("rank must be >= 1");
  if (d_in == 0 || d_out == 0) throw invalid_argument("adapter dimensions must be >= 1");
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<double> down(rank, d_in);
  for (double& v : down.values()) v = dist(rng);
  Matrix<double> up(d_out, rank);
  return LoraAdapter(std::move(down), std::move(up), alpha);
}

// ----------------------------------------------------------------------------
// Adapter container, same header style as ATCF:
//   magic "ATCA", u16 version = 1, u16 reserved,
//   u32 rank, u32 d_in, u32 d_out, f64 alpha,
//   then down (r x d_in) and up (d_out x r), row-major f64.
// ----------------------------------------------------------------------------

inline constexpr char kAdapterMagic[4] = {'A', 'T', 'C', 'A'};
inline constexpr std::uint16_t kAdapterVersion = 1;

inline void write_adapter(const LoraAdapter& ad, std::ostream& out) {
  atc::detail::put_bytes(out, reinterpret_cast<const unsigned char*>(kAdapterMagic), 4);
  atc::detail::put_u16le(out, kAdapterVersion);
  atc::detail::put_u16le(out, 0);
  atc::detail::put_u32le(out, static_cast<std::uint32_t>(ad.rank()));
  atc::detail::put_u32le(out, static_cast<std::uint32_t>(ad.d_in()));
  atc::detail::put_u32le(out, static_cast<std::uint32_t>(ad.d_out()));
  atc::detail::put_f64le(out, ad.alpha());
  for (double v : ad.down().values()) atc::detail::put_f64le(out, v);
  for (double v : ad.up().values()) atc::detail::put_f64le(out, v);
  if (!out) throw io_error("failed writing adapter stream");
}

inline LoraAdapter read_adapter(std::istream& in) {
  unsigned char magic[4];
  if (!atc::detail::get_bytes(in, magic, 4)) {
    throw format_error("truncated input reading adapter magic");
  }
  if (std::memcmp(magic, kAdapterMagic, 4) != 0) {
    throw format_error("bad magic: not an adapter stream");
  }
  const std::uint16_t version = atc::detail::get_u16le(in, "adapter version");
  if (version != kAdapterVersion) {
    throw format_error("unsupported adapter version " + std::to_string(version));
  }
  atc::detail::get_u16le(in, "adapter reserved field");
  const std::uint32_t rank = atc::detail::get_u32le(in, "adapter rank");
  const std::uint32_t d_in = atc::detail::get_u32le(in, "adapter d_in");
  const std::uint32_t d_out = atc::detail::get_u32le(in, "adapter d_out");
  if (rank == 0 || d_in == 0 || d_out == 0) {
    throw format_error("adapter header declares an empty shape");
  }
  const double alpha = atc::detail::get_f64le(in, "adapter alpha");
  Matrix<double> down(rank, d_in);
  for (double& v : down.values()) v = atc::detail::get_f64le(in, "adapter down payload");
  Matrix<double> up(d_out, rank);
  for (double& v : up.values()) v = atc::detail::get_f64le(in, "adapter up payload");
  return LoraAdapter(std::move(down), std::move(up), alpha);
}

inline void write_adapter_file(const LoraAdapter& ad, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  write_adapter(ad, out);
}

inline LoraAdapter read_adapter_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string() + " for reading");
  return read_adapter(in);
}

}  // namespace atc::lora
