// Copyright 2026 The atc Authors
// Desk-scale mel-spectrogram front end: 25ms/10ms log-mel frames at 16 kHz
// plus the encoder's rate-2 average pooling
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "atc/compress.hpp"
#include "atc/error.hpp"
#include "atc/featio.hpp"
#include "atc/matrix.hpp"

namespace atc::mel {

inline constexpr std::uint32_t kRequiredSampleRate = 16000;

struct MelConfig {
  std::uint32_t sample_rate = kRequiredSampleRate;
  double window_seconds = 0.025;
  double hop_seconds = 0.010;
  std::size_t n_mels = 128;
  std::size_t pool_rate = 2;
  double log_floor = 1e-10;

  std::size_t window_samples() const {
    return static_cast<std::size_t>(std::lround(window_seconds * sample_rate));
  }
  std::size_t hop_samples() const {
    return static_cast<std::size_t>(std::lround(hop_seconds * sample_rate));
  }

  void validate() const {
    if (window_seconds <= 0.0 || hop_seconds <= 0.0 || window_seconds <= hop_seconds) {
      throw invalid_argument("mel window must be longer than the hop and both positive");
    }
    if (n_mels == 0) throw invalid_argument("n_mels must be >= 1");
    if (pool_rate == 0) throw invalid_argument("pool_rate must be >= 1");
    if (log_floor <= 0.0) throw invalid_argument("log_floor must be > 0");
  }
};

namespace detail {

// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// In-place iterative radix-2 FFT; data.size() must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& data) {
  const std::size_t n = data.size();
  if (n < 2) return;
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = data[i + k];
        const std::complex<double> v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

/// Integral of the rising ramp (f-left)/(peak-left) over [lo,hi] clipped to
/// [left,peak].
inline double ramp_up_integral(double left, double peak, double lo, double hi) {
  const double a = std::max(left, lo);
  const double b = std::min(peak, hi);
  if (b <= a || peak <= left) return 0.0;
  const double fa = a - left;
  const double fb = b - left;
  return (fb * fb - fa * fa) / (2.0 * (peak - left));
}

/// Integral of the falling ramp (right-f)/(right-peak) over [lo,hi] clipped
/// to [peak,right].
inline double ramp_down_integral(double peak, double right, double lo, double hi) {
  const double a = std::max(peak, lo);
  const double b = std::min(right, hi);
  if (b <= a || right <= peak) return 0.0;
  const double fa = right - a;
  const double fb = right - b;
  return (fa * fa - fb * fb) / (2.0 * (right - peak));
}

}  // namespace detail

/// Triangular mel filterbank on the HTK scale covering 0..sample_rate/2.
/// Each weight is the triangle averaged over the full width of its FFT bin
/// (not point-sampled at the bin centre), so every channel keeps a positive
/// response even where channels are narrower than one bin.
struct MelFilterbank {
  Matrix<double> weights;       // n_mels x (n_fft/2 + 1)
  std::vector<double> edge_hz;  // n_mels + 2 triangle edges

  std::size_t channels() const { return weights.rows(); }
  std::size_t bins() const { return weights.cols(); }

  /// Triangle footprint of one channel: [edge_hz[m], edge_hz[m+2]].
  std::pair<double, double> channel_band_hz(std::size_t m) const {
    return {edge_hz[m], edge_hz[m + 2]};
  }
};

inline MelFilterbank mel_filterbank(std::size_t n_fft, std::size_t n_mels,
                                    std::uint32_t sample_rate) {
  if (n_fft < 2 || !std::has_single_bit(n_fft)) {
    throw invalid_argument("FFT size must be a power of two >= 2");
  }
  if (n_mels == 0) throw invalid_argument("n_mels must be >= 1");

  const double nyquist = sample_rate / 2.0;
  const double mel_max = detail::hz_to_mel(nyquist);
  MelFilterbank fb;
  fb.edge_hz.resize(n_mels + 2);
  for (std::size_t j = 0; j < n_mels + 2; ++j) {
    fb.edge_hz[j] =
        detail::mel_to_hz(mel_max * static_cast<double>(j) / static_cast<double>(n_mels + 1));
  }

  const std::size_t n_bins = n_fft / 2 + 1;
  const double bin_width = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
  fb.weights = Matrix<double>(n_mels, n_bins);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = fb.edge_hz[m];
    const double peak = fb.edge_hz[m + 1];
    const double right = fb.edge_hz[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double centre = static_cast<double>(k) * bin_width;
      const double lo = std::max(0.0, centre - bin_width / 2.0);
      const double hi = std::min(nyquist, centre + bin_width / 2.0);
      const double area = detail::ramp_up_integral(left, peak, lo, hi) +
                          detail::ramp_down_integral(peak, right, lo, hi);
      fb.weights(m, k) = area / bin_width;
    }
  }
  return fb;
}

/// Log-mel frames: T = floor((N - win)/hop) + 1 frames of n_mels values
/// log(mel_energy + log_floor), at frame_rate = sample_rate / hop_samples.
/// Frames are Hann-windowed and zero-padded to the next power of two.
inline FeatureSequence mel_spectrogram(std::span<const float> audio, const MelConfig& cfg,
                                       std::string source_id = {}) {
  cfg.validate();
  if (cfg.sample_rate != kRequiredSampleRate) {
    throw invalid_argument("expected " + std::to_string(kRequiredSampleRate) +
                           " Hz input, got " + std::to_string(cfg.sample_rate) +
                           " Hz (resampling is an upstream concern)");
  }
  const std::size_t win = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  if (audio.size() < win) {
    throw invalid_argument("audio shorter than one analysis window (" +
                           std::to_string(audio.size()) + " < " + std::to_string(win) +
                           " samples)");
  }

  const std::size_t frames = (audio.size() - win) / hop + 1;
  const std::size_t n_fft = std::bit_ceil(win);
  const std::size_t n_bins = n_fft / 2 + 1;
  const MelFilterbank fb = mel_filterbank(n_fft, cfg.n_mels, cfg.sample_rate);

  std::vector<double> hann(win);
  for (std::size_t n = 0; n < win; ++n) {
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                   static_cast<double>(win));
  }

  Matrix<float> out(frames, cfg.n_mels);
  std::vector<std::complex<double>> buf(n_fft);
  std::vector<double> power(n_bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t n = 0; n < win; ++n) {
      buf[n] = {static_cast<double>(audio[start + n]) * hann[n], 0.0};
    }
    std::fill(buf.begin() + static_cast<std::ptrdiff_t>(win), buf.end(),
              std::complex<double>{0.0, 0.0});
    detail::fft_radix2(buf);
    for (std::size_t k = 0; k < n_bins; ++k) power[k] = std::norm(buf[k]);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double energy = 0.0;
      std::span<const double> row = fb.weights.row(m);
      for (std::size_t k = 0; k < n_bins; ++k) energy += row[k] * power[k];
      out(t, m) = static_cast<float>(std::log(energy + cfg.log_floor));
    }
  }

  const float frame_rate =
      static_cast<float>(cfg.sample_rate) / static_cast<float>(static_cast<double>(hop));
  return FeatureSequence(std::move(out), frame_rate, std::move(source_id));
}

/// The encoder's output pooling: average pooling with kernel = stride = rate.
inline FeatureSequence encoder_pool(const FeatureSequence& seq, std::size_t rate) {
  if (rate == 0) throw invalid_argument("pool rate must be >= 1");
  return uniform_avg_pool(seq, rate).compressed;
}

// ----------------------------------------------------------------------------
// 16-bit PCM WAV input
// ----------------------------------------------------------------------------

struct WavAudio {
  std::vector<float> samples;  // scaled to [-1, 1)
  std::uint32_t sample_rate = 0;
};

/// Reads a mono 16-bit PCM WAV file. Anything else (stereo, other encodings,
/// other sample widths) is rejected; this loader feeds the mel front end, it
/// is not a general audio reader.
inline WavAudio load_wav_pcm16(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string() + " for reading");

  unsigned char riff[4], wave[4];
  if (!atc::detail::get_bytes(in, riff, 4)) throw format_error("truncated WAV header");
  atc::detail::get_u32le(in, "RIFF size");
  if (!atc::detail::get_bytes(in, wave, 4)) throw format_error("truncated WAV header");
  if (std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0) {
    throw format_error(path.string() + " is not a RIFF/WAVE file");
  }

  std::uint16_t audio_format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::vector<float> samples;
  bool have_data = false;

  while (in.peek() != std::char_traits<char>::eof()) {
    unsigned char chunk_id[4];
    if (!atc::detail::get_bytes(in, chunk_id, 4)) break;
    const std::uint32_t chunk_size = atc::detail::get_u32le(in, "WAV chunk size");
    if (std::memcmp(chunk_id, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw format_error("WAV fmt chunk too small");
      audio_format = atc::detail::get_u16le(in, "WAV audio format");
      channels = atc::detail::get_u16le(in, "WAV channel count");
      sample_rate = atc::detail::get_u32le(in, "WAV sample rate");
      atc::detail::get_u32le(in, "WAV byte rate");
      atc::detail::get_u16le(in, "WAV block align");
      bits = atc::detail::get_u16le(in, "WAV bits per sample");
      in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(chunk_id, "data", 4) == 0) {
      if (!have_fmt) throw format_error("WAV data chunk before fmt chunk");
      if (audio_format != 1) throw format_error("only PCM WAV is supported");
      if (bits != 16) throw format_error("only 16-bit PCM WAV is supported");
      if (channels != 1) throw format_error("only mono WAV is supported");
      const std::size_t count = chunk_size / 2;
      samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::uint16_t raw = atc::detail::get_u16le(in, "WAV sample data");
        samples[i] = static_cast<float>(static_cast<std::int16_t>(raw)) / 32768.0f;
      }
      if (chunk_size % 2) in.seekg(1, std::ios::cur);
      have_data = true;
    } else {
      in.seekg(chunk_size + (chunk_size % 2), std::ios::cur);
    }
    if (!in) break;
  }

  if (!have_fmt || !have_data) {
    throw format_error(path.string() + " is missing its fmt or data chunk");
  }
  return WavAudio{std::move(samples), sample_rate};
}

}  // namespace atc::mel
