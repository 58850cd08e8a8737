// Copyright 2026 The atc Authors
// Token compression: unsupervised segmentation, uniform pooling/sampling,
// global pooling, with per-utterance token accounting
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atc/error.hpp"
#include "atc/featio.hpp"

namespace atc {

/// Segment breaks. An entry t means "cut between frame t and frame t+1",
/// so valid entries lie in [0, T-2] and imply cut_after.size() + 1 segments.
struct Boundaries {
  std::vector<std::size_t> cut_after;

  std::size_t segments() const { return cut_after.size() + 1; }

  void validate(std::size_t total_frames) const {
    std::size_t prev = 0;
    bool first = true;
    for (std::size_t t : cut_after) {
      if (!first && t <= prev) {
        throw invalid_argument("boundaries must be strictly increasing");
      }
      if (total_frames < 2 || t > total_frames - 2) {
        throw invalid_argument("boundary index " + std::to_string(t) +
                               " out of range for " + std::to_string(total_frames) + " frames");
      }
      prev = t;
      first = false;
    }
  }

  friend bool operator==(const Boundaries&, const Boundaries&) = default;
};

/// A compressed sequence plus the token accounting behind it. output_rate is
/// the utterance-average rate, input frame_rate * output_tokens / input_tokens.
struct CompressionOutcome {
  FeatureSequence compressed;
  std::optional<Boundaries> boundaries;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  double compression_factor = 1.0;  // input_tokens / output_tokens
  double output_rate = 0.0;         // tokens per second of source audio
};

namespace detail {

inline CompressionOutcome make_outcome(const FeatureSequence& input, FeatureSequence compressed,
                                       std::optional<Boundaries> boundaries = std::nullopt) {
  CompressionOutcome out{std::move(compressed), std::move(boundaries), input.frames(),
                         0, 0.0, 0.0};
  out.output_tokens = out.compressed.frames();
  out.compression_factor =
      static_cast<double>(out.input_tokens) / static_cast<double>(out.output_tokens);
  out.output_rate = static_cast<double>(input.frame_rate()) *
                    static_cast<double>(out.output_tokens) /
                    static_cast<double>(out.input_tokens);
  return out;
}

/// Average frame rate after mapping input_frames to output_frames, cast to
/// the f32 metadata carried by FeatureSequence.
inline float scaled_rate(const FeatureSequence& input, std::size_t output_frames) {
  return static_cast<float>(static_cast<double>(input.frame_rate()) *
                            static_cast<double>(output_frames) /
                            static_cast<double>(input.frames()));
}

}  // namespace detail

/// d_t = 1 - cos(z_t, z_{t+1}) for t = 0..T-2. Each d_t lies in [0, 2].
/// Requires T >= 2 and no zero-norm frame (cosine undefined).
inline std::vector<double> adjacent_dissimilarity(const FeatureSequence& seq) {
  const std::size_t t_count = seq.frames();
  if (t_count < 2) {
    throw invalid_argument("adjacent dissimilarity needs at least 2 frames");
  }
  std::vector<double> norms(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    double sq = 0.0;
    for (float v : seq.frame(t)) sq += static_cast<double>(v) * v;
    norms[t] = std::sqrt(sq);
    if (norms[t] == 0.0) {
      throw invalid_argument("frame " + std::to_string(t) +
                             " has zero norm; cosine dissimilarity is undefined");
    }
  }
  std::vector<double> d(t_count - 1);
  for (std::size_t t = 0; t + 1 < t_count; ++t) {
    std::span<const float> a = seq.frame(t);
    std::span<const float> b = seq.frame(t + 1);
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    double cosine = dot / (norms[t] * norms[t + 1]);
    cosine = std::clamp(cosine, -1.0, 1.0);
    d[t] = 1.0 - cosine;
  }
  return d;
}

/// Strict peak rule: index t (1 <= t <= |d|-2) is a peak iff
/// d[t] > d[t-1] and d[t] > d[t+1]. Endpoints are never peaks and plateaus
/// produce none. A peak at dissimilarity index t cuts between frames t, t+1.
inline Boundaries detect_peaks(std::span<const double> d) {
  if (d.empty()) {
    throw invalid_argument("peak detection needs at least one dissimilarity value");
  }
  Boundaries b;
  for (std::size_t t = 1; t + 1 < d.size(); ++t) {
    if (d[t] > d[t - 1] && d[t] > d[t + 1]) {
      b.cut_after.push_back(t);
    }
  }
  return b;
}

/// Replaces each segment with the arithmetic mean of its frames. The output
/// carries the average frame rate, input rate * output_T / input_T.
inline FeatureSequence merge_segments(const FeatureSequence& seq, const Boundaries& b) {
  b.validate(seq.frames());
  const std::size_t dim = seq.dim();
  const std::size_t out_frames = b.segments();
  Matrix<float> merged(out_frames, dim);
  std::vector<double> acc(dim);
  std::size_t begin = 0;
  for (std::size_t s = 0; s < out_frames; ++s) {
    const std::size_t end = (s < b.cut_after.size()) ? b.cut_after[s] + 1 : seq.frames();
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = begin; t < end; ++t) {
      std::span<const float> f = seq.frame(t);
      for (std::size_t i = 0; i < dim; ++i) acc[i] += f[i];
    }
    const double count = static_cast<double>(end - begin);
    for (std::size_t i = 0; i < dim; ++i) {
      merged(s, i) = static_cast<float>(acc[i] / count);
    }
    begin = end;
  }
  return FeatureSequence(std::move(merged), detail::scaled_rate(seq, out_frames),
                         seq.source_id());
}

/// Parameter-free segmentation: cut at strict peaks of adjacent-frame cosine
/// dissimilarity, then mean-merge each segment.
inline CompressionOutcome segment_unsupervised(const FeatureSequence& seq) {
  const std::vector<double> d = adjacent_dissimilarity(seq);
  Boundaries b = detect_peaks(d);
  FeatureSequence merged = merge_segments(seq, b);
  return detail::make_outcome(seq, std::move(merged), std::move(b));
}

/// Average pooling with kernel K and stride K. A final window shorter than K
/// is averaged over the remaining frames rather than dropped, so the output
/// has ceil(T/K) frames.
inline CompressionOutcome uniform_avg_pool(const FeatureSequence& seq, std::size_t k) {
  if (k == 0) throw invalid_argument("pooling kernel must be >= 1");
  const std::size_t t_count = seq.frames();
  const std::size_t dim = seq.dim();
  const std::size_t out_frames = (t_count + k - 1) / k;
  Matrix<float> pooled(out_frames, dim);
  std::vector<double> acc(dim);
  for (std::size_t j = 0; j < out_frames; ++j) {
    const std::size_t begin = j * k;
    const std::size_t end = std::min(begin + k, t_count);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = begin; t < end; ++t) {
      std::span<const float> f = seq.frame(t);
      for (std::size_t i = 0; i < dim; ++i) acc[i] += f[i];
    }
    const double count = static_cast<double>(end - begin);
    for (std::size_t i = 0; i < dim; ++i) {
      pooled(j, i) = static_cast<float>(acc[i] / count);
    }
  }
  FeatureSequence out(std::move(pooled), detail::scaled_rate(seq, out_frames), seq.source_id());
  return detail::make_outcome(seq, std::move(out));
}

/// Keeps input frames 0, K, 2K, ... (offset 0, deterministic), giving
/// ceil(T/K) output frames.
inline CompressionOutcome uniform_sample(const FeatureSequence& seq, std::size_t k) {
  if (k == 0) throw invalid_argument("sampling stride must be >= 1");
  const std::size_t t_count = seq.frames();
  const std::size_t dim = seq.dim();
  const std::size_t out_frames = (t_count + k - 1) / k;
  Matrix<float> sampled(out_frames, dim);
  for (std::size_t j = 0; j < out_frames; ++j) {
    std::span<const float> f = seq.frame(j * k);
    std::copy(f.begin(), f.end(), sampled.row(j).begin());
  }
  FeatureSequence out(std::move(sampled), detail::scaled_rate(seq, out_frames), seq.source_id());
  return detail::make_outcome(seq, std::move(out));
}

enum class GlobalPoolMode { mean, max };

inline GlobalPoolMode global_pool_mode_from_string(const std::string& name) {
  if (name == "mean") return GlobalPoolMode::mean;
  if (name == "max") return GlobalPoolMode::max;
  throw invalid_argument("unknown global pool mode '" + name + "' (expected mean or max)");
}

/// Collapses the whole sequence to a single per-dimension mean or max frame.
inline CompressionOutcome global_pool(const FeatureSequence& seq, GlobalPoolMode mode) {
  const std::size_t t_count = seq.frames();
  const std::size_t dim = seq.dim();
  Matrix<float> summary(1, dim);
  if (mode == GlobalPoolMode::mean) {
    std::vector<double> acc(dim, 0.0);
    for (std::size_t t = 0; t < t_count; ++t) {
      std::span<const float> f = seq.frame(t);
      for (std::size_t i = 0; i < dim; ++i) acc[i] += f[i];
    }
    for (std::size_t i = 0; i < dim; ++i) {
      summary(0, i) = static_cast<float>(acc[i] / static_cast<double>(t_count));
    }
  } else {
    std::span<const float> first = seq.frame(0);
    std::copy(first.begin(), first.end(), summary.row(0).begin());
    for (std::size_t t = 1; t < t_count; ++t) {
      std::span<const float> f = seq.frame(t);
      for (std::size_t i = 0; i < dim; ++i) summary(0, i) = std::max(summary(0, i), f[i]);
    }
  }
  FeatureSequence out(std::move(summary), detail::scaled_rate(seq, 1), seq.source_id());
  return detail::make_outcome(seq, std::move(out));
}

}  // namespace atc
