// Copyright 2026 The atc Authors
// Quadratic attention-cost model over audio + text token counts
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <limits>
#include <string>

#include "atc/error.hpp"

namespace atc {

/// Decoder shape for the attention term. Only the sequence-quadratic part is
/// modeled; feed-forward cost is linear in S and deliberately excluded.
struct LlmShape {
  std::size_t layers = 1;
  std::size_t d_model = 1;
  std::size_t audio_tokens = 0;
  std::size_t text_tokens = 0;
};

/// FLOPs of the quadratic attention term: layers * 4 * S^2 * d_model with
/// S = audio_tokens + text_tokens. The two S x d by d x S / S x S by S x d
/// products cost 2 FLOPs per multiply-accumulate each.
inline double attention_cost(const LlmShape& shape) {
  if (shape.layers == 0 || shape.d_model == 0) {
    throw invalid_argument("attention cost needs layers >= 1 and d_model >= 1");
  }
  const double s = static_cast<double>(shape.audio_tokens + shape.text_tokens);
  return static_cast<double>(shape.layers) * 4.0 * s * s * static_cast<double>(shape.d_model);
}

/// Attention-cost ratio between two audio token counts with the text tokens
/// held fixed. Equal counts give exactly 1. Requires after <= before.
inline double attention_savings(std::size_t before_audio_tokens,
                                std::size_t after_audio_tokens, LlmShape shape) {
  if (after_audio_tokens > before_audio_tokens) {
    throw invalid_argument("savings requires the compressed token count <= the original (" +
                           std::to_string(after_audio_tokens) + " > " +
                           std::to_string(before_audio_tokens) + ")");
  }
  shape.audio_tokens = before_audio_tokens;
  const double before = attention_cost(shape);
  shape.audio_tokens = after_audio_tokens;
  const double after = attention_cost(shape);
  if (before == after) return 1.0;
  if (after == 0.0) return std::numeric_limits<double>::infinity();
  return before / after;
}

}  // namespace atc
