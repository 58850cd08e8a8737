// Copyright 2026 The atc Authors
// WER and corpus BLEU with full error/precision decompositions
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "atc/error.hpp"

namespace atc {

using Tokens = std::vector<std::string>;
using ScoredPair = std::pair<Tokens, Tokens>;  // (reference, hypothesis)

// ----------------------------------------------------------------------------
// WER
// ----------------------------------------------------------------------------

/// Edit-distance decomposition against a reference of N tokens.
/// wer() may exceed 1 when the hypothesis carries many insertions.
struct WerReport {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t edits() const { return substitutions + deletions + insertions; }
  double wer() const {
    return static_cast<double>(edits()) / static_cast<double>(reference_length);
  }

  friend bool operator==(const WerReport&, const WerReport&) = default;
};

/// Minimum-edit-distance alignment with unit costs. Backtrace ties prefer
/// substitution over insertion over deletion.
inline WerReport wer(std::span<const std::string> reference,
                     std::span<const std::string> hypothesis) {
  const std::size_t m = reference.size();
  const std::size_t n = hypothesis.size();
  if (m == 0) throw invalid_argument("WER reference must be non-empty");

  std::vector<std::size_t> dp((m + 1) * (n + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return dp[i * (n + 1) + j]; };
  for (std::size_t i = 0; i <= m; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= n; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      if (reference[i - 1] == hypothesis[j - 1]) {
        at(i, j) = at(i - 1, j - 1);
      } else {
        at(i, j) = 1 + std::min({at(i - 1, j - 1), at(i, j - 1), at(i - 1, j)});
      }
    }
  }

  WerReport report;
  report.reference_length = m;
  std::size_t i = m;
  std::size_t j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1] &&
        at(i, j) == at(i - 1, j - 1)) {
      --i;
      --j;
    } else if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + 1) {
      ++report.substitutions;
      --i;
      --j;
    } else if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++report.insertions;
      --j;
    } else {
      ++report.deletions;
      --i;
    }
  }
  return report;
}

/// Pooled corpus WER: sums S, D, I and N over all pairs before dividing.
inline WerReport corpus_wer(std::span<const ScoredPair> pairs) {
  if (pairs.empty()) throw invalid_argument("corpus WER needs at least one pair");
  WerReport pooled;
  for (const auto& [ref, hyp] : pairs) {
    const WerReport r = wer(ref, hyp);
    pooled.substitutions += r.substitutions;
    pooled.deletions += r.deletions;
    pooled.insertions += r.insertions;
    pooled.reference_length += r.reference_length;
  }
  return pooled;
}

/// Unweighted mean of per-utterance WERs, the alternative aggregation.
inline double mean_utterance_wer(std::span<const ScoredPair> pairs) {
  if (pairs.empty()) throw invalid_argument("corpus WER needs at least one pair");
  double sum = 0.0;
  for (const auto& [ref, hyp] : pairs) sum += wer(ref, hyp).wer();
  return sum / static_cast<double>(pairs.size());
}

// ----------------------------------------------------------------------------
// BLEU
// ----------------------------------------------------------------------------

/// Corpus BLEU decomposition. `bleu` is zero when any raw clipped precision is
/// zero; `bleu_smoothed` instead replaces zero match counts by 1e-9 so nearby
/// hypotheses still order sensibly. Both use the same brevity penalty.
struct BleuReport {
  std::array<double, 4> precisions{};         // raw clipped n-gram precisions
  std::array<std::size_t, 4> ngram_matches{};
  std::array<std::size_t, 4> ngram_totals{};
  double brevity_penalty = 1.0;
  double bleu = 0.0;
  double bleu_smoothed = 0.0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

inline constexpr double kBleuSmoothingEpsilon = 1e-9;

namespace detail {

inline std::unordered_map<std::string, std::size_t> ngram_counts(const Tokens& tokens,
                                                                 std::size_t n) {
  std::unordered_map<std::string, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
      if (k) key.push_back('\x1f');
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace detail

/// Clipped n-gram precisions pooled over the corpus for n = 1..max_n,
/// geometric mean with uniform weights, brevity penalty
/// exp(1 - ref_len/hyp_len) when the hypothesis side is shorter.
inline BleuReport corpus_bleu(std::span<const ScoredPair> pairs, std::size_t max_n = 4) {
  if (pairs.empty()) throw invalid_argument("corpus BLEU needs at least one pair");
  if (max_n == 0 || max_n > 4) throw invalid_argument("BLEU order must be in 1..4");

  BleuReport report;
  for (const auto& [ref, hyp] : pairs) {
    report.ref_length += ref.size();
    report.hyp_length += hyp.size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto ref_counts = detail::ngram_counts(ref, n);
      const auto hyp_counts = detail::ngram_counts(hyp, n);
      for (const auto& [gram, count] : hyp_counts) {
        const auto it = ref_counts.find(gram);
        const std::size_t clip = (it == ref_counts.end()) ? 0 : std::min(count, it->second);
        report.ngram_matches[n - 1] += clip;
        report.ngram_totals[n - 1] += count;
      }
    }
  }
  if (report.hyp_length == 0) {
    throw invalid_argument("corpus BLEU is undefined for all-empty hypotheses");
  }

  report.brevity_penalty =
      (report.hyp_length < report.ref_length)
          ? std::exp(1.0 - static_cast<double>(report.ref_length) /
                               static_cast<double>(report.hyp_length))
          : 1.0;

  bool any_zero = false;
  double log_sum = 0.0;
  double log_sum_smoothed = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    const double total = static_cast<double>(std::max<std::size_t>(report.ngram_totals[n], 1));
    const double matches = static_cast<double>(report.ngram_matches[n]);
    report.precisions[n] = (report.ngram_totals[n] == 0) ? 0.0 : matches / total;
    if (report.precisions[n] <= 0.0) {
      any_zero = true;
      log_sum_smoothed += std::log(kBleuSmoothingEpsilon / total);
    } else {
      log_sum += std::log(report.precisions[n]);
      log_sum_smoothed += std::log(report.precisions[n]);
    }
  }
  const double weight = 1.0 / static_cast<double>(max_n);
  report.bleu = any_zero ? 0.0 : report.brevity_penalty * std::exp(weight * log_sum);
  report.bleu_smoothed = report.brevity_penalty * std::exp(weight * log_sum_smoothed);
  return report;
}

// ----------------------------------------------------------------------------
// Token transforms behind the CLI's --normalize and --zh-char-split flags
// ----------------------------------------------------------------------------

namespace detail {

inline bool is_ascii_punct(unsigned char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
         (c >= '{' && c <= '~');
}

inline char ascii_lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

}  // namespace detail

/// Lowercases ASCII letters and strips ASCII punctuation; tokens that become
/// empty are dropped. Bytes outside ASCII pass through untouched, so UTF-8
/// text stays intact.
inline Tokens normalize_tokens(std::span<const std::string> tokens) {
  Tokens out;
  out.reserve(tokens.size());
  for (const std::string& tok : tokens) {
    std::string cleaned;
    cleaned.reserve(tok.size());
    for (unsigned char c : tok) {
      if (detail::is_ascii_punct(c)) continue;
      cleaned.push_back(detail::ascii_lower(c));
    }
    if (!cleaned.empty()) out.push_back(std::move(cleaned));
  }
  return out;
}

/// Splits every token into UTF-8 code points, one output token per code
/// point. Malformed lead bytes fall back to single-byte tokens.
inline Tokens split_chars(std::span<const std::string> tokens) {
  Tokens out;
  for (const std::string& tok : tokens) {
    std::size_t i = 0;
    while (i < tok.size()) {
      const unsigned char lead = static_cast<unsigned char>(tok[i]);
      std::size_t len = 1;
      if ((lead & 0xe0) == 0xc0) len = 2;
      else if ((lead & 0xf0) == 0xe0) len = 3;
      else if ((lead & 0xf8) == 0xf0) len = 4;
      len = std::min(len, tok.size() - i);
      out.push_back(tok.substr(i, len));
      i += len;
    }
  }
  return out;
}

}  // namespace atc
