// Copyright 2026 The atc Authors
// Feature-sequence data model and the ATCF v1 on-disk format
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "atc/error.hpp"
#include "atc/matrix.hpp"

namespace atc {

// ----------------------------------------------------------------------------
// FeatureSequence
// ----------------------------------------------------------------------------

/// A T x D matrix of encoder frame features plus frame-rate metadata.
/// Immutable after construction; construction validates every invariant
/// (T >= 1, D >= 1, all values finite, frame_rate > 0).
class FeatureSequence {
 public:
  FeatureSequence(Matrix<float> frames, float frame_rate, std::string source_id = {})
      : frames_(std::move(frames)),
        frame_rate_(frame_rate),
        source_id_(std::move(source_id)) {
    if (frames_.rows() == 0 || frames_.cols() == 0) {
      throw invalid_argument("feature sequence must have at least one frame and one dimension");
    }
    if (!frames_.all_finite()) {
      throw invalid_argument("feature sequence contains a non-finite value");
    }
    if (!std::isfinite(frame_rate_) || frame_rate_ <= 0.0f) {
      throw invalid_argument("frame rate must be finite and > 0");
    }
  }

  std::size_t frames() const { return frames_.rows(); }
  std::size_t dim() const { return frames_.cols(); }
  float frame_rate() const { return frame_rate_; }
  double duration_seconds() const {
    return static_cast<double>(frames()) / static_cast<double>(frame_rate_);
  }
  const std::string& source_id() const { return source_id_; }

  std::span<const float> frame(std::size_t t) const { return frames_.row(t); }
  const Matrix<float>& data() const { return frames_; }

  FeatureSequence with_source_id(std::string id) const {
    return FeatureSequence(frames_, frame_rate_, std::move(id));
  }

  friend bool operator==(const FeatureSequence& a, const FeatureSequence& b) = default;

 private:
  Matrix<float> frames_;
  float frame_rate_;
  std::string source_id_;
};

/// One reference or hypothesis line: an id plus whitespace-split tokens.
/// The id must be non-empty; the token list may be empty.
struct Utterance {
  std::string id;
  std::vector<std::string> tokens;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

// ----------------------------------------------------------------------------
// Little-endian scalar IO
// ----------------------------------------------------------------------------

namespace detail {

inline void put_bytes(std::ostream& out, const unsigned char* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u16le(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  put_bytes(out, b, 2);
}

inline void put_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  put_bytes(out, b, 4);
}

inline void put_u64le(std::ostream& out, std::uint64_t v) {
  put_u32le(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32le(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32le(std::ostream& out, float v) {
  put_u32le(out, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64le(std::ostream& out, double v) {
  put_u64le(out, std::bit_cast<std::uint64_t>(v));
}

inline bool get_bytes(std::istream& in, unsigned char* p, std::size_t n) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

inline std::uint16_t get_u16le(std::istream& in, const char* what) {
  unsigned char b[2];
  if (!get_bytes(in, b, 2)) throw format_error(std::string("truncated input reading ") + what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32le(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!get_bytes(in, b, 4)) throw format_error(std::string("truncated input reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64le(std::istream& in, const char* what) {
  std::uint64_t lo = get_u32le(in, what);
  std::uint64_t hi = get_u32le(in, what);
  return lo | (hi << 32);
}

inline float get_f32le(std::istream& in, const char* what) {
  return std::bit_cast<float>(get_u32le(in, what));
}

inline double get_f64le(std::istream& in, const char* what) {
  return std::bit_cast<double>(get_u64le(in, what));
}

}  // namespace detail

// ----------------------------------------------------------------------------
// ATCF v1 container
//
// Little-endian layout:
//   bytes  0-3   magic "ATCF"
//   bytes  4-5   version, u16 = 1
//   bytes  6-7   reserved, u16 = 0
//   bytes  8-11  frame count T, u32
//   bytes 12-15  feature dimension D, u32
//   bytes 16-19  frame rate, f32
//   bytes 20-    row-major frames, f32, frame 0 first
// ----------------------------------------------------------------------------

inline constexpr char kAtcfMagic[4] = {'A', 'T', 'C', 'F'};
inline constexpr std::uint16_t kAtcfVersion = 1;
inline constexpr std::size_t kAtcfHeaderBytes = 20;

struct AtcfHeader {
  std::uint16_t version = kAtcfVersion;
  std::uint32_t frames = 0;
  std::uint32_t dim = 0;
  float frame_rate = 0.0f;

  std::size_t payload_bytes() const {
    return 4u * static_cast<std::size_t>(frames) * static_cast<std::size_t>(dim);
  }
};

/// Reads and validates the 20-byte ATCF header, leaving the stream at the
/// start of the payload.
inline AtcfHeader read_atcf_header(std::istream& in) {
  unsigned char magic[4];
  if (!detail::get_bytes(in, magic, 4)) {
    throw format_error("truncated input reading ATCF magic");
  }
  if (std::memcmp(magic, kAtcfMagic, 4) != 0) {
    throw format_error("bad magic: not an ATCF stream");
  }
  AtcfHeader h;
  h.version = detail::get_u16le(in, "ATCF version");
  if (h.version != kAtcfVersion) {
    throw format_error("unsupported ATCF version " + std::to_string(h.version));
  }
  detail::get_u16le(in, "ATCF reserved field");  // reserved, ignored on read
  h.frames = detail::get_u32le(in, "ATCF frame count");
  h.dim = detail::get_u32le(in, "ATCF dimension");
  if (h.frames == 0 || h.dim == 0) {
    throw format_error("ATCF header declares an empty sequence (T=" +
                       std::to_string(h.frames) + ", D=" + std::to_string(h.dim) + ")");
  }
  h.frame_rate = detail::get_f32le(in, "ATCF frame rate");
  if (!std::isfinite(h.frame_rate) || h.frame_rate <= 0.0f) {
    throw format_error("ATCF header declares a non-positive frame rate");
  }
  return h;
}

/// Serializes a sequence as ATCF v1. Returns the number of bytes emitted,
/// which is exactly 20 + 4*T*D.
inline std::size_t write_features(const FeatureSequence& seq, std::ostream& out) {
  detail::put_bytes(out, reinterpret_cast<const unsigned char*>(kAtcfMagic), 4);
  detail::put_u16le(out, kAtcfVersion);
  detail::put_u16le(out, 0);  // reserved
  detail::put_u32le(out, static_cast<std::uint32_t>(seq.frames()));
  detail::put_u32le(out, static_cast<std::uint32_t>(seq.dim()));
  detail::put_f32le(out, seq.frame_rate());
  for (float v : seq.data().values()) {
    detail::put_f32le(out, v);
  }
  if (!out) throw io_error("failed writing ATCF stream");
  return kAtcfHeaderBytes + 4 * seq.frames() * seq.dim();
}

/// Parses one ATCF v1 sequence from the stream. Rejects bad magic, unknown
/// versions, empty shapes, truncated payloads and non-finite values.
inline FeatureSequence read_features(std::istream& in, std::string source_id = {}) {
  const AtcfHeader h = read_atcf_header(in);
  const std::size_t count = static_cast<std::size_t>(h.frames) * h.dim;
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = detail::get_f32le(in, "ATCF payload");
    if (!std::isfinite(data[i])) {
      throw format_error("ATCF payload contains a non-finite value at element " +
                         std::to_string(i));
    }
  }
  return FeatureSequence(Matrix<float>(h.frames, h.dim, std::move(data)), h.frame_rate,
                         std::move(source_id));
}

inline std::size_t write_features_file(const FeatureSequence& seq,
                                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  std::size_t n = write_features(seq, out);
  out.flush();
  if (!out) throw io_error("failed writing " + path.string());
  return n;
}

/// Reads one sequence from a file; the file must contain exactly one ATCF
/// record, so trailing bytes are rejected as a declared/actual length mismatch.
inline FeatureSequence read_features_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string() + " for reading");
  FeatureSequence seq = read_features(in, path.stem().string());
  if (in.peek() != std::char_traits<char>::eof()) {
    throw format_error(path.string() + " has trailing bytes after the declared payload");
  }
  return seq;
}

// ----------------------------------------------------------------------------
// Utterance text files: one `<id><TAB><space-separated tokens>` line each
// ----------------------------------------------------------------------------

inline std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) tokens.push_back(std::move(tok));
  return tokens;
}

inline std::vector<Utterance> read_utterances(std::istream& in) {
  std::vector<Utterance> utts;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw format_error("utterance line " + std::to_string(lineno) + " has no TAB separator");
    }
    Utterance u;
    u.id = line.substr(0, tab);
    if (u.id.empty()) {
      throw format_error("utterance line " + std::to_string(lineno) + " has an empty id");
    }
    if (!seen.insert(u.id).second) {
      throw format_error("duplicate utterance id '" + u.id + "' at line " +
                         std::to_string(lineno));
    }
    u.tokens = split_whitespace(line.substr(tab + 1));
    utts.push_back(std::move(u));
  }
  return utts;
}

inline std::vector<Utterance> read_utterances_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string() + " for reading");
  return read_utterances(in);
}

inline void write_utterances(std::span<const Utterance> utts, std::ostream& out) {
  for (const Utterance& u : utts) {
    out << u.id << '\t';
    for (std::size_t i = 0; i < u.tokens.size(); ++i) {
      if (i) out << ' ';
      out << u.tokens[i];
    }
    out << '\n';
  }
  if (!out) throw io_error("failed writing utterance stream");
}

}  // namespace atc
