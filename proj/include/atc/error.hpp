// Copyright 2026 The atc Authors
// Error types shared across the toolkit
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <stdexcept>
#include <string>

namespace atc {

/// Base class for every error the library throws.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

/// A caller-supplied value violates a documented precondition.
class invalid_argument : public error {
 public:
  explicit invalid_argument(const std::string& what) : error(what) {}
};

/// A byte or text stream does not match the expected format.
class format_error : public error {
 public:
  explicit format_error(const std::string& what) : error(what) {}
};

/// The underlying stream or file failed while reading or writing.
class io_error : public error {
 public:
  explicit io_error(const std::string& what) : error(what) {}
};

}  // namespace atc
