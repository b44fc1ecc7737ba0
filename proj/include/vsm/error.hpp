// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vsm {

enum class ErrorKind {
  InvalidAudio,
  ParamMismatch,
  DegenerateFilterbank,
  InvalidParam,
  InvalidMaskWidth,
  AlreadyAugmented,
  InsufficientSubjects,
  UnsatisfiableSplit,
  MissingSpectrogram,
  ShapeError,
  NumericalError,
  LabelError,
  BatchTooSmall,
  CutPointError,
  CorruptCheckpoint,
  UnsupportedVersion,
  IoError,
  LeakageRefusal,
  InputError,
  DegenerateLabels,
  MissingCheckpoint,
  ConfigError,
  ManifestError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidAudio: return "InvalidAudio";
    case ErrorKind::ParamMismatch: return "ParamMismatch";
    case ErrorKind::DegenerateFilterbank: return "DegenerateFilterbank";
    case ErrorKind::InvalidParam: return "InvalidParam";
    case ErrorKind::InvalidMaskWidth: return "InvalidMaskWidth";
    case ErrorKind::AlreadyAugmented: return "AlreadyAugmented";
    case ErrorKind::InsufficientSubjects: return "InsufficientSubjects";
    case ErrorKind::UnsatisfiableSplit: return "UnsatisfiableSplit";
    case ErrorKind::MissingSpectrogram: return "MissingSpectrogram";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::NumericalError: return "NumericalError";
    case ErrorKind::LabelError: return "LabelError";
    case ErrorKind::BatchTooSmall: return "BatchTooSmall";
    case ErrorKind::CutPointError: return "CutPointError";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::LeakageRefusal: return "LeakageRefusal";
    case ErrorKind::InputError: return "InputError";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ManifestError: return "ManifestError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace vsm
