#pragma once

#include <stdexcept>
#include <string>

namespace koopman {

enum class ErrorKind {
  InvalidArgument,
  InsufficientHistory,
  Evaluation,
  EmptyTrajectory,
  UnknownId,
  ShapeMismatch,
  DefectiveMatrix,
  RankDeficient,
  Overflow,
  BadMagic,
  VersionMismatch,
  Truncated,
  ChecksumMismatch,
  Io,
};

constexpr const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::InsufficientHistory: return "insufficient history";
    case ErrorKind::Evaluation: return "evaluation error";
    case ErrorKind::EmptyTrajectory: return "empty trajectory";
    case ErrorKind::UnknownId: return "unknown id";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::DefectiveMatrix: return "defective matrix";
    case ErrorKind::RankDeficient: return "rank deficient";
    case ErrorKind::Overflow: return "overflow";
    case ErrorKind::BadMagic: return "bad magic";
    case ErrorKind::VersionMismatch: return "version mismatch";
    case ErrorKind::Truncated: return "truncated file";
    case ErrorKind::ChecksumMismatch: return "checksum mismatch";
    case ErrorKind::Io: return "i/o error";
  }
  return "unknown";
}

/// Numerical failures are the ones the caller cannot fix by correcting input
/// files: the data were well formed but the linear algebra broke down.
constexpr bool is_numerical(ErrorKind kind) {
  return kind == ErrorKind::DefectiveMatrix || kind == ErrorKind::RankDeficient ||
         kind == ErrorKind::Overflow;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

}  // namespace detail
}  // namespace koopman
