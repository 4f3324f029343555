#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace forge {

enum class ErrorKind {
  kInvalidArgument,
  kDegenerateOrbit,
  kProjectionBehindSource,
  kMeshDegeneracy,
  kVoxelizationIntegrity,
  kIncompatibleGrids,
  kDimensionMismatch,
  kParse,
  kTruncated,
  kUnsupported,
  kNoDetection,
  kIo,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kDegenerateOrbit: return "degenerate-orbit";
    case ErrorKind::kProjectionBehindSource: return "projection-behind-source";
    case ErrorKind::kMeshDegeneracy: return "mesh-degeneracy";
    case ErrorKind::kVoxelizationIntegrity: return "voxelization-integrity";
    case ErrorKind::kIncompatibleGrids: return "incompatible-grids";
    case ErrorKind::kDimensionMismatch: return "dimension-mismatch";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kUnsupported: return "unsupported";
    case ErrorKind::kNoDetection: return "no-detection";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

/// Library-wide exception. Every failure carries a kind so callers (and the
/// CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace forge
