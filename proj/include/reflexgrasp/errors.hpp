#pragma once

#include <stdexcept>
#include <string>

namespace reflex {

enum class ErrorKind {
  DegenerateNormal,
  ProjectionDiverged,
  ZeroVector,
  AngleSingular,
  CentroidDegenerate,
  ConeAxisAligned,
  SolverFailed,
  InvalidArgument,
  Config,
  Unimplemented,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateNormal: return "DegenerateNormal";
    case ErrorKind::ProjectionDiverged: return "ProjectionDiverged";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::AngleSingular: return "AngleSingular";
    case ErrorKind::CentroidDegenerate: return "CentroidDegenerate";
    case ErrorKind::ConeAxisAligned: return "ConeAxisAligned";
    case ErrorKind::SolverFailed: return "SolverFailed";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Unimplemented: return "Unimplemented";
  }
  return "Unknown";
}

// All library failures are reported through this type; `kind()` lets callers
// branch on the failure class without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace reflex
