#pragma once

#include <stdexcept>
#include <string>

namespace lfcal {

enum class ErrorCode {
  InvalidArgument,
  IndexOutOfRange,
  DegeneratePoint,       // Z = 0 in a pinhole projection
  FocalSingularity,      // K1*Z + K2 = 0: image forms exactly on the MLA
  PointAtInfinity,
  DegenerateLine,
  InconsistentLines,
  EstimationFailure,
  UnderConstrained,
  RankDeficient,
  DegenerateSolution,
  BehindCamera,
  NoIntersection,
  DetectionFailure,
  Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lfcal
