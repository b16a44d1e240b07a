#pragma once

#include <stdexcept>
#include <string>

namespace dfib {

enum class ErrorKind {
  NonFinite,
  MaxTimeExceeded,
  TangentialExit,
  RankDeficient,
  OffManifold,
  DegenerateFrame,
  SelfIntersection,
  TangentialIntersection,
  Trapped,
  InsufficientVariations,
  EmptyLevelSet,
  NotOnCharacteristic,
  SearchFailed,
  EmptyConstraintSet,
  RankTestInconclusive,
  NotInImage,
  ChartFailure,
  NewtonDiverged,
  HessianDegenerate,
  NoIncidence,
  GridTooCoarse,
  BelowFloor,
  SchemaError,
  ParseError,
};

const char* kind_name(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace dfib
