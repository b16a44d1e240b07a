#include "dfib/error.hpp"

namespace dfib {

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::MaxTimeExceeded: return "MaxTimeExceeded";
    case ErrorKind::TangentialExit: return "TangentialExit";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::OffManifold: return "OffManifold";
    case ErrorKind::DegenerateFrame: return "DegenerateFrame";
    case ErrorKind::SelfIntersection: return "SelfIntersection";
    case ErrorKind::TangentialIntersection: return "TangentialIntersection";
    case ErrorKind::Trapped: return "Trapped";
    case ErrorKind::InsufficientVariations: return "InsufficientVariations";
    case ErrorKind::EmptyLevelSet: return "EmptyLevelSet";
    case ErrorKind::NotOnCharacteristic: return "NotOnCharacteristic";
    case ErrorKind::SearchFailed: return "SearchFailed";
    case ErrorKind::EmptyConstraintSet: return "EmptyConstraintSet";
    case ErrorKind::RankTestInconclusive: return "RankTestInconclusive";
    case ErrorKind::NotInImage: return "NotInImage";
    case ErrorKind::ChartFailure: return "ChartFailure";
    case ErrorKind::NewtonDiverged: return "NewtonDiverged";
    case ErrorKind::HessianDegenerate: return "HessianDegenerate";
    case ErrorKind::NoIncidence: return "NoIncidence";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::BelowFloor: return "BelowFloor";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace dfib
