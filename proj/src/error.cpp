#include "protosnap/error.hpp"

namespace protosnap {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::DegenerateProjection: return "DegenerateProjection";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::TooFewCorrespondences: return "TooFewCorrespondences";
    case ErrorCode::NoValidModel: return "NoValidModel";
    case ErrorCode::AllRunsFailed: return "AllRunsFailed";
    case ErrorCode::EmptyForeground: return "EmptyForeground";
    case ErrorCode::OutOfCanvas: return "OutOfCanvas";
    case ErrorCode::CannotFitCanvas: return "CannotFitCanvas";
    case ErrorCode::KeyMismatch: return "KeyMismatch";
  }
  return "Unknown";
}

}  // namespace protosnap
