#include "parabreak/error.hpp"

namespace parabreak {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedFile: return "MalformedFile";
    case ErrorKind::UnknownCategory: return "UnknownCategory";
    case ErrorKind::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorKind::DuplicateSurfaceForm: return "DuplicateSurfaceForm";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::UnknownImage: return "UnknownImage";
    case ErrorKind::AllMasked: return "AllMasked";
    case ErrorKind::InvalidTokenId: return "InvalidTokenId";
    case ErrorKind::UnencodableText: return "UnencodableText";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::UnknownTemplate: return "UnknownTemplate";
    case ErrorKind::MissingTokenManifest: return "MissingTokenManifest";
    case ErrorKind::NetworkError: return "NetworkError";
    case ErrorKind::EndpointError: return "EndpointError";
    case ErrorKind::TokenLimitExceeded: return "TokenLimitExceeded";
    case ErrorKind::MismatchedImageSets: return "MismatchedImageSets";
  }
  return "UnknownError";
}

}  // namespace parabreak
