#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace parabreak {

// Every failure the toolkit can raise, so callers and tests can match on
// the kind instead of parsing messages.
enum class ErrorKind {
  MalformedFile,
  UnknownCategory,
  EmptyGroundTruth,
  DuplicateSurfaceForm,
  MalformedLine,
  MissingField,
  UnknownImage,
  AllMasked,
  InvalidTokenId,
  UnencodableText,
  InvalidConfig,
  UnknownTemplate,
  MissingTokenManifest,
  NetworkError,
  EndpointError,
  TokenLimitExceeded,
  MismatchedImageSets,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

}  // namespace parabreak
