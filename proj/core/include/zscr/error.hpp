#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zscr {

enum class ErrorKind {
  // tensor / autodiff
  ShapeMismatch,
  DomainError,
  NonFinite,
  ZeroVector,
  EmptyTensor,
  NonScalarLoss,
  // data
  IoError,
  FormatError,
  VersionMismatch,
  SplitOverlap,
  DanglingLabel,
  EmptyClass,
  UnknownClass,
  SpecInvalid,
  CenterSamplingFailed,
  // training
  SingleClassDataset,
  EmptyDataset,
  ConfigInvalid,
  // retrieval
  EmptyQuerySet,
  EmptyUnseenSplit,
  ModelUntrained,
  DimsMismatch,
};

std::string_view to_string(ErrorKind kind);

/// True for errors caused by bad user input (configuration, flags, spec
/// values, dimension agreement); false for runtime and I/O failures.
bool is_validation_error(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace zscr
