#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace classify {

enum class ErrorCode {
  // dataset
  MissingRequiredColumn,
  ForbiddenString,
  EmptyDataset,
  RaggedRow,
  MissingLabel,
  SingleClass,
  MetadataMismatch,
  TooFewRows,
  SchemaMismatch,
  // metrics
  LengthMismatch,
  NoPositives,
  NoNegatives,
  AllClassesDegenerate,
  // models
  MissingValues,
  UnknownParam,
  ParamOutOfRange,
  MulticlassUnsupported,
  UnknownModel,
  BadModelArtifact,
  // tuner
  EmptySpace,
  AllTrialsFailed,
  // explain
  DimensionMismatch,
  TooManyFeatures,
  SingularSystem,
  // synth
  EmptyColumn,
  ClassTooSmall,
  MissingValuesPresent,
  UnknownClass,
  // pipeline
  DatasetNotFound,
  ModelRosterInvalid,
  CombinationBudgetExceeded,
  InvalidSpec,
  // viz
  NoSuccessfulModels,
  UnknownMetric,
  // service
  JobNotFound,
  ArtifactNotFound,
  InvalidStateTransition,
  JobNotFinished,
  JobBusy,
  DatasetInUse,
  BadRequest,
  Internal,
};

std::string_view error_code_name(ErrorCode code);

/// Where in an input file an error was detected. Rows are 1-based data rows
/// (the header is row 0); columns are header names.
struct ErrorLocation {
  std::optional<std::size_t> row;
  std::optional<std::string> column;
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, ErrorLocation location = {})
      : std::runtime_error(message), code_(code), location_(std::move(location)) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view code_name() const { return error_code_name(code_); }
  const ErrorLocation& location() const noexcept { return location_; }

 private:
  ErrorCode code_;
  ErrorLocation location_;
};

}  // namespace classify
