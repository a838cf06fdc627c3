#include "classify/error.hpp"

namespace classify {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingRequiredColumn: return "MissingRequiredColumn";
    case ErrorCode::ForbiddenString: return "ForbiddenString";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::RaggedRow: return "RaggedRow";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::MetadataMismatch: return "MetadataMismatch";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::NoNegatives: return "NoNegatives";
    case ErrorCode::AllClassesDegenerate: return "AllClassesDegenerate";
    case ErrorCode::MissingValues: return "MissingValues";
    case ErrorCode::UnknownParam: return "UnknownParam";
    case ErrorCode::ParamOutOfRange: return "ParamOutOfRange";
    case ErrorCode::MulticlassUnsupported: return "MulticlassUnsupported";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::BadModelArtifact: return "BadModelArtifact";
    case ErrorCode::EmptySpace: return "EmptySpace";
    case ErrorCode::AllTrialsFailed: return "AllTrialsFailed";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooManyFeatures: return "TooManyFeatures";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::EmptyColumn: return "EmptyColumn";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::MissingValuesPresent: return "MissingValuesPresent";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::DatasetNotFound: return "DatasetNotFound";
    case ErrorCode::ModelRosterInvalid: return "ModelRosterInvalid";
    case ErrorCode::CombinationBudgetExceeded: return "CombinationBudgetExceeded";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::NoSuccessfulModels: return "NoSuccessfulModels";
    case ErrorCode::UnknownMetric: return "UnknownMetric";
    case ErrorCode::JobNotFound: return "JobNotFound";
    case ErrorCode::ArtifactNotFound: return "ArtifactNotFound";
    case ErrorCode::InvalidStateTransition: return "InvalidStateTransition";
    case ErrorCode::JobNotFinished: return "JobNotFinished";
    case ErrorCode::JobBusy: return "JobBusy";
    case ErrorCode::DatasetInUse: return "DatasetInUse";
    case ErrorCode::BadRequest: return "BadRequest";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

}  // namespace classify
