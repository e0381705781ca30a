#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace drs {

enum class Errc {
    InvalidArgument,
    IoError,
    MalformedDiff,
    MalformedStructuredText,
    BudgetTooSmall,
    InsufficientSamples,
    InvalidCalibration,
    InvalidModelFile,
    DegenerateTrainingSet,
    DiffTooLarge,
    BatchTooLarge,
    BackendTimeout,
    BackendUnavailable,
    MalformedBackendResponse,
    MissingColumn,
    EmptyDataset,
    LengthMismatch,
    SingleClassInput,
    InvalidPayload,
    CommitNotFound,
    HostingServiceError,
    Unauthorized,
    FeatureDisabled,
    SignatureMismatch,
};

constexpr std::string_view to_string(Errc code) {
    switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::IoError: return "IoError";
    case Errc::MalformedDiff: return "MalformedDiff";
    case Errc::MalformedStructuredText: return "MalformedStructuredText";
    case Errc::BudgetTooSmall: return "BudgetTooSmall";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::InvalidCalibration: return "InvalidCalibration";
    case Errc::InvalidModelFile: return "InvalidModelFile";
    case Errc::DegenerateTrainingSet: return "DegenerateTrainingSet";
    case Errc::DiffTooLarge: return "DiffTooLarge";
    case Errc::BatchTooLarge: return "BatchTooLarge";
    case Errc::BackendTimeout: return "BackendTimeout";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::MalformedBackendResponse: return "MalformedBackendResponse";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::SingleClassInput: return "SingleClassInput";
    case Errc::InvalidPayload: return "InvalidPayload";
    case Errc::CommitNotFound: return "CommitNotFound";
    case Errc::HostingServiceError: return "HostingServiceError";
    case Errc::Unauthorized: return "Unauthorized";
    case Errc::FeatureDisabled: return "FeatureDisabled";
    case Errc::SignatureMismatch: return "SignatureMismatch";
    }
    return "Unknown";
}

/// Exception carrying a domain error code. All library failures surface as
/// drs::Error so that the gateway and CLI can map codes to statuses.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }
    std::string_view name() const noexcept { return to_string(code_); }

    // Only set for rate-limited hosting responses.
    std::optional<int> retry_after_seconds;

private:
    Errc code_;
};

}  // namespace drs
