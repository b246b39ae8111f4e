#include "agentbuilder/error.hpp"

namespace agentbuilder {

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "PARSE_ERROR";
    case ErrorCode::MissingNodes: return "MISSING_NODES";
    case ErrorCode::MissingField: return "MISSING_FIELD";
    case ErrorCode::UnknownNodeKind: return "UNKNOWN_NODE_KIND";
    case ErrorCode::DanglingEdge: return "DANGLING_EDGE";
    case ErrorCode::InvalidGraph: return "INVALID_GRAPH";
    case ErrorCode::GatewayUnavailable: return "GATEWAY_UNAVAILABLE";
    case ErrorCode::MalformedRegeneration: return "MALFORMED_REGENERATION";
    case ErrorCode::ScriptExhausted: return "SCRIPT_EXHAUSTED";
    case ErrorCode::UnknownTool: return "UNKNOWN_TOOL";
    case ErrorCode::ArgumentTypeMismatch: return "ARGUMENT_TYPE_MISMATCH";
    case ErrorCode::NoCallFound: return "NO_CALL_FOUND";
    case ErrorCode::InvalidConfig: return "INVALID_CONFIG";
    case ErrorCode::NoPages: return "NO_PAGES";
    case ErrorCode::DuplicateElement: return "DUPLICATE_ELEMENT";
    case ErrorCode::InvalidFixture: return "INVALID_FIXTURE";
    case ErrorCode::ElementNotFound: return "ELEMENT_NOT_FOUND";
    case ErrorCode::ElementNotVisible: return "ELEMENT_NOT_VISIBLE";
    case ErrorCode::InvalidTarget: return "INVALID_TARGET";
    case ErrorCode::UnknownUrl: return "UNKNOWN_URL";
    case ErrorCode::PreconditionFailed: return "PRECONDITION_FAILED";
    case ErrorCode::IllegalTransition: return "ILLEGAL_TRANSITION";
    case ErrorCode::NotRunning: return "NOT_RUNNING";
    case ErrorCode::NotPaused: return "NOT_PAUSED";
    case ErrorCode::NotAwaiting: return "NOT_AWAITING";
    case ErrorCode::ResponseKindMismatch: return "RESPONSE_KIND_MISMATCH";
    case ErrorCode::InvalidScenario: return "INVALID_SCENARIO";
    case ErrorCode::IndexGap: return "INDEX_GAP";
    case ErrorCode::TraceSealed: return "TRACE_SEALED";
    case ErrorCode::OutOfRange: return "OUT_OF_RANGE";
    case ErrorCode::TamperedRecord: return "TAMPERED_RECORD";
    case ErrorCode::WorkflowNotFound: return "WORKFLOW_NOT_FOUND";
    case ErrorCode::FixtureNotFound: return "FIXTURE_NOT_FOUND";
    case ErrorCode::SessionNotFound: return "SESSION_NOT_FOUND";
    case ErrorCode::RevisionConflict: return "REVISION_CONFLICT";
    case ErrorCode::BadRequest: return "BAD_REQUEST";
    case ErrorCode::IoError: return "IO_ERROR";
  }
  return "UNKNOWN";
}

}  // namespace agentbuilder
