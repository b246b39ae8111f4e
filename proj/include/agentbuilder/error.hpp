#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agentbuilder {

/// Machine-readable error codes shared by the engine, the CLI and the HTTP API.
enum class ErrorCode {
  // workflow documents
  ParseError,
  MissingNodes,
  MissingField,
  UnknownNodeKind,
  DanglingEdge,
  InvalidGraph,
  // compiler / gateway
  GatewayUnavailable,
  MalformedRegeneration,
  ScriptExhausted,
  UnknownTool,
  ArgumentTypeMismatch,
  NoCallFound,
  InvalidConfig,
  // simulated environment
  NoPages,
  DuplicateElement,
  InvalidFixture,
  ElementNotFound,
  ElementNotVisible,
  InvalidTarget,
  UnknownUrl,
  PreconditionFailed,
  // runtime
  IllegalTransition,
  NotRunning,
  NotPaused,
  NotAwaiting,
  ResponseKindMismatch,
  InvalidScenario,
  // trace
  IndexGap,
  TraceSealed,
  OutOfRange,
  TamperedRecord,
  // service
  WorkflowNotFound,
  FixtureNotFound,
  SessionNotFound,
  RevisionConflict,
  BadRequest,
  IoError,
};

std::string_view code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string where = {})
      : std::runtime_error(std::string(code_name(code)) + ": " + message +
                           (where.empty() ? "" : " (at " + where + ")")),
        code_(code),
        where_(std::move(where)),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// Position inside the offending document, as a JSON pointer, when known.
  const std::string& where() const noexcept { return where_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string where_;
  std::string detail_;
};

}  // namespace agentbuilder
