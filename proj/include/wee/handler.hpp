#pragma once

#include <optional>
#include <stop_token>
#include <string>
#include <variant>

#include "wee/ast.hpp"
#include "wee/context_store.hpp"
#include "wee/value.hpp"

namespace wee {

/// What the engine hands to the handler wrapper for one call activity.
struct HandlerCall {
  PositionId position;
  std::string endpoint;  // resolved URI
  Values parameters;
  ContextSnapshot context;
  /// Present only when a previously stopped call is resumed.
  std::optional<std::string> passthrough;
  std::string instance;
};

/// Terminal answer of a call. Result values are committed to the context as
/// if assigned by a manipulate at the call's position.
struct HandlerOutcome {
  struct Result {
    Values values;
  };
  /// Only valid after stop_call: names a stored result for a later resume.
  struct Passthrough {
    std::string token;
  };
  /// Move the calling branch's thread of control to `target`.
  struct Jump {
    PositionId target;
  };
  /// Terminate the instance (explicit termination issued from an activity).
  struct Stop {};
  struct Error {
    std::string message;
  };

  std::variant<Result, Passthrough, Jump, Stop, Error> value;

  static HandlerOutcome result(Values v = {}) { return {Result{std::move(v)}}; }
  static HandlerOutcome passthrough(std::string token) { return {Passthrough{std::move(token)}}; }
  static HandlerOutcome jump(PositionId target) { return {Jump{std::move(target)}}; }
  static HandlerOutcome stop() { return {Stop{}}; }
  static HandlerOutcome error(std::string message) { return {Error{std::move(message)}}; }

  bool is_result() const { return std::holds_alternative<Result>(value); }
  bool is_passthrough() const { return std::holds_alternative<Passthrough>(value); }
  bool is_jump() const { return std::holds_alternative<Jump>(value); }
  bool is_stop() const { return std::holds_alternative<Stop>(value); }
  bool is_error() const { return std::holds_alternative<Error>(value); }
};

struct HandlerCapabilities {
  bool supports_jump = false;
  bool supports_passthrough = false;
};

/// Executes call activities on behalf of the engine. call() is invoked
/// concurrently from branch threads and may block. `stop_call` is the
/// stop_call channel for that one call: once stop is requested the call must
/// resolve, within a bounded grace period, to a Result (discarded by the
/// engine) or a Passthrough.
class HandlerWrapper {
 public:
  virtual ~HandlerWrapper() = default;

  virtual HandlerOutcome call(const HandlerCall& call, std::stop_token stop_call) = 0;
  virtual HandlerCapabilities capabilities() const { return {}; }
  virtual std::string name() const = 0;
};

}  // namespace wee
