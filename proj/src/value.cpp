#include "wee/value.hpp"

#include "wee/errors.hpp"

namespace wee {

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += '"';
  return out;
}

}  // namespace

std::string Value::to_literal() const {
  switch (kind()) {
    case Kind::Null: return "null";
    case Kind::Integer: return std::to_string(as_integer());
    case Kind::Boolean: return as_boolean() ? "true" : "false";
    case Kind::String: return quote(as_string());
  }
  return {};
}

const char* kind_name(Value::Kind kind) noexcept {
  switch (kind) {
    case Value::Kind::Null: return "null";
    case Value::Kind::Integer: return "integer";
    case Value::Kind::Boolean: return "boolean";
    case Value::Kind::String: return "string";
  }
  return "?";
}

void to_json(nlohmann::json& j, const Value& v) {
  switch (v.kind()) {
    case Value::Kind::Null: j = nullptr; break;
    case Value::Kind::Integer: j = v.as_integer(); break;
    case Value::Kind::Boolean: j = v.as_boolean(); break;
    case Value::Kind::String: j = v.as_string(); break;
  }
}

void from_json(const nlohmann::json& j, Value& v) {
  if (j.is_null()) {
    v = Value();
  } else if (j.is_boolean()) {
    v = Value(j.get<bool>());
  } else if (j.is_number_integer()) {
    v = Value(j.get<std::int64_t>());
  } else if (j.is_string()) {
    v = Value(j.get<std::string>());
  } else {
    throw Error("unsupported JSON value " + j.dump() + " (expected null, integer, boolean or string)");
  }
}

nlohmann::json values_to_json(const Values& values) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, value] : values) out[name] = value;
  return out;
}

Values values_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("expected a JSON object of values, got " + j.dump());
  Values out;
  for (const auto& [name, value] : j.items()) out.emplace(name, value.get<Value>());
  return out;
}

}  // namespace wee
