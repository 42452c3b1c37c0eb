#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

namespace wee {

/// Runtime value of the expression language: Null, Integer, Boolean or String.
class Value {
 public:
  enum class Kind { Null, Integer, Boolean, String };

  Value() = default;
  Value(std::int64_t v) : data_(v) {}
  Value(int v) : data_(static_cast<std::int64_t>(v)) {}
  Value(bool v) : data_(v) {}
  Value(std::string v) : data_(std::move(v)) {}
  Value(const char* v) : data_(std::string(v)) {}

  Kind kind() const noexcept { return static_cast<Kind>(data_.index()); }
  bool is_null() const noexcept { return kind() == Kind::Null; }
  bool is_integer() const noexcept { return kind() == Kind::Integer; }
  bool is_boolean() const noexcept { return kind() == Kind::Boolean; }
  bool is_string() const noexcept { return kind() == Kind::String; }

  std::int64_t as_integer() const { return std::get<std::int64_t>(data_); }
  bool as_boolean() const { return std::get<bool>(data_); }
  const std::string& as_string() const { return std::get<std::string>(data_); }

  /// Literal form, as it would be written in a workflow source.
  std::string to_literal() const;

  friend bool operator==(const Value&, const Value&) = default;

 private:
  std::variant<std::monostate, std::int64_t, bool, std::string> data_;
};

const char* kind_name(Value::Kind kind) noexcept;

using Values = std::map<std::string, Value>;

void to_json(nlohmann::json& j, const Value& v);
/// Accepts null, integral numbers, booleans and strings; throws wee::Error otherwise.
void from_json(const nlohmann::json& j, Value& v);

nlohmann::json values_to_json(const Values& values);
Values values_from_json(const nlohmann::json& j);

}  // namespace wee
