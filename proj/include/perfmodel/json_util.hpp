#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>

#include "json.hpp"
#include "perfmodel/error.hpp"

namespace perfmodel {

// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw Error("cannot format double");
  return std::string(buf, end);
}

inline bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && end == text.data() + text.size();
}

namespace json_detail {

// Navigation helpers that report the JSON path of whatever is missing or
// malformed.
inline const nlohmann::json& field(const nlohmann::json& obj, const std::string& path, const char* key) {
  if (!obj.is_object()) throw SchemaError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "." + key + ": missing");
  return *it;
}

inline std::string get_string(const nlohmann::json& obj, const std::string& path, const char* key) {
  const auto& v = field(obj, path, key);
  if (!v.is_string()) throw SchemaError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline std::int64_t get_int(const nlohmann::json& obj, const std::string& path, const char* key) {
  const auto& v = field(obj, path, key);
  if (!v.is_number_integer()) throw SchemaError(path + "." + key + ": expected an integer");
  return v.get<std::int64_t>();
}

inline std::uint64_t get_uint(const nlohmann::json& obj, const std::string& path, const char* key) {
  const auto& v = field(obj, path, key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw SchemaError(path + "." + key + ": expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

inline double as_decimal(const nlohmann::json& v, const std::string& path) {
  double out = 0.0;
  if (!v.is_string() || !parse_double(v.get_ref<const std::string&>(), out)) {
    throw SchemaError(path + ": expected a decimal string");
  }
  return out;
}

inline double get_decimal(const nlohmann::json& obj, const std::string& path, const char* key) {
  return as_decimal(field(obj, path, key), path + "." + key);
}

inline const nlohmann::json& get_array(const nlohmann::json& obj, const std::string& path, const char* key) {
  const auto& v = field(obj, path, key);
  if (!v.is_array()) throw SchemaError(path + "." + key + ": expected an array");
  return v;
}

}  // namespace json_detail

}  // namespace perfmodel
