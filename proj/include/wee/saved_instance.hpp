#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "wee/engine.hpp"

namespace wee {

/// FNV-1a 64-bit digest of the workflow source, as 16 lowercase hex digits.
std::string source_hash(std::string_view source);

/// Persisted form of a stopped instance.
struct SavedInstance {
  std::string hash;
  std::string source_path;
  InstanceState state;
};

nlohmann::json saved_to_json(const SavedInstance& saved);
SavedInstance saved_from_json(const nlohmann::json& j);

void write_saved(const std::string& path, const SavedInstance& saved);
SavedInstance read_saved(const std::string& path);

}  // namespace wee
