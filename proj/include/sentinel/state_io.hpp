#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "sentinel/models.hpp"

namespace sentinel {

// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string state_dict_to_json(const StateDict& sd);
StateDict state_dict_from_json(const std::string& text);

void save_state_dict(const StateDict& sd, const std::filesystem::path& path);
StateDict load_state_dict_file(const std::filesystem::path& path);

}  // namespace sentinel
