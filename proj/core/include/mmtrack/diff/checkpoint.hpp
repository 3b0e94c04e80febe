#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>

#include "mmtrack/diff/tape.hpp"

namespace mmtrack::diff {

inline constexpr std::string_view kCheckpointFormat = "mmtrack-checkpoint/1";

/// JSON document: {"format", "parameters": {name: {"shape": [...], "data": [...]}}}.
/// Values are written with round-trip precision.
void write_checkpoint(std::ostream& out, std::span<const Parameter* const> params);
/// Loads values by name; every parameter must be present with a matching shape.
void read_checkpoint(std::istream& in, std::span<Parameter* const> params);

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter* const> params);
void load_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params);

}  // namespace mmtrack::diff
