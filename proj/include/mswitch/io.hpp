#pragma once

#include "mswitch/model.hpp"
#include "mswitch/qvi.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mswitch {

using Json = nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
/// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

/// Round-trip decimal form used by every CSV artifact.
std::string format_double(double value);

std::string read_text_file(const std::filesystem::path& path);
/// Writes atomically enough for desk use: parent directories are created.
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Value-field CSV:
///
///     # config_hash=<hex>
///     node_index,x1..xk,v1..vm,slack1..slackm
///     ...one row per node...
///     # content_hash=<hex of every preceding byte>
std::string value_field_csv(const ValueField& field);

/// Parses a value-field CSV produced by value_field_csv for `grid` and `modes`.
/// Throws HashMismatch when the content hash does not match the bytes or the
/// embedded config hash differs from `expected_config_hash`.
ValueField parse_value_field_csv(std::string_view text, const Grid& grid, int modes,
                                 std::string_view expected_config_hash);

Json trace_to_json(const IterationTrace& trace);
Json residual_to_json(const ResidualReport& report);
Json validation_to_json(const ValidationReport& report);
Json point_to_json(const Point& x);

} // namespace mswitch
