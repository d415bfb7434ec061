#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Small helpers shared by the line-oriented file formats.
namespace stabilex::textio {

std::vector<std::string_view> split(std::string_view line, char sep);

std::optional<std::int64_t> parse_int(std::string_view s);
std::optional<std::uint64_t> parse_uint(std::string_view s);
// Accepts only finite values that consume the whole field.
std::optional<double> parse_double(std::string_view s);

// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

// Fixed-precision rendering for SVG coordinates.
std::string fixed(double value, int precision = 2);

}  // namespace stabilex::textio
