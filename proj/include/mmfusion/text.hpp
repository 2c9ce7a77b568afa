#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mmfusion::text {

// Shortest decimal form that parses back to the same double; locale-free.
std::string format_double(double v);

// Hexfloat form; exact round trip, used by the checkpoint format.
std::string format_double_hex(double v);

double parse_double(std::string_view s);
long long parse_int(std::string_view s);
unsigned long long parse_uint(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char delim);

}  // namespace mmfusion::text
