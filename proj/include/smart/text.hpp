#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace smart::text {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<int> parse_int_list(std::string_view s, std::string_view what);
std::string join_ints(const std::vector<int>& v, char sep = ',');

}  // namespace smart::text
