#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace prewrite::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Splits on '\n'; a trailing '\r' on each line is dropped.
std::vector<std::string_view> split_lines(std::string_view s);

/// Replaces every occurrence of `from` in `s`.
std::string replace_all(std::string s, std::string_view from, std::string_view to);

/// Number of non-overlapping occurrences of `needle`.
std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

}  // namespace prewrite::text
