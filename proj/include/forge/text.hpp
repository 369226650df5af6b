#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace forge::text {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool starts_with_ci(std::string_view s, std::string_view prefix);

// Case-insensitive keyword search. A keyword edge that is alphanumeric must
// sit on a non-alphanumeric boundary in `haystack`, so "java" does not match
// "javascript" and "poc" does not match "epoch".
bool contains_keyword(std::string_view haystack, std::string_view keyword);

// Last `max_bytes` of `s`, cut at a line start when possible.
std::string tail(std::string_view s, std::size_t max_bytes);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view content);

// Normalizes a package-relative path ("./a//b" -> "a/b"). Returns an empty
// string when the path is absolute or escapes its root through "..".
std::string normalize_relative(std::string_view path);

// Glob with `*` (within one segment) and a trailing `/**` (whole subtree).
bool path_matches(std::string_view pattern, std::string_view path);

}  // namespace forge::text
