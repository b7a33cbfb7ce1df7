#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace treerec::text {

std::string_view trim(std::string_view s) noexcept;

// Trims and collapses every run of whitespace (tabs, newlines included) to one space.
std::string collapse_whitespace(std::string_view s);

std::string ascii_lower(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);

// Maximal whitespace-separated units.
std::vector<std::string_view> whitespace_units(std::string_view s);

// Lower-cased runs of [A-Za-z0-9_] and non-ASCII bytes, sorted and unique.
// This is the word model used for lexical overlap and fuzzy title matching.
std::vector<std::string> lexical_tokens(std::string_view s);

// Lower-case, punctuation replaced by spaces, whitespace collapsed.
std::string normalize_label(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace treerec::text
