#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kerl::text {

/// Trims both ends and collapses internal whitespace runs to one space.
std::string normalize_space(std::string_view s);

/// Unicode case folding (full folding, via ICU).
std::string casefold(std::string_view s);

/// NFC-normalized, case-folded, whitespace-collapsed form.
std::string normalize_title(std::string_view s);

/// Key used to match a model-produced title against a corpus title:
/// normalize_title plus removal of trailing punctuation.
std::string title_key(std::string_view s);

/// Canonical ingredient / tag form: case-fold, trim, collapse whitespace.
std::string canonical_name(std::string_view s);

/// Canonical nutrient key: case-fold, trim, whitespace runs become '_'.
std::string canonical_nutrient(std::string_view s);

/// Inverse surface form of a canonical nutrient key ('_' becomes ' ').
std::string nutrient_surface(std::string_view canonical);

/// Shortest decimal string that round-trips to the same double.
std::string format_number(double v);

/// Parses an entire string as a finite decimal number.
std::optional<double> parse_number(std::string_view s);

std::vector<std::string> split(std::string_view s, std::string_view sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);

/// JSON string literal (with quotes) for `s`.
std::string quote(std::string_view s);

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// FNV-1a 64-bit hash; stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view s);

}  // namespace kerl::text
