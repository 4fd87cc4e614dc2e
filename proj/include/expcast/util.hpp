#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace expcast {

// Fixed 4-decimal rendering used everywhere numbers enter prompt or report text.
// Keeps prompt assembly byte-deterministic.
std::string fmt4(double v);

// Render a vector as "a, b, c" with fmt4 per element.
std::string join_fmt4(const std::vector<double>& values);

// FNV-1a 64-bit over bytes. Stable across platforms; used for prompt digests
// and the hashed token-frequency space.
std::uint64_t fnv1a64(std::string_view data);

std::string to_lower(std::string_view s);

// Lowercased word tokens: maximal runs of [a-z0-9].
std::vector<std::string> word_tokens(std::string_view text);

// Parse a full string as a finite double; returns false on trailing garbage,
// empty input, or non-finite result.
bool parse_finite_double(std::string_view token, double& out);

void log_warn(const std::string& msg);
void log_info(const std::string& msg);

} // namespace expcast
