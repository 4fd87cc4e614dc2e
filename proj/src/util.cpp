#include "expcast/util.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>

namespace expcast {

std::string fmt4(double v) {
    char buf[512];  // %.4f of the largest double needs ~316 chars
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string join_fmt4(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += fmt4(values[i]);
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char raw : text) {
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

bool parse_finite_double(std::string_view token, double& out) {
    if (token.empty()) return false;
    std::string owned(token);
    char* end = nullptr;
    double v = std::strtod(owned.c_str(), &end);
    if (end != owned.c_str() + owned.size()) return false;
    if (!std::isfinite(v)) return false;
    out = v;
    return true;
}

void log_warn(const std::string& msg) { std::cerr << "[warn] " << msg << "\n"; }
void log_info(const std::string& msg) { std::cerr << "[info] " << msg << "\n"; }

} // namespace expcast
