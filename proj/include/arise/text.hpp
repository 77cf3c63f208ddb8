#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace arise {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

// Trim plus ASCII case folding. Class names and aliases are ASCII.
std::string fold(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with_ci(std::string_view s, std::string_view prefix);

// 128 bits from the OS entropy source, hex encoded (32 chars).
std::string random_id_128();

// FNV-1a 64-bit, hex encoded. Used for prompt/response digests in traces.
std::string digest_hex(std::string_view s);

Timestamp now_utc();
std::string format_timestamp(Timestamp t);  // 2026-10-16T08:01:02.345Z
Timestamp parse_timestamp(std::string_view s);

struct FrontMatter {
    std::map<std::string, std::string> fields;
    std::string body;
};

// "---\nkey: value\n...\n---\nbody". Throws std::invalid_argument when the
// header is missing or unterminated.
FrontMatter parse_front_matter(std::string_view text);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace arise
