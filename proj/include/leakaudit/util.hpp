#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

namespace leakaudit {

using json = nlohmann::json;

std::string sha256_hex(std::string_view bytes);
// Stable 64-bit FNV-1a; used wherever a platform-independent hash is needed.
std::uint64_t fnv1a64(std::string_view bytes);

std::string trim(std::string_view text);
// Trims and collapses every run of ASCII whitespace to one space.
std::string collapse_whitespace(std::string_view text);
std::string to_lower(std::string_view text);

// Replaces every "{name}" whose name is a key of `values`, in a single left-to-right pass, so
// substituted text is never expanded again. Other braces are left untouched.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& values);

std::string read_file(const std::filesystem::path& path);
// Writes through a sibling temp file and renames, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Newline-delimited JSON. Blank lines are skipped; `on_record` gets the 1-based line number.
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(const json&, std::size_t line)>& on_record);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

// Runs fn(i) for i in [0, n) on at most `workers` threads. The first exception thrown is rethrown
// after all workers finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace leakaudit
