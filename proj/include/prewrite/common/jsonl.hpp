#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace prewrite {

using json = nlohmann::json;

/// Compact single-line dump; invalid UTF-8 is replaced rather than thrown on.
std::string dump_line(const json& j);

/// Reads every non-blank line as a JSON value. Missing file yields an empty
/// list; unreadable or malformed content throws Error(kIoFailure).
std::vector<json> read_jsonl(const std::filesystem::path& path);

void append_jsonl(const std::filesystem::path& path, const json& record);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

/// Timestamp source for persisted records and audit entries.
using Clock = std::function<std::string()>;

/// UTC wall clock, ISO-8601 with milliseconds.
Clock system_clock();

/// Deterministic clock for reproducible runs: returns a fixed epoch date with
/// a monotonically increasing sequence suffix.
Clock logical_clock();

}  // namespace prewrite
