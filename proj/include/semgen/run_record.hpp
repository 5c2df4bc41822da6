#pragma once

// Every CLI run drops exactly one run_record.json into its output directory:
// what ran, with which config and seed, when, and which artifacts it wrote.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace semgen {

struct RunRecord {
    std::string command;
    std::string config_hash;
    uint64_t seed = 0;
    std::string started_at;  // ISO 8601 UTC
    std::string finished_at; // ISO 8601 UTC
    std::vector<std::string> artifacts; // paths relative to the output directory
};

std::string iso8601_utc_now();

std::string run_record_to_json_text(const RunRecord& record);
RunRecord run_record_from_json_text(const std::string& text);

// writes <out_dir>/run_record.json (replacing any previous record, so the
// directory always holds exactly one)
void save_run_record(const RunRecord& record, const std::filesystem::path& out_dir);
RunRecord load_run_record(const std::filesystem::path& out_dir);

} // namespace semgen
