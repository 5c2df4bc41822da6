#include "semgen/run_record.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "semgen/errors.hpp"

namespace semgen {

using nlohmann::json;

std::string iso8601_utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::string run_record_to_json_text(const RunRecord& record) {
    return json{{"command", record.command},
                {"config_hash", record.config_hash},
                {"seed", record.seed},
                {"started_at", record.started_at},
                {"finished_at", record.finished_at},
                {"artifacts", record.artifacts}}
        .dump(2);
}

RunRecord run_record_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("run record: invalid JSON: " + std::string(e.what()));
    }
    RunRecord record;
    try {
        record.command = j.at("command").get<std::string>();
        record.config_hash = j.at("config_hash").get<std::string>();
        record.seed = j.at("seed").get<uint64_t>();
        record.started_at = j.at("started_at").get<std::string>();
        record.finished_at = j.at("finished_at").get<std::string>();
        record.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ValidationError("run record: missing or mistyped field: " + std::string(e.what()));
    }
    return record;
}

void save_run_record(const RunRecord& record, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const auto path = out_dir / "run_record.json";
    std::ofstream out(path);
    if (!out) throw RunError("save_run_record: cannot open " + path.string() + " for writing");
    out << run_record_to_json_text(record) << '\n';
    if (!out) throw RunError("save_run_record: write failed for " + path.string());
}

RunRecord load_run_record(const std::filesystem::path& out_dir) {
    const auto path = out_dir / "run_record.json";
    std::ifstream in(path);
    if (!in) throw RunError("load_run_record: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return run_record_from_json_text(ss.str());
}

} // namespace semgen
