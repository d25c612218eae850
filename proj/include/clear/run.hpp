#pragma once

// Run directories and archives.
//
// A run directory holds
//   manifest.json        index of everything below plus the effective config
//   scenario.json        the script, CSV paths rewritten to sources/
//   sources/<name>.csv   copies of CSV sources
//   events.ndjson        one event per line
//   snapshots/v<n>.clrw  weights of version n
//   snapshots/v<n>.json  scaler record, thresholds and cause of version n
//   report.{json,csv,txt}
// An archive is a ustar tar of those files.

#include <clear/orchestrator.hpp>
#include <clear/scenario.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace clear::run {

using json = nlohmann::json;

class RunWriter {
public:
    // Creates the directory and writes scenario.json and source copies.
    RunWriter(std::string dir, const scenario::Script& script, const orch::Config& config);

    // Appends the event and writes snapshot files for new versions.
    void record(const orch::Instance& instance, const orch::Event& event);
    // Writes reports and the manifest. `checkpoint` names the checkpoint
    // this flush belongs to; nullopt marks a finished run.
    void flush(const orch::Instance& instance, const std::optional<std::string>& checkpoint);

    const std::string& dir() const noexcept { return dir_; }

private:
    std::string dir_;
    orch::Config config_;
    std::vector<std::string> source_files_;
    std::vector<json> snapshots_;
    std::ofstream events_;
};

struct RunSummary {
    std::uint64_t events = 0;
    std::size_t versions = 0;
    std::size_t updates = 0;
    metrics::EvalReport report;
};

// Runs a script to completion, writing a run directory.
RunSummary run_scenario(const scenario::Script& script, const std::string& out_dir, scenario::RunOptions options = {});

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// ustar archives of regular files.
using Files = std::map<std::string, std::string>;
std::string write_tar(const Files& files);
Files read_tar(const std::string& bytes);

// Packs a run directory; an incomplete manifest is an io error listing the
// missing files.
void export_run(const std::string& run_dir, const std::string& archive_path);
Files load_archive(const std::string& archive_path);

struct ReplayReport {
    std::size_t archived_events = 0;
    std::size_t replayed_events = 0;
    bool events_match = false;
    std::optional<std::uint64_t> first_mismatch;  // seq of the first differing event
    std::size_t snapshots_checked = 0;
    bool snapshots_match = false;
    json state;
};

// Rebuilds the instance from the archived command log and compares events
// (wall-clock fields removed) and version snapshots with the archive.
ReplayReport replay_files(const Files& files);
ReplayReport replay_archive(const std::string& archive_path);

json to_json(const ReplayReport& report);

}  // namespace clear::run
