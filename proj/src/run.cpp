#include <clear/run.hpp>

#include <cstring>
#include <filesystem>
#include <sstream>

namespace clear::run {

namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot read '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
    out << content;
    if (!out) throw Error(ErrorKind::io, "write to '" + path + "' failed");
}

namespace {

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

json version_meta(const orch::Version& v) {
    json thresholds = json::object();
    for (const auto& [id, t] : v.thresholds) thresholds[id] = io::to_json(t);
    return {{"version", v.number},
            {"position", v.position},
            {"cause", v.cause},
            {"update_id", v.update_id ? json(*v.update_id) : json(nullptr)},
            {"architecture", v.weights.architecture},
            {"scaler", v.scaler.to_record()},
            {"thresholds", thresholds}};
}

}  // namespace

RunWriter::RunWriter(std::string dir, const scenario::Script& script, const orch::Config& config)
    : dir_(std::move(dir)), config_(config) {
    std::error_code ec;
    fs::create_directories(join(dir_, "snapshots"), ec);
    if (ec) throw Error(ErrorKind::io, "cannot create '" + dir_ + "': " + ec.message());

    json document = script.document;
    for (const auto& s : script.sources) {
        const auto* csv = std::get_if<scenario::CsvSource>(&s.kind);
        if (!csv) continue;
        fs::create_directories(join(dir_, "sources"));
        const std::string name = "sources/" + s.name + ".csv";
        write_file(join(dir_, name), read_file(csv->resolved_path));
        document["sources"][s.name]["path"] = name;
        source_files_.push_back(name);
    }
    write_file(join(dir_, "scenario.json"), document.dump(2) + "\n");

    events_.open(join(dir_, "events.ndjson"), std::ios::binary | std::ios::trunc);
    if (!events_) throw Error(ErrorKind::io, "cannot write '" + join(dir_, "events.ndjson") + "'");
}

void RunWriter::record(const orch::Instance& instance, const orch::Event& event) {
    events_ << orch::to_json(event).dump() << '\n';
    if (event.type != "version_created") return;
    const auto& v = instance.versions().back();
    const std::string stem = "snapshots/v" + std::to_string(v.number);
    nn::save_snapshot(join(dir_, stem + ".clrw"), v.weights);
    write_file(join(dir_, stem + ".json"), version_meta(v).dump(2) + "\n");
    snapshots_.push_back({{"version", v.number}, {"weights", stem + ".clrw"}, {"meta", stem + ".json"}});
}

void RunWriter::flush(const orch::Instance& instance, const std::optional<std::string>& checkpoint) {
    events_.flush();
    if (!events_) throw Error(ErrorKind::io, "writing events.ndjson failed");
    json reports = nullptr;
    if (instance.pretrained()) {
        const auto report = instance.report();
        write_file(join(dir_, "report.json"), io::to_json(report).dump(2) + "\n");
        write_file(join(dir_, "report.csv"), metrics::to_csv(report));
        write_file(join(dir_, "report.txt"), metrics::to_text(report));
        reports = {{"json", "report.json"}, {"csv", "report.csv"}, {"text", "report.txt"}};
    }
    json manifest{{"format", "clear-run"},
                  {"format_version", 1},
                  {"scenario", "scenario.json"},
                  {"events", "events.ndjson"},
                  {"event_count", instance.events().size()},
                  {"last_seq", instance.last_event_seq()},
                  {"config", orch::to_json(config_)},
                  {"snapshots", snapshots_},
                  {"reports", reports},
                  {"sources", source_files_},
                  {"checkpoint", checkpoint ? json(*checkpoint) : json(nullptr)},
                  {"complete", !checkpoint.has_value()}};
    write_file(join(dir_, "manifest.json"), manifest.dump(2) + "\n");
}

RunSummary run_scenario(const scenario::Script& script, const std::string& out_dir, scenario::RunOptions options) {
    scenario::Runner runner(script, options);
    RunWriter writer(out_dir, script, runner.config());
    auto& inst = runner.instance();
    inst.set_listener([&](const orch::Event& e) { writer.record(inst, e); });
    runner.on_checkpoint([&](const std::string& label) { writer.flush(inst, label); });
    runner.run();
    writer.flush(inst, std::nullopt);
    return {inst.last_event_seq(), inst.versions().size(), inst.updates().size(), inst.report()};
}

namespace {

constexpr std::size_t block = 512;

void put_octal(char* field, std::size_t width, std::uint64_t value) {
    std::snprintf(field, width, "%0*llo", static_cast<int>(width - 1), static_cast<unsigned long long>(value));
}

std::uint64_t get_octal(const char* field, std::size_t width) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width && field[i]; ++i) {
        if (field[i] == ' ') continue;
        if (field[i] < '0' || field[i] > '7') throw Error(ErrorKind::parse, "corrupt tar header");
        v = v * 8 + static_cast<std::uint64_t>(field[i] - '0');
    }
    return v;
}

unsigned checksum(const char* header) {
    unsigned sum = 0;
    for (std::size_t i = 0; i < block; ++i) {
        sum += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(header[i]);
    }
    return sum;
}

}  // namespace

std::string write_tar(const Files& files) {
    std::string out;
    for (const auto& [name, content] : files) {
        if (name.empty() || name.size() > 99) throw Error(ErrorKind::argument, "tar member name too long: " + name);
        char header[block] = {};
        std::memcpy(header, name.data(), name.size());
        put_octal(header + 100, 8, 0644);
        put_octal(header + 108, 8, 0);
        put_octal(header + 116, 8, 0);
        put_octal(header + 124, 12, content.size());
        put_octal(header + 136, 12, 0);  // fixed mtime keeps archives reproducible
        header[156] = '0';
        std::memcpy(header + 257, "ustar", 6);
        std::memcpy(header + 263, "00", 2);
        std::snprintf(header + 148, 8, "%06o", checksum(header));
        header[155] = ' ';
        out.append(header, block);
        out += content;
        out.append((block - content.size() % block) % block, '\0');
    }
    out.append(2 * block, '\0');
    return out;
}

Files read_tar(const std::string& bytes) {
    Files files;
    std::size_t at = 0;
    while (at + block <= bytes.size()) {
        const char* header = bytes.data() + at;
        if (std::all_of(header, header + block, [](char c) { return c == 0; })) return files;
        if (get_octal(header + 148, 8) != checksum(header)) throw Error(ErrorKind::parse, "tar header checksum mismatch");
        std::string name(header, strnlen(header, 100));
        const std::string prefix(header + 345, strnlen(header + 345, 155));
        if (!prefix.empty()) name = prefix + "/" + name;
        const auto size = get_octal(header + 124, 12);
        at += block;
        if (at + size > bytes.size()) throw Error(ErrorKind::parse, "truncated tar member '" + name + "'");
        const char type = header[156];
        if (type == '0' || type == '\0') files[name] = bytes.substr(at, size);
        at += (size + block - 1) / block * block;
    }
    throw Error(ErrorKind::parse, "tar archive lacks its end marker");
}

namespace {

std::vector<std::string> manifest_files(const json& manifest) {
    std::vector<std::string> names{"manifest.json"};
    auto add = [&](const json& v) {
        if (v.is_string()) names.push_back(v.get<std::string>());
    };
    add(manifest.value("scenario", json()));
    add(manifest.value("events", json()));
    for (const auto& s : manifest.value("snapshots", json::array())) {
        add(s.value("weights", json()));
        add(s.value("meta", json()));
    }
    const auto reports = manifest.value("reports", json());
    if (reports.is_object()) {
        for (const auto& [k, v] : reports.items()) add(v);
    }
    for (const auto& s : manifest.value("sources", json::array())) add(s);
    return names;
}

}  // namespace

void export_run(const std::string& run_dir, const std::string& archive_path) {
    const auto manifest = io::parse(read_file(join(run_dir, "manifest.json")));
    if (!manifest.is_object() || manifest.value("format", "") != "clear-run") {
        throw Error(ErrorKind::parse, "'" + run_dir + "' does not hold a run manifest");
    }
    Files files;
    std::vector<std::string> missing;
    for (const auto& name : manifest_files(manifest)) {
        const auto path = join(run_dir, name);
        if (!fs::is_regular_file(path)) {
            missing.push_back(name);
            continue;
        }
        files[name] = read_file(path);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw Error(ErrorKind::io, "incomplete manifest, missing: " + list);
    }
    write_file(archive_path, write_tar(files));
}

Files load_archive(const std::string& archive_path) { return read_tar(read_file(archive_path)); }

ReplayReport replay_files(const Files& files) {
    auto file = [&](const std::string& name) -> const std::string& {
        auto it = files.find(name);
        if (it == files.end()) throw Error(ErrorKind::io, "archive lacks '" + name + "'");
        return it->second;
    };
    const auto manifest = io::parse(file("manifest.json"));
    const auto config = orch::config_from_json(manifest.at("config"));

    std::vector<orch::Event> archived;
    std::istringstream lines(file(manifest.at("events").get<std::string>()));
    for (std::string line; std::getline(lines, line);) {
        if (!line.empty()) archived.push_back(orch::event_from_json(io::parse(line)));
    }

    const auto inst = orch::Instance::replay(config, archived);
    ReplayReport r;
    r.archived_events = archived.size();
    r.replayed_events = inst.events().size();
    const auto n = std::min(archived.size(), inst.events().size());
    for (std::size_t i = 0; i < n && !r.first_mismatch; ++i) {
        if (io::strip_wall_clock(orch::to_json(archived[i])) != io::strip_wall_clock(orch::to_json(inst.events()[i]))) {
            r.first_mismatch = archived[i].seq;
        }
    }
    if (!r.first_mismatch && archived.size() != inst.events().size()) r.first_mismatch = n + 1;
    r.events_match = !r.first_mismatch;

    r.snapshots_match = true;
    for (const auto& s : manifest.value("snapshots", json::array())) {
        const auto v = s.at("version").get<std::size_t>();
        std::istringstream in(file(s.at("weights").get<std::string>()));
        const auto snap = nn::read_snapshot(in);
        ++r.snapshots_checked;
        if (v == 0 || v > inst.versions().size() || !(inst.versions()[v - 1].weights == snap)) {
            r.snapshots_match = false;
        }
    }
    r.state = inst.state();
    return r;
}

ReplayReport replay_archive(const std::string& archive_path) { return replay_files(load_archive(archive_path)); }

json to_json(const ReplayReport& r) {
    return {{"archived_events", r.archived_events},
            {"replayed_events", r.replayed_events},
            {"events_match", r.events_match},
            {"first_mismatch", r.first_mismatch ? json(*r.first_mismatch) : json(nullptr)},
            {"snapshots_checked", r.snapshots_checked},
            {"snapshots_match", r.snapshots_match},
            {"state", r.state}};
}

}  // namespace clear::run
