#include <clear/run.hpp>
#include <clear/scenario.hpp>

#include <doctest.h>

#include <filesystem>
#include <unistd.h>

using namespace clear;
using namespace clear::scenario;
namespace fs = std::filesystem;

namespace {

json base_script() {
    return {{"seed", 7},
            {"config",
             {{"novelty_capacity", 16},
              {"pretrain", {{"epochs", 30}}},
              {"strategy", {{"kind", "naive"}, {"train", {{"epochs", 5}}}}}}},
            {"sources", {{"main", {{"type", "synthetic"}, {"targets", {"y", "y2"}}}}}},
            {"pretrain", {{"source", "main"}, {"count", 200}}},
            {"events",
             {{{"type", "stream_segment"}, {"count", 100}},
              {{"type", "drift"}, {"kind", "abrupt_mapping"}, {"onset", 0}, {"target", "y"}},
              {{"type", "stream_segment"}, {"count", 100}},
              {{"type", "add_target"}, {"target_id", "y2"}, {"warmup_count", 40}},
              {{"type", "checkpoint"}, {"label", "after-tdi"}},
              {{"type", "stream_segment"}, {"count", 60}}}}};
}

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("clear_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::internal;
}

json stripped(const std::vector<orch::Event>& events) {
    json out = json::array();
    for (const auto& e : events) out.push_back(io::strip_wall_clock(orch::to_json(e)));
    return out;
}

}  // namespace

TEST_CASE("script parsing reports the offending field") {
    auto expect = [](json doc, const std::string& fragment) {
        try {
            parse_script(doc);
            FAIL("expected a validation error for " << fragment);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::validation);
            CHECK(std::string(e.what()).find(fragment) != std::string::npos);
        }
    };
    auto doc = base_script();
    doc["events"] = json::array({{{"type", "checkpoint"}}});
    expect(doc, "stream_segment");

    doc = base_script();
    doc["events"][0]["source"] = "nowhere";
    expect(doc, "events[0].source");

    doc = base_script();
    doc["events"][1]["kind"] = "sideways";
    expect(doc, "events[1].kind");

    doc = base_script();
    doc["events"][2]["type"] = "pause";
    expect(doc, "events[2].type");

    doc = base_script();
    doc["config"]["seed"] = 3;
    expect(doc, "config");

    doc = base_script();
    doc["sources"]["csv"] = {{"type", "csv"}, {"path", "x.csv"}, {"schema", "wind"}};
    doc["events"][1]["source"] = "csv";
    expect(doc, "only synthetic sources can drift");

    doc = base_script();
    doc["extra"] = 1;
    expect(doc, "extra");

    CHECK(kind_of([] { load_script("/nonexistent/scenario.json"); }) == ErrorKind::io);
}

TEST_CASE("targets default to the pretraining source minus later additions") {
    Runner runner(parse_script(base_script()));
    CHECK(runner.config().targets == std::vector<std::string>{"y"});
    CHECK(runner.config().feature_names.size() == 7);
    CHECK(runner.config().seed == 7);
}

TEST_CASE("add_target after 500 samples lands at position 501") {
    auto doc = base_script();
    doc["events"] = {{{"type", "stream_segment"}, {"count", 500}},
                     {{"type", "add_target"}, {"target_id", "y2"}, {"warmup_count", 10}},
                     {{"type", "stream_segment"}, {"count", 5}}};
    Runner runner(parse_script(doc), RunOptions{true});
    runner.run();
    const auto& events = runner.instance().events();
    auto added = std::find_if(events.begin(), events.end(), [](const auto& e) { return e.type == "target_added"; });
    REQUIRE(added != events.end());
    CHECK(added->position == 501);
    CHECK(runner.instance().ingested() == 505);
}

TEST_CASE("a duplicate add_target is a scenario error at its event index") {
    auto doc = base_script();
    doc["events"] = {{{"type", "stream_segment"}, {"count", 3}},
                     {{"type", "add_target"}, {"target_id", "y2"}},
                     {{"type", "add_target"}, {"target_id", "y2"}}};
    Runner runner(parse_script(doc));
    try {
        runner.run();
        FAIL("expected scenario error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::scenario);
        CHECK(std::string(e.what()).rfind("event 2 (add_target)", 0) == 0);
    }
}

TEST_CASE("an exhausted CSV source is a scenario error") {
    json doc{{"seed", 1},
             {"config", {{"pretrain", {{"epochs", 5}}}}},
             {"sources", {{"wind", {{"type", "csv"}, {"path", "wind.csv"}, {"schema", "wind"}}}}},
             {"pretrain", {{"count", 20}}},
             {"events", {{{"type", "stream_segment"}, {"count", 20}}}}};
    Runner runner(parse_script(doc, CLEAR_FIXTURE_DIR));
    CHECK(runner.config().targets == std::vector<std::string>{"power"});
    try {
        runner.run();
        FAIL("expected scenario error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::scenario);
        CHECK(std::string(e.what()).find("ran out after 30") != std::string::npos);
        CHECK(runner.instance().ingested() == 10);
    }
}

TEST_CASE("drift marks the log and updates follow the onset") {
    Runner runner(parse_script(base_script()), RunOptions{true});
    runner.run();
    const auto& events = runner.instance().events();
    auto drift = std::find_if(events.begin(), events.end(), [](const auto& e) { return e.type == "annotation"; });
    REQUIRE(drift != events.end());
    CHECK(drift->payload.at("details").at("absolute_onset") == 300);
    CHECK(drift->position == 101);
    const auto triggered = std::count_if(drift, events.end(), [](const auto& e) { return e.type == "update_triggered"; });
    CHECK(triggered >= 1);
}

TEST_CASE("the same script and seed replay to identical logs") {
    Runner a(parse_script(base_script()), RunOptions{true});
    Runner b(parse_script(base_script()), RunOptions{true});
    a.run();
    b.run();
    CHECK(stripped(a.instance().events()) == stripped(b.instance().events()));
    CHECK(nn::snapshot(a.instance().model()) == nn::snapshot(b.instance().model()));
}

TEST_CASE("tar archives round-trip") {
    run::Files files{{"a.txt", "hello"}, {"dir/b.bin", std::string(1000, '\0') + "x"}, {"empty", ""}};
    const auto bytes = run::write_tar(files);
    CHECK(bytes.size() % 512 == 0);
    CHECK(run::read_tar(bytes) == files);
    auto corrupt = bytes;
    corrupt[10] ^= 1;
    CHECK(kind_of([&] { run::read_tar(corrupt); }) == ErrorKind::parse);
    CHECK(kind_of([&] { run::write_tar({{std::string(120, 'n'), "x"}}); }) == ErrorKind::argument);
}

TEST_CASE("a run directory exports and replays bit for bit") {
    TempDir tmp;
    const auto script = parse_script(base_script());
    const auto summary = run::run_scenario(script, tmp / "run", RunOptions{true});
    for (const char* f : {"manifest.json", "scenario.json", "events.ndjson", "report.csv", "report.txt", "report.json",
                          "snapshots/v1.clrw", "snapshots/v1.json"}) {
        CHECK_MESSAGE(fs::exists(tmp / (std::string("run/") + f)), f);
    }
    const auto csv = run::read_file(tmp / "run/report.csv");
    CHECK(csv.find("block,updates_accepted") == 0);
    CHECK(csv.find("\np_y2,") != std::string::npos);

    run::export_run(tmp / "run", tmp / "run.tar");
    const auto replay = run::replay_archive(tmp / "run.tar");
    CHECK(replay.events_match);
    CHECK(replay.archived_events == summary.events);
    CHECK(replay.snapshots_checked == summary.versions);
    CHECK(replay.snapshots_match);

    // A second run gives the same report apart from wall-clock columns.
    run::run_scenario(script, tmp / "again", RunOptions{true});
    CHECK(io::strip_wall_clock(io::parse(run::read_file(tmp / "run/report.json"))) ==
          io::strip_wall_clock(io::parse(run::read_file(tmp / "again/report.json"))));
}

TEST_CASE("an archive exported at a checkpoint replays to the checkpoint state") {
    TempDir tmp;
    const auto script = parse_script(base_script());
    Runner runner(script, RunOptions{true});
    run::RunWriter writer(tmp / "run", script, runner.config());
    auto& inst = runner.instance();
    inst.set_listener([&](const orch::Event& e) { writer.record(inst, e); });
    json at_checkpoint;
    runner.on_checkpoint([&](const std::string& label) {
        writer.flush(inst, label);
        run::export_run(tmp / "run", tmp / "mid.tar");
        at_checkpoint = inst.state();
    });
    runner.run();
    writer.flush(inst, std::nullopt);

    const auto replay = run::replay_archive(tmp / "mid.tar");
    CHECK(replay.events_match);
    CHECK(replay.archived_events < inst.events().size());
    CHECK(io::strip_wall_clock(replay.state) == io::strip_wall_clock(at_checkpoint));
    const auto manifest = io::parse(run::load_archive(tmp / "mid.tar").at("manifest.json"));
    CHECK(manifest.at("checkpoint") == "after-tdi");
    CHECK(manifest.at("complete") == false);
}

TEST_CASE("export fails on an incomplete manifest and names the missing files") {
    TempDir tmp;
    run::run_scenario(parse_script(base_script()), tmp / "run", RunOptions{true});
    fs::remove(tmp / "run/snapshots/v2.clrw");
    try {
        run::export_run(tmp / "run", tmp / "run.tar");
        FAIL("expected export error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::io);
        CHECK(std::string(e.what()).find("snapshots/v2.clrw") != std::string::npos);
    }
    CHECK_FALSE(fs::exists(tmp / "run.tar"));
}

TEST_CASE("CSV sources are copied into the run so archives stand alone") {
    TempDir tmp;
    json doc{{"seed", 2},
             {"config", {{"novelty_capacity", 4}, {"pretrain", {{"epochs", 5}}}}},
             {"sources", {{"wind", {{"type", "csv"}, {"path", "wind.csv"}, {"schema", "wind"}}}}},
             {"pretrain", {{"count", 15}}},
             {"events", {{{"type", "stream_segment"}, {"count", 15}}}}};
    const auto summary = run::run_scenario(parse_script(doc, CLEAR_FIXTURE_DIR), tmp / "run");
    CHECK(fs::exists(tmp / "run/sources/wind.csv"));
    const auto scenario = io::parse(run::read_file(tmp / "run/scenario.json"));
    CHECK(scenario.at("sources").at("wind").at("path") == "sources/wind.csv");
    // The copied script runs from inside the run directory.
    CHECK_NOTHROW(Runner(load_script(tmp / "run/scenario.json")).run());

    run::export_run(tmp / "run", tmp / "run.tar");
    CHECK(run::replay_archive(tmp / "run.tar").events_match);
    CHECK(summary.events > 0);
}
