// Exercises the shared library through its C interface only.

#include <clear/clear.h>

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <thread>
#include <unistd.h>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json script() {
    return {{"seed", 3},
            {"config",
             {{"novelty_capacity", 8},
              {"auto_policy", {{"enabled", false}}},
              {"pretrain", {{"epochs", 20}}},
              {"strategy", {{"kind", "naive"}, {"train", {{"epochs", 5}}}}}}},
            {"sources", {{"main", {{"type", "synthetic"}, {"targets", {"y"}}}}}},
            {"pretrain", {{"count", 120}}},
            {"events", {{{"type", "stream_segment"}, {"count", 40}}}}};
}

struct Engine {
    clr_engine* handle = nullptr;
    explicit Engine(json options) {
        const auto text = options.dump();
        REQUIRE_MESSAGE(clr_engine_create(text.c_str(), &handle) == CLR_OK, clr_last_error());
    }
    ~Engine() { clr_engine_destroy(handle); }

    std::pair<int, json> call(const char* method, const char* path, const json& body = nullptr,
                              const char* query = nullptr) {
        int status = 0;
        char* out = nullptr;
        const std::string text = body.is_null() ? "" : body.dump();
        REQUIRE(clr_engine_request(handle, method, path, query, body.is_null() ? nullptr : text.c_str(), &status,
                                   &out) == CLR_OK);
        auto parsed = json::parse(out);
        clr_string_free(out);
        return {status, parsed};
    }
    json events(std::uint64_t from, std::uint32_t limit, std::uint32_t wait_ms = 0) {
        char* out = nullptr;
        REQUIRE(clr_engine_wait_events(handle, from, limit, wait_ms, &out) == CLR_OK);
        auto parsed = json::parse(out);
        clr_string_free(out);
        return parsed;
    }
};

json sample(std::mt19937_64& rng, std::size_t width = 7) {
    std::uniform_real_distribution<double> u(0.2, 0.8);
    json x = json::array();
    for (std::size_t i = 0; i < width; ++i) x.push_back(u(rng));
    return {{"timestamp", "2024-03-01T00:00:00Z"}, {"x", x}, {"y", {{"y", u(rng)}}}};
}

json zero_thresholds() {
    return {{"blocks", {{"a", {{"threshold", 0.0}}}, {"p_y", {{"threshold", 0.0}}}}}};
}

struct TempDir {
    fs::path path = fs::temp_directory_path() / ("clear_capi_" + std::to_string(::getpid()));
    TempDir() { fs::create_directories(path); }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("argument and status plumbing") {
    CHECK(std::string(clr_version()) == "0.1.0");
    CHECK(std::string(clr_status_name(CLR_ERR_CONFLICT)) == "conflict");
    CHECK(std::string(clr_status_name(static_cast<clr_status>(99))) == "unknown");
    clr_engine* e = nullptr;
    CHECK(clr_engine_create(nullptr, &e) == CLR_ERR_ARGUMENT);
    CHECK(std::string(clr_last_error()).find("NULL") != std::string::npos);
    CHECK(clr_engine_create("{", &e) == CLR_ERR_PARSE);
    CHECK(clr_engine_create("{\"scenario\": \"/no/such/file.json\"}", &e) == CLR_ERR_IO);
    CHECK(e == nullptr);
    CHECK(clr_engine_create("{\"scenario\": {}, \"bogus\": 1}", &e) == CLR_ERR_VALIDATION);
    CHECK(std::string(clr_last_error()).find("bogus") != std::string::npos);
    clr_engine_destroy(nullptr);
}

TEST_CASE("GET /state on a fresh engine") {
    Engine engine(json{{"scenario", script()}});
    auto [status, state] = engine.call("GET", "/state");
    CHECK(status == 200);
    CHECK(state.at("mode") == "running");
    CHECK(state.at("version") == 1);
    for (const auto& b : state.at("blocks")) CHECK(b.at("novelty").at("fill") == 0);
    CHECK(state.at("scenario").at("done") == false);

    CHECK(engine.call("GET", "/nowhere").first == 404);
    CHECK(engine.call("POST", "/state").first == 405);
    CHECK(engine.call("GET", "/metrics").first == 200);
}

TEST_CASE("POST /ingest validates payloads field by field") {
    Engine engine(json{{"scenario", script()}});
    std::mt19937_64 rng(1);
    auto [ok, body] = engine.call("POST", "/ingest", sample(rng));
    CHECK(ok == 200);
    CHECK(body.at("ingested") == 1);

    auto bad = sample(rng);
    bad["x"][2] = "high";
    auto [status, err] = engine.call("POST", "/ingest", bad);
    CHECK(status == 400);
    CHECK(err.at("error").at("field").get<std::string>().rfind("x", 0) == 0);

    auto [wide, werr] = engine.call("POST", "/ingest", sample(rng, 9));
    CHECK(wide == 400);
    CHECK(werr.at("error").at("kind") == "shape");

    auto [batch, bbody] = engine.call("POST", "/ingest", {{"samples", {sample(rng), sample(rng, 3), sample(rng)}}});
    CHECK(batch == 400);
    CHECK(bbody.at("ingested") == 1);
    CHECK(engine.call("GET", "/state").second.at("ingested") == 2);

    int status_code = 0;
    char* out = nullptr;
    REQUIRE(clr_engine_request(engine.handle, "POST", "/ingest", nullptr, "not json", &status_code, &out) == CLR_OK);
    CHECK(status_code == 400);
    clr_string_free(out);
}

TEST_CASE("operator decisions through the API") {
    Engine engine(json{{"scenario", script()}, {"auto_policy", false}});
    std::mt19937_64 rng(2);
    CHECK(engine.call("PATCH", "/hyperparameters", zero_thresholds()).first == 200);
    for (int i = 0; i < 8; ++i) engine.call("POST", "/ingest", sample(rng));

    auto state = engine.call("GET", "/state").second;
    REQUIRE(state.at("mode") == "awaiting_decision");
    const auto id = state.at("pending_update").at("update_id").get<int>();
    const auto result = state.at("pending_update").at("result");
    CHECK(result.contains("novel_before"));
    CHECK(result.contains("forgetting_ratio"));

    CHECK(engine.call("POST", "/rollback", {{"version", 1}}).first == 409);
    auto [accepted, summary] = engine.call("POST", "/decisions", {{"update_id", id}, {"verdict", "accept"}});
    CHECK(accepted == 200);
    state = engine.call("GET", "/state").second;
    CHECK(state.at("version") == 2);
    const auto& a = state.at("blocks")[0];
    CHECK(a.at("novelty").at("fill") == 0);
    CHECK(a.at("familiarity").at("fill") == 0);

    CHECK(engine.call("POST", "/decisions", {{"update_id", id}, {"verdict", "accept"}}).first == 409);
    CHECK(engine.call("POST", "/decisions", {{"update_id", 999}, {"verdict", "reject"}}).first == 404);
    auto [bad, berr] = engine.call("POST", "/decisions", {{"update_id", id}, {"verdict", "maybe"}});
    CHECK(bad == 400);
    CHECK(berr.at("error").at("field") == "verdict");

    // p_y is pending now; reject it, then roll back to the pretrained version.
    state = engine.call("GET", "/state").second;
    const auto second = state.at("pending_update").at("update_id").get<int>();
    CHECK(engine.call("POST", "/decisions", {{"update_id", second}, {"verdict", "reject"}}).first == 200);
    CHECK(engine.call("POST", "/rollback", {{"version", 99}}).first == 404);
    CHECK(engine.call("POST", "/decisions", {{"verdict", "rollback"}, {"version", 1}}).first == 200);
    CHECK(engine.call("GET", "/state").second.at("version") == 3);
}

TEST_CASE("hyperparameter and target endpoints") {
    Engine engine(json{{"scenario", script()}});
    auto [ok, body] = engine.call("PATCH", "/hyperparameters", {{"blocks", {{"p_y", {{"threshold", 0.05}}}}}});
    CHECK(ok == 200);
    CHECK(body.at("changes").size() == 1);

    auto [bad, err] = engine.call("PATCH", "/hyperparameters",
                                  {{"blocks", {{"p_y", {{"strategy", {{"kind", "ewc"}, {"lambda", -1}}}}}}}});
    CHECK(bad == 400);
    CHECK(err.at("error").at("field").get<std::string>().find("lambda") != std::string::npos);
    CHECK(engine.call("PATCH", "/hyperparameters", {{"blocks", {{"zzz", {{"threshold", 1}}}}}}).first == 404);

    std::mt19937_64 rng(3);
    json warmup = json::array();
    for (int i = 0; i < 10; ++i) {
        auto s = sample(rng);
        s["y"]["pv"] = 0.4;
        warmup.push_back(s);
    }
    CHECK(engine.call("POST", "/targets", {{"target_id", "pv"}, {"warmup", warmup}}).first == 201);
    CHECK(engine.call("POST", "/targets", {{"target_id", "pv"}}).first == 409);
    const auto state = engine.call("GET", "/state").second;
    CHECK(state.at("blocks").size() == 3);
    CHECK(state.at("targets") == json({"pv", "y"}));
}

TEST_CASE("event reads resume without gaps or duplicates") {
    Engine engine(json{{"scenario", script()}});
    uint32_t performed = 0;
    REQUIRE(clr_engine_step(engine.handle, 1000, &performed) == CLR_OK);
    CHECK(performed == 40);
    CHECK(clr_engine_feed_done(engine.handle) == 1);

    const auto all = engine.events(1, 10000);
    const auto last = all.at("last_seq").get<std::uint64_t>();
    CHECK(all.at("events").size() == last);
    std::vector<std::uint64_t> seqs;
    for (std::uint64_t from = 1;;) {
        auto page = engine.events(from, 7);
        if (page.at("events").empty()) break;
        for (const auto& e : page.at("events")) seqs.push_back(e.at("seq"));
        from = page.at("next");
    }
    REQUIRE(seqs.size() == last);
    for (std::size_t i = 0; i < seqs.size(); ++i) CHECK(seqs[i] == i + 1);

    // A waiting reader wakes when the next event lands.
    std::thread writer([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        std::mt19937_64 rng(4);
        engine.call("POST", "/ingest", sample(rng));
    });
    const auto waited = engine.events(last + 1, 100, 5000);
    writer.join();
    CHECK(!waited.at("events").empty());
    CHECK(waited.at("events")[0].at("seq") == last + 1);
}

TEST_CASE("slow readers of a small ring are told what they missed") {
    Engine engine(json{{"scenario", script()}, {"ring_capacity", 16}});
    clr_engine_step(engine.handle, 10, nullptr);
    const auto page = engine.events(1, 1000);
    const auto last = page.at("last_seq").get<std::uint64_t>();
    CHECK(page.at("events").size() == 16);
    CHECK(page.at("dropped") == last - 16);
    CHECK(page.at("events")[0].at("seq") == last - 15);
}

TEST_CASE("every state change is announced on the event stream first") {
    Engine engine(json{{"scenario", script()}, {"auto_policy", false}});
    std::mt19937_64 rng(5);
    engine.call("PATCH", "/hyperparameters", zero_thresholds());
    for (int i = 0; i < 12; ++i) {
        auto [status, summary] = engine.call("POST", "/ingest", sample(rng));
        const auto events = engine.events(1, 100000);
        CHECK(events.at("last_seq") == summary.at("last_seq"));
        const auto state = engine.call("GET", "/state").second;
        CHECK(state.at("last_event_seq") == summary.at("last_seq"));
    }
}

TEST_CASE("concurrent requests serialise") {
    Engine engine(json{{"scenario", script()}, {"auto_policy", true}});
    std::vector<std::thread> clients;
    for (int c = 0; c < 4; ++c) {
        clients.emplace_back([&, c] {
            std::mt19937_64 rng(100 + c);
            for (int i = 0; i < 15; ++i) engine.call("POST", "/ingest", sample(rng));
        });
    }
    for (auto& t : clients) t.join();
    const auto state = engine.call("GET", "/state").second;
    CHECK(state.at("ingested") == 60);
    const auto events = engine.events(1, 100000);
    std::uint64_t expected = 1;
    for (const auto& e : events.at("events")) CHECK(e.at("seq") == expected++);
}

TEST_CASE("batch run, export and replay through the C interface") {
    TempDir tmp;
    {
        std::ofstream(tmp / "scenario.json") << script().dump();
    }
    char* summary = nullptr;
    REQUIRE_MESSAGE(clr_run_scenario((tmp / "scenario.json").c_str(), (tmp / "run").c_str(), "{\"auto_policy\": true}",
                                     &summary) == CLR_OK,
                    clr_last_error());
    const auto s = json::parse(summary);
    clr_string_free(summary);
    CHECK(s.at("events").get<int>() > 0);
    CHECK(fs::exists(tmp / "run/report.txt"));

    REQUIRE(clr_export_run((tmp / "run").c_str(), (tmp / "run.tar").c_str()) == CLR_OK);
    char* report = nullptr;
    REQUIRE(clr_replay_archive((tmp / "run.tar").c_str(), &report) == CLR_OK);
    const auto r = json::parse(report);
    clr_string_free(report);
    CHECK(r.at("events_match") == true);
    CHECK(r.at("snapshots_match") == true);

    CHECK(clr_run_scenario((tmp / "missing.json").c_str(), (tmp / "x").c_str(), nullptr, nullptr) == CLR_ERR_IO);
    CHECK(clr_export_run((tmp / "nothing").c_str(), (tmp / "x.tar").c_str()) == CLR_ERR_IO);
}
