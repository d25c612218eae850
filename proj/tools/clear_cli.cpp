// Command-line front end: batch runs, the HTTP service, export and replay.
// Talks to the engine only through the C interface.

#include <clear/clear.h>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

using json = nlohmann::json;

namespace {

std::string take(char* s) {
    std::string out = s ? s : "";
    clr_string_free(s);
    return out;
}

int report_failure(const char* what, clr_status status) {
    std::cerr << "clear: " << what << ": " << clr_status_name(status) << ": " << clr_last_error() << "\n";
    return 1;
}

// Anything that stops the scenario from being loaded counts as unreadable.
bool unreadable(clr_status status) {
    return status == CLR_ERR_IO || status == CLR_ERR_PARSE || status == CLR_ERR_VALIDATION ||
           status == CLR_ERR_SCHEMA;
}

int cmd_run(const std::string& scenario, const std::string& out, bool force_auto) {
    char* summary = nullptr;
    const char* options = force_auto ? "{\"auto_policy\": true}" : nullptr;
    const auto status = clr_run_scenario(scenario.c_str(), out.c_str(), options, &summary);
    if (status != CLR_OK) {
        report_failure("run", status);
        return unreadable(status) ? 2 : 1;
    }
    const auto s = json::parse(take(summary));
    std::ifstream table(out + "/report.txt");
    std::cout << table.rdbuf();
    std::cout << "events " << s.at("events") << ", versions " << s.at("versions") << ", updates " << s.at("updates")
              << "\nrun written to " << out << "\n";
    return 0;
}

int cmd_export(const std::string& run_dir, const std::string& archive) {
    const auto status = clr_export_run(run_dir.c_str(), archive.c_str());
    if (status != CLR_OK) return report_failure("export", status);
    std::cout << "archive written to " << archive << "\n";
    return 0;
}

int cmd_replay(const std::string& archive, bool as_json) {
    char* out = nullptr;
    const auto status = clr_replay_archive(archive.c_str(), &out);
    if (status != CLR_OK) return report_failure("replay", status);
    const auto r = json::parse(take(out));
    const bool ok = r.at("events_match").get<bool>() && r.at("snapshots_match").get<bool>();
    if (as_json) {
        std::cout << r.dump(2) << "\n";
    } else {
        std::cout << "archived events " << r.at("archived_events") << ", replayed " << r.at("replayed_events") << "\n"
                  << "event log " << (r.at("events_match").get<bool>() ? "matches" : "differs") << "\n"
                  << "snapshots checked " << r.at("snapshots_checked") << ", "
                  << (r.at("snapshots_match").get<bool>() ? "all match" : "mismatch") << "\n";
        if (!r.at("first_mismatch").is_null()) std::cout << "first mismatch: " << r.at("first_mismatch").dump() << "\n";
    }
    return ok ? 0 : 1;
}

struct ServeConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string scenario;
    bool manual = false;
    double rate = 10.0;
    std::string out;
    std::size_t ring = 65536;
};

std::string query_string(const httplib::Request& req) {
    std::string q;
    for (const auto& [k, v] : req.params) {
        if (!q.empty()) q += '&';
        q += k + "=" + v;
    }
    return q;
}

void send_json(httplib::Response& res, int status, const std::string& body) {
    res.status = status;
    res.set_content(body, "application/json");
}

// Server-sent events from a starting sequence number. The cursor is taken
// from ?from= or the Last-Event-ID header; missed events are reported as a
// "dropped" message before the stream continues.
void stream_events(clr_engine* engine, const httplib::Request& req, httplib::Response& res,
                   const std::atomic<bool>& stopping) {
    std::uint64_t from = 1;
    if (req.has_header("Last-Event-ID")) from = std::stoull(req.get_header_value("Last-Event-ID")) + 1;
    if (req.has_param("from")) from = std::stoull(req.get_param_value("from"));
    auto cursor = std::make_shared<std::uint64_t>(from);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [engine, cursor, &stopping](std::size_t, httplib::DataSink& sink) {
        if (stopping) {
            sink.done();
            return true;
        }
        char* out = nullptr;
        if (clr_engine_wait_events(engine, *cursor, 500, 1000, &out) != CLR_OK) return false;
        const auto batch = json::parse(take(out));
        std::ostringstream chunk;
        if (batch.at("dropped").get<std::uint64_t>() > 0) {
            chunk << "event: dropped\ndata: " << json{{"count", batch.at("dropped")}}.dump() << "\n\n";
        }
        for (const auto& e : batch.at("events")) {
            chunk << "id: " << e.at("seq") << "\nevent: " << e.at("type").get<std::string>() << "\ndata: " << e.dump()
                  << "\n\n";
        }
        if (batch.at("events").empty()) chunk << ": keep-alive\n\n";
        *cursor = batch.at("next").get<std::uint64_t>();
        const auto text = chunk.str();
        return sink.write(text.data(), text.size());
    });
}

int cmd_serve(const ServeConfig& cfg) {
    if (cfg.port < 1 || cfg.port > 65535) {
        std::cerr << "clear: serve: port must be in 1..65535\n";
        return 2;
    }
    json options{{"scenario", cfg.scenario}, {"ring_capacity", cfg.ring}};
    if (cfg.manual) options["auto_policy"] = false;
    if (!cfg.out.empty()) options["out_dir"] = cfg.out;

    // Block termination signals before any thread starts; a dedicated thread
    // waits for them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    clr_engine* engine = nullptr;
    const auto status = clr_engine_create(options.dump().c_str(), &engine);
    if (status != CLR_OK) {
        report_failure("serve", status);
        return unreadable(status) ? 2 : 1;
    }

    httplib::Server server;
    std::atomic<bool> stopping{false};
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID");
        res.status = 204;
    });
    auto forward = [engine](const httplib::Request& req, httplib::Response& res) {
        int http = 500;
        char* out = nullptr;
        const auto q = query_string(req);
        const auto s = clr_engine_request(engine, req.method.c_str(), req.path.c_str(), q.c_str(),
                                          req.body.empty() ? nullptr : req.body.c_str(), &http, &out);
        if (s != CLR_OK) {
            send_json(res, 500, json{{"error", {{"kind", clr_status_name(s)}, {"message", clr_last_error()}}}}.dump());
            return;
        }
        send_json(res, http, take(out));
    };
    server.Get("/events", [&, engine](const httplib::Request& req, httplib::Response& res) {
        const bool sse = req.get_header_value("Accept").find("text/event-stream") != std::string::npos ||
                         req.get_param_value("stream") == "1";
        try {
            if (sse) return stream_events(engine, req, res, stopping);
        } catch (const std::exception&) {
            return send_json(res, 400,
                             json{{"error", {{"kind", "validation"}, {"field", "from"}, {"message", "bad cursor"}}}}.dump());
        }
        forward(req, res);
    });
    server.Get(".*", forward);
    server.Post(".*", forward);
    server.Patch(".*", forward);
    server.Put(".*", forward);
    server.Delete(".*", forward);

    if (!server.bind_to_port(cfg.host, cfg.port)) {
        std::cerr << "clear: serve: cannot bind " << cfg.host << ":" << cfg.port << "\n";
        clr_engine_destroy(engine);
        return 1;
    }

    std::thread feeder([&] {
        if (cfg.rate <= 0) return;
        const auto period = std::chrono::duration<double>(1.0 / cfg.rate);
        auto next = std::chrono::steady_clock::now();
        while (!stopping && !clr_engine_feed_done(engine)) {
            if (clr_engine_step(engine, 1, nullptr) != CLR_OK) {
                std::cerr << "clear: feed stopped: " << clr_last_error() << "\n";
                break;
            }
            next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
            std::this_thread::sleep_until(next);
        }
        if (!cfg.out.empty()) clr_engine_flush(engine);
    });
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        stopping = true;
        server.stop();
    });

    std::cout << "serving on http://" << cfg.host << ":" << cfg.port << (cfg.manual ? " (manual decisions)" : "")
              << std::endl;
    server.listen_after_bind();
    stopping = true;
    feeder.join();
    // Wake the signal thread if the server stopped on its own.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    if (!cfg.out.empty() && clr_engine_flush(engine) != CLR_OK) report_failure("flush", CLR_ERR_IO);
    clr_engine_destroy(engine);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual-learning engine for streaming regression"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(clr_version()));

    std::string scenario, out;
    bool force_auto = false;
    auto* run = app.add_subcommand("run", "Run a scenario to completion and write the run directory");
    run->add_option("scenario", scenario, "Scenario file")->required();
    run->add_option("--out", out, "Output directory")->required();
    run->add_flag("--auto", force_auto, "Decide every update with the auto policy");

    ServeConfig serve_cfg;
    auto* serve = app.add_subcommand("serve", "Serve the operator API over HTTP");
    serve->add_option("--scenario", serve_cfg.scenario, "Scenario file")->required();
    serve->add_option("--port", serve_cfg.port, "Port")->capture_default_str();
    serve->add_option("--host", serve_cfg.host, "Address to bind")->capture_default_str();
    serve->add_flag("--manual", serve_cfg.manual, "Leave every update to the operator");
    serve->add_option("--rate", serve_cfg.rate, "Scenario samples fed per second, 0 to feed nothing")
        ->capture_default_str();
    serve->add_option("--out", serve_cfg.out, "Also record a run directory");
    serve->add_option("--ring", serve_cfg.ring, "Events kept for readers")->capture_default_str();

    std::string run_dir, archive;
    auto* exp = app.add_subcommand("export", "Pack a run directory into a replayable archive");
    exp->add_option("run_dir", run_dir)->required();
    exp->add_option("archive", archive)->required();

    bool as_json = false;
    auto* rep = app.add_subcommand("replay", "Replay an archive and compare it with its recorded log");
    rep->add_option("archive", archive)->required();
    rep->add_flag("--json", as_json, "Print the full comparison as JSON");

    CLI11_PARSE(app, argc, argv);

    if (*run) return cmd_run(scenario, out, force_auto);
    if (*serve) return cmd_serve(serve_cfg);
    if (*exp) return cmd_export(run_dir, archive);
    return cmd_replay(archive, as_json);
}
