#include <clear/clear.h>
#include <clear/service.hpp>

#include <cstdlib>
#include <cstring>
#include <new>

struct clr_engine {
    std::unique_ptr<clear::service::Service> service;
};

namespace {

thread_local std::string last_error;

clr_status fail(clr_status status, const std::string& message) {
    last_error = message;
    return status;
}

char* copy_out(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

// Runs f, translating exceptions into status codes.
template <typename F>
clr_status guarded(F&& f) {
    try {
        last_error.clear();
        f();
        return CLR_OK;
    } catch (const clear::Error& e) {
        return fail(static_cast<clr_status>(e.kind()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(CLR_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(CLR_ERR_INTERNAL, e.what());
    }
}

std::map<std::string, std::string> parse_query(const char* query) {
    std::map<std::string, std::string> out;
    if (!query) return out;
    std::string q(query);
    std::size_t at = 0;
    while (at <= q.size()) {
        auto end = q.find('&', at);
        if (end == std::string::npos) end = q.size();
        const auto pair = q.substr(at, end - at);
        if (!pair.empty()) {
            const auto eq = pair.find('=');
            out[pair.substr(0, eq)] = eq == std::string::npos ? "" : pair.substr(eq + 1);
        }
        at = end + 1;
    }
    return out;
}

}  // namespace

extern "C" {

const char* clr_version(void) { return "0.1.0"; }

const char* clr_status_name(clr_status status) {
    if (status == CLR_OK) return "ok";
    if (status < CLR_ERR_ARGUMENT || status > CLR_ERR_SCENARIO) return "unknown";
    return clear::to_string(static_cast<clear::ErrorKind>(status));
}

const char* clr_last_error(void) { return last_error.c_str(); }

void clr_string_free(char* s) { std::free(s); }

clr_status clr_engine_create(const char* options_json, clr_engine** out) {
    if (!options_json || !out) return fail(CLR_ERR_ARGUMENT, "options_json and out must not be NULL");
    *out = nullptr;
    return guarded([&] {
        auto spec = clear::service::engine_spec_from_json(clear::io::parse(options_json));
        auto engine = std::make_unique<clr_engine>();
        engine->service = std::make_unique<clear::service::Service>(std::move(spec.script), spec.options);
        *out = engine.release();
    });
}

void clr_engine_destroy(clr_engine* engine) { delete engine; }

clr_status clr_engine_request(clr_engine* engine, const char* method, const char* path, const char* query,
                              const char* body, int* http_status, char** response_json) {
    if (!engine || !method || !path || !http_status || !response_json) {
        return fail(CLR_ERR_ARGUMENT, "engine, method, path, http_status and response_json must not be NULL");
    }
    *response_json = nullptr;
    return guarded([&] {
        clear::service::Request r{method, path, parse_query(query), body ? body : ""};
        const auto response = engine->service->handle(r);
        *response_json = copy_out(response.body.dump());
        *http_status = response.status;
    });
}

clr_status clr_engine_wait_events(clr_engine* engine, uint64_t from_seq, uint32_t limit, uint32_t wait_ms,
                                  char** events_json) {
    if (!engine || !events_json) return fail(CLR_ERR_ARGUMENT, "engine and events_json must not be NULL");
    *events_json = nullptr;
    return guarded([&] {
        const auto b = engine->service->events(from_seq, limit == 0 ? 1000 : limit, wait_ms);
        const nlohmann::json out{{"events", b.events}, {"next", b.next}, {"dropped", b.dropped}, {"last_seq", b.last_seq}};
        *events_json = copy_out(out.dump());
    });
}

clr_status clr_engine_step(clr_engine* engine, uint32_t max_steps, uint32_t* performed) {
    if (!engine) return fail(CLR_ERR_ARGUMENT, "engine must not be NULL");
    return guarded([&] {
        const auto n = engine->service->step(max_steps);
        if (performed) *performed = static_cast<uint32_t>(n);
    });
}

int clr_engine_feed_done(clr_engine* engine) { return engine && engine->service->feed_done() ? 1 : 0; }

clr_status clr_engine_flush(clr_engine* engine) {
    if (!engine) return fail(CLR_ERR_ARGUMENT, "engine must not be NULL");
    return guarded([&] { engine->service->flush(); });
}

clr_status clr_run_scenario(const char* scenario_path, const char* out_dir, const char* options_json,
                            char** summary_json) {
    if (!scenario_path || !out_dir) return fail(CLR_ERR_ARGUMENT, "scenario_path and out_dir must not be NULL");
    if (summary_json) *summary_json = nullptr;
    return guarded([&] {
        clear::scenario::RunOptions options;
        if (options_json) {
            const auto value = clear::io::parse(options_json);
            clear::io::Reader r(value, "");
            r.only({"auto_policy"});
            if (r.has("auto_policy")) options.auto_policy = r.flag("auto_policy", true);
        }
        const auto summary = clear::run::run_scenario(clear::scenario::load_script(scenario_path), out_dir, options);
        if (summary_json) {
            const nlohmann::json out{{"events", summary.events},
                                     {"versions", summary.versions},
                                     {"updates", summary.updates},
                                     {"report", clear::io::to_json(summary.report)}};
            *summary_json = copy_out(out.dump());
        }
    });
}

clr_status clr_export_run(const char* run_dir, const char* archive_path) {
    if (!run_dir || !archive_path) return fail(CLR_ERR_ARGUMENT, "run_dir and archive_path must not be NULL");
    return guarded([&] { clear::run::export_run(run_dir, archive_path); });
}

clr_status clr_replay_archive(const char* archive_path, char** report_json) {
    if (!archive_path || !report_json) return fail(CLR_ERR_ARGUMENT, "archive_path and report_json must not be NULL");
    *report_json = nullptr;
    return guarded([&] { *report_json = copy_out(clear::run::to_json(clear::run::replay_archive(archive_path)).dump()); });
}

}  // extern "C"
