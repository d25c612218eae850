#pragma once

// Transport-independent request dispatch for the operator API. Requests are
// serialised through one mutex in arrival order; event readers wait on a
// bounded ring and never hold up the engine.

#include <clear/run.hpp>
#include <clear/scenario.hpp>

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace clear::service {

using json = nlohmann::json;

// Bounded fan-out buffer. Readers that fall behind the ring get what is
// left plus a count of the events they missed.
class EventHub {
public:
    explicit EventHub(std::size_t capacity = 65536);

    void publish(const orch::Event& event);

    struct Batch {
        std::vector<json> events;
        std::uint64_t next = 1;       // cursor for the following read
        std::uint64_t dropped = 0;    // events older than the ring that the reader asked for
        std::uint64_t last_seq = 0;
    };
    // Events with seq >= from, waiting up to wait_ms for the first one.
    Batch read(std::uint64_t from, std::size_t limit, std::uint32_t wait_ms);
    void close();

private:
    std::size_t capacity_;
    std::mutex mutex_;
    std::condition_variable arrived_;
    std::deque<json> ring_;
    std::uint64_t first_seq_ = 1;
    std::uint64_t last_seq_ = 0;
    bool closed_ = false;
};

struct Request {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct Response {
    int status = 200;
    json body;
};

struct Options {
    std::optional<bool> auto_policy;  // false for operator-driven serving
    std::optional<std::string> out_dir;
    std::size_t ring_capacity = 65536;
};

// Options JSON: {"scenario": path | inline script, "auto_policy": bool,
// "out_dir": path, "ring_capacity": n}.
struct EngineSpec {
    scenario::Script script;
    Options options;
};
EngineSpec engine_spec_from_json(const json& value);

class Service {
public:
    Service(scenario::Script script, Options options = {});
    ~Service();

    Response handle(const Request& request);
    EventHub::Batch events(std::uint64_t from, std::size_t limit, std::uint32_t wait_ms);

    // Feeds up to max_steps scenario steps; returns how many ran.
    std::size_t step(std::size_t max_steps);
    bool feed_done();
    // Writes reports and the manifest when an output directory is set.
    void flush();

private:
    Response dispatch(const Request& request);
    json state_locked() const;

    std::mutex mutex_;
    std::unique_ptr<scenario::Runner> runner_;
    std::unique_ptr<run::RunWriter> writer_;
    EventHub hub_;
    std::optional<std::string> feed_error_;
};

// Maps engine error kinds to HTTP status codes.
int http_status(ErrorKind kind) noexcept;
json error_body(const Error& error);

}  // namespace clear::service
