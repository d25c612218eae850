#include <clear/service.hpp>

#include <chrono>
#include <fstream>
#include <sstream>

namespace clear::service {

EventHub::EventHub(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

void EventHub::publish(const orch::Event& event) {
    {
        std::lock_guard lock(mutex_);
        ring_.push_back(orch::to_json(event));
        last_seq_ = event.seq;
        if (ring_.size() > capacity_) {
            ring_.pop_front();
            ++first_seq_;
        }
    }
    arrived_.notify_all();
}

void EventHub::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    arrived_.notify_all();
}

EventHub::Batch EventHub::read(std::uint64_t from, std::size_t limit, std::uint32_t wait_ms) {
    std::unique_lock lock(mutex_);
    if (from == 0) from = 1;
    if (wait_ms > 0) {
        arrived_.wait_for(lock, std::chrono::milliseconds(wait_ms), [&] { return closed_ || last_seq_ >= from; });
    }
    Batch b;
    b.last_seq = last_seq_;
    if (from < first_seq_) {
        b.dropped = first_seq_ - from;
        from = first_seq_;
    }
    for (std::uint64_t seq = from; seq <= last_seq_ && b.events.size() < limit; ++seq) {
        b.events.push_back(ring_[seq - first_seq_]);
    }
    b.next = from + b.events.size();
    return b;
}

int http_status(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::argument:
        case ErrorKind::shape:
        case ErrorKind::validation:
        case ErrorKind::parse:
        case ErrorKind::schema:
        case ErrorKind::missing_target:
        case ErrorKind::ordering: return 400;
        case ErrorKind::not_found: return 404;
        case ErrorKind::conflict:
        case ErrorKind::incompatible_snapshot: return 409;
        case ErrorKind::scenario:
        case ErrorKind::strategy:
        case ErrorKind::divergence: return 422;
        case ErrorKind::io:
        case ErrorKind::internal: return 500;
    }
    return 500;
}

json error_body(const Error& error) {
    const std::string message = error.what();
    json body{{"kind", to_string(error.kind())}, {"message", message}};
    // Readers phrase field errors as "field 'path': ...".
    const std::string marker = "field '";
    if (message.rfind(marker, 0) == 0) {
        const auto end = message.find('\'', marker.size());
        if (end != std::string::npos) body["field"] = message.substr(marker.size(), end - marker.size());
    }
    return {{"error", body}};
}

EngineSpec engine_spec_from_json(const json& value) {
    io::Reader r(value, "");
    r.only({"scenario", "auto_policy", "out_dir", "ring_capacity"});
    EngineSpec spec;
    if (!value.contains("scenario")) r.fail("scenario", "required");
    const auto& sc = value.at("scenario");
    if (sc.is_string()) {
        spec.script = scenario::load_script(sc.get<std::string>());
    } else {
        spec.script = scenario::parse_script(sc);
    }
    if (r.has("auto_policy")) spec.options.auto_policy = r.flag("auto_policy", true);
    if (r.has("out_dir")) spec.options.out_dir = r.text("out_dir");
    spec.options.ring_capacity = r.count("ring_capacity", spec.options.ring_capacity);
    if (spec.options.ring_capacity == 0) r.fail("ring_capacity", "must be positive");
    return spec;
}

Service::Service(scenario::Script script, Options options) : hub_(options.ring_capacity) {
    runner_ = std::make_unique<scenario::Runner>(std::move(script), scenario::RunOptions{options.auto_policy});
    if (options.out_dir) {
        writer_ = std::make_unique<run::RunWriter>(*options.out_dir, runner_->script(), runner_->config());
    }
    auto& inst = runner_->instance();
    inst.set_listener([this, &inst](const orch::Event& e) {
        if (writer_) writer_->record(inst, e);
        hub_.publish(e);
    });
    runner_->on_checkpoint([this, &inst](const std::string& label) {
        if (writer_) writer_->flush(inst, label);
    });
    runner_->start();
}

Service::~Service() { hub_.close(); }

EventHub::Batch Service::events(std::uint64_t from, std::size_t limit, std::uint32_t wait_ms) {
    return hub_.read(from, limit, wait_ms);
}

std::size_t Service::step(std::size_t max_steps) {
    std::lock_guard lock(mutex_);
    std::size_t done = 0;
    if (feed_error_) return 0;
    try {
        while (done < max_steps && runner_->step()) ++done;
    } catch (const Error& e) {
        feed_error_ = e.what();
    }
    return done;
}

bool Service::feed_done() {
    std::lock_guard lock(mutex_);
    return runner_->done() || feed_error_.has_value();
}

void Service::flush() {
    std::lock_guard lock(mutex_);
    if (writer_) writer_->flush(runner_->instance(), std::nullopt);
}

json Service::state_locked() const {
    json s = runner_->instance().state();
    s["scenario"] = {{"event_index", runner_->event_index()},
                     {"events", runner_->script().events.size()},
                     {"done", runner_->done()},
                     {"error", feed_error_ ? json(*feed_error_) : json(nullptr)}};
    return s;
}

namespace {

json parse_body(const std::string& body) {
    if (body.empty()) throw Error(ErrorKind::validation, "request body: expected a JSON object");
    auto value = io::parse(body);
    if (!value.is_object()) throw Error(ErrorKind::validation, "request body: expected a JSON object");
    return value;
}

std::uint64_t query_number(const Request& r, const char* key, std::uint64_t fallback, std::uint64_t max) {
    auto it = r.query.find(key);
    if (it == r.query.end() || it->second.empty()) return fallback;
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
        v = std::stoull(it->second, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != it->second.size() || it->second[0] == '-') {
        throw Error(ErrorKind::validation, std::string("field '") + key + "': expected a nonnegative integer");
    }
    return std::min(v, max);
}

json summary(const orch::Instance& inst) {
    return {{"mode", orch::to_string(inst.mode())},
            {"pending_update", inst.pending_update() ? json(*inst.pending_update()) : json(nullptr)},
            {"version", inst.versions().size()},
            {"ingested", inst.ingested()},
            {"last_seq", inst.last_event_seq()}};
}

std::vector<pre::RawSample> samples_from(const json& list, const std::string& path) {
    if (!list.is_array()) throw Error(ErrorKind::validation, "field '" + path + "': expected an array");
    std::vector<pre::RawSample> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        out.push_back(io::raw_sample_from_json(io::Reader(list[i], path + "[" + std::to_string(i) + "]")));
    }
    return out;
}

}  // namespace

Response Service::handle(const Request& request) {
    try {
        if (request.path == "/events") {
            if (request.method != "GET") return {405, {{"error", {{"kind", "method"}, {"message", "use GET"}}}}};
            const auto batch = events(query_number(request, "from", 1, UINT64_MAX),
                                      query_number(request, "limit", 1000, 10000),
                                      static_cast<std::uint32_t>(query_number(request, "wait_ms", 0, 30000)));
            return {200,
                    {{"events", batch.events},
                     {"next", batch.next},
                     {"dropped", batch.dropped},
                     {"last_seq", batch.last_seq}}};
        }
        std::lock_guard lock(mutex_);
        return dispatch(request);
    } catch (const Error& e) {
        return {http_status(e.kind()), error_body(e)};
    } catch (const std::exception& e) {
        return {500, error_body(Error(ErrorKind::internal, e.what()))};
    }
}

Response Service::dispatch(const Request& request) {
    auto& inst = runner_->instance();
    const auto& m = request.method;
    const auto& p = request.path;
    auto wrong_method = [&](const char* allowed) {
        return Response{405, {{"error", {{"kind", "method"}, {"message", std::string("use ") + allowed}}}}};
    };

    if (p == "/state") {
        if (m != "GET") return wrong_method("GET");
        return {200, state_locked()};
    }
    if (p == "/metrics") {
        if (m != "GET") return wrong_method("GET");
        const auto report = inst.report();
        return {200, {{"report", io::to_json(report)}, {"csv", metrics::to_csv(report)}}};
    }
    if (p == "/ingest") {
        if (m != "POST") return wrong_method("POST");
        const auto body = parse_body(request.body);
        std::vector<pre::RawSample> samples;
        if (body.contains("samples")) {
            if (body.size() != 1) throw Error(ErrorKind::validation, "request body: 'samples' stands alone");
            samples = samples_from(body.at("samples"), "samples");
        } else {
            samples.push_back(io::raw_sample_from_json(io::Reader(body, "")));
        }
        std::size_t done = 0;
        try {
            for (const auto& s : samples) {
                inst.ingest(s);
                ++done;
            }
        } catch (const Error& e) {
            auto err = error_body(e);
            err["error"]["index"] = done;
            err["ingested"] = done;
            return {http_status(e.kind()), err};
        }
        auto out = summary(inst);
        out["accepted_samples"] = done;
        return {200, out};
    }
    if (p == "/decisions") {
        if (m != "POST") return wrong_method("POST");
        const auto body = parse_body(request.body);
        io::Reader r(body, "");
        r.only({"update_id", "verdict", "version", "note", "hyperparameters"});
        const auto verdict = r.text("verdict");
        const auto note = r.text("note", "");
        if (verdict == "rollback") {
            if (!r.has("version")) r.fail("version", "required for rollback");
            inst.rollback_to(r.u64("version", 0), note);
        } else if (verdict == "accept" || verdict == "reject") {
            if (!r.has("update_id")) r.fail("update_id", "required");
            inst.decide(r.u64("update_id", 0), verdict == "accept" ? orch::Verdict::accept : orch::Verdict::reject,
                        "operator", note, body.value("hyperparameters", json()));
        } else {
            r.fail("verdict", "expected accept, reject or rollback");
        }
        return {200, summary(inst)};
    }
    if (p == "/hyperparameters") {
        if (m != "PATCH") return wrong_method("PATCH");
        inst.set_hyperparameters(parse_body(request.body));
        auto out = summary(inst);
        for (auto it = inst.events().rbegin(); it != inst.events().rend(); ++it) {
            if (it->type == "hyperparameters_changed") {
                out["changes"] = it->payload.at("changes");
                break;
            }
        }
        return {200, out};
    }
    if (p == "/targets") {
        if (m != "POST") return wrong_method("POST");
        const auto body = parse_body(request.body);
        io::Reader r(body, "");
        r.only({"target_id", "head_spec", "strategy", "warmup"});
        const auto warmup = body.contains("warmup") ? samples_from(body.at("warmup"), "warmup")
                                                    : std::vector<pre::RawSample>{};
        inst.add_target(r.text("target_id"), body.value("head_spec", json()), body.value("strategy", json()), warmup);
        return {201, summary(inst)};
    }
    if (p == "/rollback") {
        if (m != "POST") return wrong_method("POST");
        const auto body = parse_body(request.body);
        io::Reader r(body, "");
        r.only({"version", "note"});
        if (!r.has("version")) r.fail("version", "required");
        inst.rollback_to(r.u64("version", 0), r.text("note", ""));
        return {200, summary(inst)};
    }
    return {404, {{"error", {{"kind", "not_found"}, {"message", "no endpoint " + m + " " + p}}}}};
}

}  // namespace clear::service
