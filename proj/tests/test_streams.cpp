#include <clear/streams.hpp>

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

using namespace clear;
using namespace clear::streams;

namespace {

std::string fixture(const char* name) { return std::string(CLEAR_FIXTURE_DIR) + "/" + name; }

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("iso-8601 timestamps") {
    CHECK(pre::parse_iso8601("1970-01-01T00:00:00Z") == 0);
    CHECK(pre::parse_iso8601("2024-01-01T00:00:00Z") == 1704067200);
    CHECK(pre::parse_iso8601("2024-01-01 01:00:00+01:00") == 1704067200);
    CHECK(pre::parse_iso8601("2024-02-29T12:30") == 1709209800);
    CHECK(pre::format_iso8601(1709209800) == "2024-02-29T12:30:00Z");
    for (std::int64_t t : {std::int64_t{-86401}, std::int64_t{0}, std::int64_t{951782400}, std::int64_t{4102444799}}) {
        CHECK(pre::parse_iso8601(pre::format_iso8601(t)) == t);
    }
    CHECK_THROWS_AS(pre::parse_iso8601("2024-13-01T00:00:00Z"), Error);
    CHECK_THROWS_AS(pre::parse_iso8601("yesterday"), Error);
}

TEST_CASE("synthetic stream without drift is stationary") {
    auto samples = generate(DriftSpec{}, 2000, 42);
    REQUIRE(samples.size() == 2000);
    for (std::size_t j = 0; j < 7; ++j) {
        double first = 0.0, second = 0.0;
        for (std::size_t t = 0; t < 1000; ++t) first += samples[t].x[j];
        for (std::size_t t = 1000; t < 2000; ++t) second += samples[t].x[j];
        CHECK(std::abs(first - second) / 1000.0 < 0.05);
    }
    CHECK(samples[1].timestamp - samples[0].timestamp == 3600);
}

TEST_CASE("abrupt mapping drift flips the mapping at onset") {
    SyntheticConfig quiet;
    quiet.target_noise = 0.0;
    auto plain = generate(DriftSpec{}, 800, 7, quiet);
    auto flipped = generate(DriftSpec{DriftKind::abrupt_mapping, 500, 1, -1.0, ""}, 800, 7, quiet);
    for (std::size_t t = 0; t < 800; ++t) {
        CHECK(plain[t].x == flipped[t].x);
        const double a = plain[t].y.at("y") - 0.5;
        const double b = flipped[t].y.at("y") - 0.5;
        if (t < 500) {
            CHECK(same_bits(a, b));
        } else {
            CHECK(b == doctest::Approx(-a).epsilon(1e-12));
        }
    }
}

TEST_CASE("gradual drifts blend linearly over the ramp") {
    DriftSpec d{DriftKind::gradual_input, 100, 50, 0.2, ""};
    CHECK(d.weight(99) == 0.0);
    CHECK(d.weight(100) == doctest::Approx(1.0 / 50));
    CHECK(d.weight(124) == doctest::Approx(0.5));
    CHECK(d.weight(149) == 1.0);
    CHECK(d.weight(500) == 1.0);
    CHECK_THROWS_AS((DriftSpec{DriftKind::gradual_mapping, 0, 0, 1.0, ""}.validate()), Error);

    SyntheticConfig quiet;
    quiet.feature_noise = 0.0;
    auto base = generate(DriftSpec{}, 300, 3, quiet);
    auto shifted = generate(DriftSpec{DriftKind::abrupt_input, 150, 1, 0.1, ""}, 300, 3, quiet);
    for (std::size_t t = 150; t < 300; ++t) {
        for (std::size_t j = 0; j < 7; ++j) {
            CHECK(shifted[t].x[j] == doctest::Approx(std::min(1.0, base[t].x[j] + 0.1)));
        }
    }
}

TEST_CASE("synthetic streams are deterministic and bounded") {
    for (auto kind : {DriftKind::none, DriftKind::abrupt_input, DriftKind::gradual_input, DriftKind::abrupt_mapping,
                      DriftKind::gradual_mapping}) {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            DriftSpec d{kind, 100, 80, kind == DriftKind::abrupt_input || kind == DriftKind::gradual_input ? 0.4 : -2.0, ""};
            SyntheticConfig cfg;
            cfg.targets = {"a", "b"};
            auto one = generate(d, 400, seed, cfg);
            auto two = generate(d, 400, seed, cfg);
            CHECK(one == two);
            for (const auto& s : one) {
                for (double v : s.x) CHECK((v >= 0.0 && v <= 1.0));
                for (const auto& [id, v] : s.y) CHECK((v >= 0.0 && v <= 1.0));
            }
        }
    }
    CHECK_FALSE(generate(DriftSpec{}, 10, 1) == generate(DriftSpec{}, 10, 2));
    CHECK_THROWS_AS(generate(DriftSpec{}, 0, 1), Error);
}

TEST_CASE("wind fixture: seven weather features, hourly power") {
    auto data = load_csv(fixture("wind.csv"), CsvSchema::wind());
    CHECK(data.feature_names.size() == 7);
    CHECK(data.target_names == std::vector<std::string>{"power"});
    CHECK(data.samples.size() == 30);
    CHECK(pre::is_missing(data.samples[7].x[4]));
    for (std::size_t i = 1; i < data.samples.size(); ++i) {
        CHECK(data.samples[i].timestamp - data.samples[i - 1].timestamp == CsvSchema::wind().resolution_seconds);
    }
    CHECK(data.out_of_range.empty());
}

TEST_CASE("solar fixture: weather features plus sine/cosine calendar encodings at three hours") {
    auto schema = CsvSchema::solar();
    auto data = load_csv(fixture("solar.csv"), schema);
    CHECK(data.samples.size() == 24);
    std::size_t cyclic = 0;
    for (const auto& n : data.feature_names) cyclic += n.ends_with("_cos") || n.ends_with("_sin");
    CHECK(cyclic == 6);
    CHECK(data.samples[1].timestamp - data.samples[0].timestamp == 3 * 3600);
    // hour 0: cos coding (cos + 1) / 2 == 1, sin coding == 0.5
    CHECK(data.samples[0].x[6] == 1.0);
    CHECK(data.samples[0].x[7] == 0.5);
}

TEST_CASE("grid fixture: thirteen NWP features, quarter-hourly, several targets") {
    auto data = load_csv(fixture("grid.csv"), CsvSchema::grid());
    CHECK(data.feature_names.size() == 13);
    CHECK(data.target_names.size() == 4);
    CHECK(data.samples[1].timestamp - data.samples[0].timestamp == 900);
    CHECK(data.samples.front().y.size() == 4);
}

TEST_CASE("malfunction filter on the wind fixture") {
    CsvOptions opts;
    opts.filter_malfunction = true;
    auto data = load_csv(fixture("wind_malfunction.csv"), CsvSchema::wind(), opts);
    CHECK(data.dropped_malfunction == 25);
    CHECK(data.samples.size() == 64 - 25);
    std::size_t zeros = 0;
    for (const auto& s : data.samples) zeros += s.y.at("power") == 0.0;
    CHECK(zeros == 24);
    auto unfiltered = load_csv(fixture("wind_malfunction.csv"), CsvSchema::wind());
    CHECK(unfiltered.samples.size() == 64);
}

TEST_CASE("csv errors") {
    auto parse = [](const std::string& text, CsvOptions opts = {}) {
        std::istringstream in(text);
        CsvSchema s;
        s.features = {{"a"}, {"b"}};
        s.targets = {"p"};
        return parse_csv(in, s, opts);
    };
    CHECK(parse("timestamp,a,b,p\n2020-01-01T00:00:00Z,0.1,0.2,0.3\n").samples.size() == 1);
    try {
        parse("timestamp,a,p\n");
        FAIL("expected a schema error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::schema);
        CHECK(std::string(e.what()).find("'b'") != std::string::npos);
    }
    try {
        parse("timestamp,a,b,p\n2020-01-01T00:00:00Z,0.1,0.2,0.3\n2020-01-01T01:00:00Z,x,0.2,0.3\n");
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::parse);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    auto flagged = parse("timestamp,a,b,p\n2020-01-01T00:00:00Z,1.5,0.2,0.3\n");
    REQUIRE(flagged.out_of_range.size() == 1);
    CHECK(flagged.out_of_range[0].column == "a");
    CsvOptions strict;
    strict.strict = true;
    CHECK_THROWS_AS(parse("timestamp,a,b,p\n2020-01-01T00:00:00Z,1.5,0.2,0.3\n", strict), Error);
    try {
        parse("timestamp,a,b,p\n2020-01-01T01:00:00Z,0.1,0.2,0.3\n2020-01-01T00:00:00Z,0.1,0.2,0.3\n");
        FAIL("expected an ordering error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ordering);
    }
    CHECK_THROWS_AS(load_csv("/nonexistent.csv", CsvSchema::wind()), Error);
}
