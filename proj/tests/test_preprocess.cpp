#include <clear/preprocess.hpp>

#include <doctest.h>

#include <cmath>
#include <random>

using namespace clear;
using namespace clear::pre;

TEST_CASE("min-max fit, transform and degenerate columns") {
    auto s = MinMaxScaler::fit({"x"}, {{0.0, 5.0, 10.0}});
    CHECK(s.min()[0] == 0.0);
    CHECK(s.max()[0] == 10.0);
    CHECK(s.transform(std::vector<double>{5.0})[0] == 0.5);

    auto constant = MinMaxScaler::fit({"c"}, {{3.0, 3.0}});
    CHECK(constant.transform(std::vector<double>{3.0})[0] == 0.0);

    try {
        MinMaxScaler::fit({"empty"}, {{}});
        FAIL("expected fit error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("empty") != std::string::npos);
    }
    CHECK_THROWS_AS(MinMaxScaler::fit({"m"}, {{missing, missing}}), Error);
}

TEST_CASE("min-max partial_update uses extrema") {
    auto s = MinMaxScaler::fit({"x"}, {{0.0, 10.0}});
    auto wider = s.partial_update({{20.0}});
    CHECK(wider.min()[0] == 0.0);
    CHECK(wider.max()[0] == 20.0);
    CHECK(wider.transform(std::vector<double>{5.0})[0] == 0.25);
    CHECK(s.partial_update({{3.0, 7.0}}) == s);
    CHECK_THROWS_AS(s.partial_update({{1.0}, {2.0}}), Error);
}

TEST_CASE("standard scaler: constant column and streaming equals refit") {
    auto constant = StandardScaler::fit({"c"}, {{1.0, 1.0, 1.0}});
    CHECK(constant.mean()[0] == 1.0);
    CHECK(constant.variance()[0] == 0.0);
    CHECK(constant.transform(std::vector<double>{1.0})[0] == 0.0);

    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist(3.0, 2.0);
    std::vector<double> all(500);
    for (auto& v : all) v = dist(rng);
    std::vector<double> a(all.begin(), all.begin() + 200), b(all.begin() + 200, all.end());
    auto full = StandardScaler::fit({"x"}, {all});
    auto streamed = StandardScaler::fit({"x"}, {a}).partial_update({b});
    CHECK(std::abs(full.mean()[0] - streamed.mean()[0]) < 1e-9);
    CHECK(std::abs(full.variance()[0] - streamed.variance()[0]) < 1e-9);
    CHECK(full.count()[0] == streamed.count()[0]);

}

TEST_CASE("property: transform then inverse is the identity for non-constant columns") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unit(-50.0, 50.0);
    for (int trial = 0; trial < 50; ++trial) {
        Columns cols(3);
        for (auto& c : cols) {
            for (int i = 0; i < 20; ++i) c.push_back(unit(rng));
        }
        auto mm = MinMaxScaler::fit({"a", "b", "c"}, cols);
        auto st = StandardScaler::fit({"a", "b", "c"}, cols);
        std::vector<double> row{unit(rng), unit(rng), unit(rng)};
        auto back = mm.inverse_transform(mm.transform(row));
        auto back2 = st.inverse_transform(st.transform(row));
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(std::abs(back[j] - row[j]) <= 1e-12 * std::max(1.0, std::abs(row[j])));
            CHECK(std::abs(back2[j] - row[j]) <= 1e-12 * std::max(1.0, std::abs(row[j])));
        }
    }
}

TEST_CASE("scaler records round trip") {
    auto mm = MinMaxScaler::fit({"wind_speed_100m", "humidity"}, {{0.1, 0.7}, {0.3, 0.2}});
    CHECK(MinMaxScaler::from_record(mm.to_record()) == mm);
    CHECK(mm.to_record().rfind("scaler/1 wind_speed_100m minmax 0.1 0.7", 0) == 0);
    auto st = StandardScaler::fit({"t"}, {{1.0, 2.0, 4.0}});
    auto back = StandardScaler::from_record(st.to_record());
    CHECK(back.mean()[0] == st.mean()[0]);
    CHECK(back.variance()[0] == doctest::Approx(st.variance()[0]));
    CHECK_THROWS_AS(MinMaxScaler::from_record("bogus line"), Error);
    CHECK_THROWS_AS(MinMaxScaler::fit({"has space"}, {{1.0}}), Error);
}

TEST_CASE("fill_missing rules") {
    CHECK(fill_missing(std::vector<double>{1, missing, 3}, {ImputeStrategy::linear_interpolate}) ==
          std::vector<double>{1, 2, 3});
    CHECK(fill_missing(std::vector<double>{missing, 4, 5}, {ImputeStrategy::linear_interpolate}) ==
          std::vector<double>{4, 4, 5});
    CHECK(fill_missing(std::vector<double>{missing, 4, 5}, {ImputeStrategy::forward_fill}) ==
          std::vector<double>{4, 4, 5});
    CHECK(fill_missing(std::vector<double>{2, missing, missing, 8}, {ImputeStrategy::forward_fill}) ==
          std::vector<double>{2, 2, 2, 8});
    CHECK(fill_missing(std::vector<double>{2, missing, missing, 8}, {ImputeStrategy::linear_interpolate}) ==
          std::vector<double>{2, 4, 6, 8});
    CHECK(fill_missing(std::vector<double>{2, 3, missing}, {ImputeStrategy::linear_interpolate}) ==
          std::vector<double>{2, 3, 3});
    CHECK(fill_missing(std::vector<double>{2, missing, 3}, {ImputeStrategy::drop_row}) ==
          std::vector<double>{2, 3});
    CHECK_THROWS_AS(fill_missing(std::vector<double>{missing, missing}, {ImputeStrategy::linear_interpolate}),
                    Error);
    CHECK_THROWS_AS(fill_missing(std::vector<double>{missing, missing}, {ImputeStrategy::forward_fill}), Error);
}

TEST_CASE("property: fill_missing never alters present values") {
    std::mt19937_64 rng(12);
    std::bernoulli_distribution gap(0.3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> series(15);
        for (auto& v : series) v = gap(rng) ? missing : unit(rng);
        series[7] = 0.5;
        for (auto strategy : {ImputeStrategy::linear_interpolate, ImputeStrategy::forward_fill}) {
            auto filled = fill_missing(series, {strategy});
            REQUIRE(filled.size() == series.size());
            for (std::size_t i = 0; i < series.size(); ++i) {
                CHECK_FALSE(is_missing(filled[i]));
                if (!is_missing(series[i])) CHECK(filled[i] == series[i]);
            }
        }
    }
}

namespace {

std::vector<std::int64_t> hourly(std::size_t n) {
    std::vector<std::int64_t> ts(n);
    for (std::size_t i = 0; i < n; ++i) ts[i] = static_cast<std::int64_t>(i) * 3600;
    return ts;
}

}  // namespace

TEST_CASE("malfunction filter: runs longer than 24 hours are dropped") {
    // 3 producing, 25 zeros, 2 producing
    std::vector<double> p(30, 0.4);
    for (std::size_t i = 3; i < 28; ++i) p[i] = 0.0;
    auto keep = filter_malfunction(hourly(30), p);
    CHECK(keep == std::vector<std::size_t>{0, 1, 2, 28, 29});

    std::vector<double> q(29, 0.4);
    for (std::size_t i = 3; i < 27; ++i) q[i] = 0.0;  // exactly 24 zeros
    CHECK(filter_malfunction(hourly(29), q).size() == 29);

    std::vector<double> none(10, 0.2);
    CHECK(filter_malfunction(hourly(10), none).size() == 10);

    std::vector<std::int64_t> unordered{0, 7200, 3600};
    CHECK_THROWS_AS(filter_malfunction(unordered, std::vector<double>{1, 1, 1}), Error);
}

TEST_CASE("clip_unit") {
    CHECK(clip_unit(-0.2) == 0.0);
    CHECK(clip_unit(1.3) == 1.0);
    CHECK(clip_unit(0.4) == 0.4);
}
