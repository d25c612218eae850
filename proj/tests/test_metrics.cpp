#include <clear/metrics.hpp>

#include <doctest.h>

#include <cmath>
#include <random>

using namespace clear;
using namespace clear::metrics;

TEST_CASE("regression errors: worked examples") {
    auto zero = regression_errors(std::vector<double>{0.1, 0.2}, std::vector<double>{0.1, 0.2});
    CHECK(zero.mse == 0.0);
    CHECK(zero.rmse == 0.0);
    CHECK(zero.mae == 0.0);

    auto ones = regression_errors(std::vector<double>{0, 0}, std::vector<double>{1, 1});
    CHECK(ones.mse == 1.0);
    CHECK(ones.rmse == 1.0);
    CHECK(ones.mae == 1.0);

    auto half = regression_errors(std::vector<double>{0.5}, std::vector<double>{1.0});
    CHECK(half.mse == 0.25);
    CHECK(half.rmse == 0.5);
    CHECK(half.mae == 0.5);

    CHECK_THROWS_AS(regression_errors(std::vector<double>{1}, std::vector<double>{1, 2}), Error);
    CHECK_THROWS_AS(regression_errors(std::vector<double>{}, std::vector<double>{}), Error);
}

TEST_CASE("property: rmse^2 == mse and mae <= rmse") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> dist(0.0, 3.0);
    std::uniform_int_distribution<std::size_t> len(1, 40);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> p(len(rng)), t(p.size());
        for (auto& v : p) v = dist(rng);
        for (auto& v : t) v = dist(rng);
        auto e = regression_errors(p, t);
        CHECK(std::abs(e.rmse * e.rmse - e.mse) <= 1e-12 * std::max(1.0, e.mse));
        CHECK(e.mae <= e.rmse * (1 + 1e-15));
    }
}

TEST_CASE("forgetting ratio") {
    CHECK(*forgetting_ratio(0.10, 0.12) == doctest::Approx(0.2));
    CHECK(*forgetting_ratio(0.10, 0.08) == doctest::Approx(-0.2));
    CHECK(*forgetting_ratio(0.0, 0.0) == 0.0);
    CHECK_FALSE(forgetting_ratio(0.0, 0.1).has_value());
    CHECK_THROWS_AS(forgetting_ratio(-1.0, 0.1), Error);
    for (double e : {1e-9, 0.3, 7.0}) CHECK(*forgetting_ratio(e, e) == 0.0);
}

TEST_CASE("cl_score: weighted sum and validation") {
    auto all_one = cl_score({{"a", 1.0}, {"b", 1.0}, {"c", 1.0}}, {{"a", 0.2}, {"b", 0.5}, {"c", 0.3}});
    CHECK(all_one.fused == doctest::Approx(1.0));

    auto s = cl_score({{"a", 0.8}, {"b", 0.5}}, {{"a", 0.5}, {"b", 0.5}});
    CHECK(s.fused == doctest::Approx(0.65));

    CHECK_THROWS_AS(cl_score({{"a", 0.8}, {"b", 0.5}}, {{"a", 0.5}, {"b", 0.4}}), Error);
    CHECK_THROWS_AS(cl_score({{"a", 1.2}}, {{"a", 1.0}}), Error);
    CHECK_THROWS_AS(cl_score({{"a", 0.2}}, {{"b", 1.0}}), Error);
    CHECK_THROWS_AS(cl_score({{"a", 0.2}, {"b", 0.1}}, {{"a", 1.5}, {"b", -0.5}}), Error);
}

TEST_CASE("property: cl_score is monotone in every component") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::map<std::string, double> weights, comps;
        double total = 0.0;
        for (const auto& [k, w] : equal_weights()) {
            weights[k] = unit(rng);
            total += weights[k];
            comps[k] = unit(rng);
        }
        for (auto& [k, w] : weights) w /= total;
        double renorm = 0.0;
        for (auto& [k, w] : weights) renorm += w;
        weights.begin()->second += 1.0 - renorm;
        for (const auto& [key, _] : comps) {
            double previous = -1.0;
            for (double v = 0.0; v <= 1.0; v += 0.05) {
                auto sweep = comps;
                sweep[key] = v;
                const double fused = cl_score(sweep, weights).fused;
                CHECK(fused >= previous - 1e-15);
                previous = fused;
            }
        }
    }
}

TEST_CASE("component normalisations stay in [0,1]") {
    CHECK(accuracy_component(0.0) == 1.0);
    CHECK(accuracy_component(1.0) == 0.5);
    CHECK(forward_transfer_component(0.2, 0.05) == doctest::Approx(0.75));
    CHECK(forward_transfer_component(0.2, 0.4) == 0.0);
    CHECK(backward_transfer_component(-0.3) == 1.0);
    CHECK(backward_transfer_component(1.0) == 0.5);
    CHECK(backward_transfer_component(std::nullopt) == 0.0);
    CHECK(model_size_component(100, 200) == 0.5);
    CHECK(storage_component(25, 100) == 0.75);
    CHECK(compute_component(1.0, 0.5) == 1.0);
    CHECK(compute_component(1.0, 4.0) == 0.25);
}

TEST_CASE("report rendering") {
    EvalReport r;
    r.blocks.push_back({"a", 2, 1, 0.01, 0.02, 0.05, 0.3});
    r.blocks.push_back({"p_wf", 1, 0, 0.03, 0.04, std::nullopt, 0.1});
    r.score = cl_score({{"accuracy", 0.9}}, {{"accuracy", 1.0}});
    const auto csv = to_csv(r);
    CHECK(csv.find("a,2,1,0.01,0.02,0.05,0.3\n") != std::string::npos);
    CHECK(csv.find("p_wf,1,0,0.03,0.04,undefined,0.1\n") != std::string::npos);
    CHECK(csv.find("cl_score,0.9,") != std::string::npos);
    CHECK(to_text(r).find("CL score") != std::string::npos);
}
