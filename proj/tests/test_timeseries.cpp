#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "expcast/errors.hpp"
#include "expcast/timeseries.hpp"

using namespace expcast;

namespace {

SeriesTable ramp_table(std::size_t n, std::size_t covariates = 0) {
    SeriesTable t;
    t.column_names.push_back("target");
    t.columns.emplace_back();
    for (std::size_t c = 0; c < covariates; ++c) {
        t.column_names.push_back("cov" + std::to_string(c));
        t.columns.emplace_back();
    }
    for (std::size_t i = 0; i < n; ++i) {
        t.timestamps.push_back(static_cast<std::int64_t>(i) * 3600);
        t.columns[0].push_back(static_cast<double>(i));
        for (std::size_t c = 0; c < covariates; ++c) {
            t.columns[c + 1].push_back(static_cast<double>(i) * 10.0 + static_cast<double>(c));
        }
    }
    return t;
}

} // namespace

TEST_CASE("make_windows exact fit yields one instance") {
    const auto instances = make_windows(ramp_table(192), {168, 24, 24}, 0, {});
    REQUIRE(instances.size() == 1);
    CHECK(instances[0].lookback.size() == 168);
    CHECK(instances[0].target.size() == 24);
    CHECK(instances[0].timestamps.size() == 192);
}

TEST_CASE("make_windows count follows the stride formula") {
    // length 193, stride 1: offsets 0 and 1.
    const auto instances = make_windows(ramp_table(193), {168, 24, 1}, 0, {});
    REQUIRE(instances.size() == 2);
    CHECK(instances[0].source_offset == 0);
    CHECK(instances[1].source_offset == 1);

    // Generic check of floor((N-L-H)/stride)+1 against enumeration.
    std::mt19937 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t L = 5 + rng() % 10;
        const std::size_t H = 1 + rng() % 5;
        const std::size_t stride = 1 + rng() % 4;
        const std::size_t N = L + H + rng() % 30;
        std::size_t expected = 0;
        for (std::size_t start = 0; start + L + H <= N; start += stride) ++expected;
        const auto got = make_windows(ramp_table(N), {L, H, stride}, 0, {});
        CHECK(got.size() == expected);
        CHECK(got.size() == (N - L - H) / stride + 1);
    }
}

TEST_CASE("make_windows long-horizon shape") {
    const auto instances = make_windows(ramp_table(400), {96, 96, 96}, 0, {});
    REQUIRE(!instances.empty());
    CHECK(instances[0].lookback.size() == 96);
    CHECK(instances[0].target.size() == 96);
}

TEST_CASE("make_windows preserves raw values and covers covariates") {
    const auto table = ramp_table(200, 2);
    const auto instances = make_windows(table, {20, 10, 15}, 0, {1, 2});
    REQUIRE(!instances.empty());
    for (const auto& inst : instances) {
        const std::size_t start = inst.source_offset;
        // Raw round-trip: window values are the source values, bit for bit.
        for (std::size_t i = 0; i < inst.lookback.size(); ++i) {
            CHECK(inst.lookback[i] == table.columns[0][start + i]);
        }
        for (std::size_t i = 0; i < inst.target.size(); ++i) {
            CHECK(inst.target[i] == table.columns[0][start + 20 + i]);
        }
        REQUIRE(inst.dynamic_context.rows.size() == 30);
        CHECK(inst.dynamic_context.history_rows == 20);
        CHECK(inst.dynamic_context.rows[0].size() == 2);
        CHECK(inst.dynamic_context.rows[29][1] == table.columns[2][start + 29]);
    }
    // Chronological ordering.
    for (std::size_t i = 1; i < instances.size(); ++i) {
        CHECK(instances[i - 1].source_offset < instances[i].source_offset);
    }
}

TEST_CASE("make_windows rejects short series naming the requirement") {
    CHECK_THROWS_AS(make_windows(ramp_table(100), {168, 24, 1}, 0, {}), ValidationError);
    try {
        make_windows(ramp_table(100), {168, 24, 1}, 0, {});
    } catch (const ValidationError& ex) {
        const std::string msg = ex.what();
        CHECK(msg.find("insufficient length") != std::string::npos);
        CHECK(msg.find("192") != std::string::npos);
        CHECK(msg.find("100") != std::string::npos);
    }
}

TEST_CASE("make_windows rejects irregular timestamps") {
    auto table = ramp_table(60);
    table.timestamps[30] += 5;
    CHECK_THROWS_AS(make_windows(table, {20, 10, 10}, 0, {}), ValidationError);
}

TEST_CASE("mse matches hand arithmetic") {
    CHECK(mse({1.0, 2.0}, {1.0, 2.0}) == 0.0);
    CHECK(mse({1.0, 2.0}, {3.0, 2.0}) == doctest::Approx(2.0));
    CHECK(mse({0.0}, {5.0}) == doctest::Approx(25.0));
}

TEST_CASE("mae matches hand arithmetic") {
    CHECK(mae({1.0, 2.0}, {1.0, 2.0}) == 0.0);
    CHECK(mae({1.0, 2.0}, {3.0, 2.0}) == doctest::Approx(1.0));
    CHECK(mae({0.0}, {5.0}) == doctest::Approx(5.0));
}

TEST_CASE("metrics validate their inputs") {
    CHECK_THROWS_AS(mse({1.0}, {1.0, 2.0}), ValidationError);
    CHECK_THROWS_AS(mse({}, {}), ValidationError);
    CHECK_THROWS_AS(mae({std::nan("")}, {1.0}), ValidationError);
    CHECK_THROWS_AS(mse({1.0}, {std::numeric_limits<double>::infinity()}), ValidationError);
}

TEST_CASE("metric properties: translation invariance and pair permutation") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng() % 8;
        std::vector<double> p(n), t(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = dist(rng);
            t[i] = dist(rng);
        }
        const double c = dist(rng);
        std::vector<double> ps = p, ts = t;
        for (std::size_t i = 0; i < n; ++i) {
            ps[i] += c;
            ts[i] += c;
        }
        CHECK(mse(ps, ts) == doctest::Approx(mse(p, t)).epsilon(1e-9));
        CHECK(mae(ps, ts) == doctest::Approx(mae(p, t)).epsilon(1e-9));

        // Permuting the paired points together leaves both metrics unchanged.
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> pp(n), tp(n);
        for (std::size_t i = 0; i < n; ++i) {
            pp[i] = p[perm[i]];
            tp[i] = t[perm[i]];
        }
        CHECK(mse(pp, tp) == doctest::Approx(mse(p, t)).epsilon(1e-12));
        CHECK(mae(pp, tp) == doctest::Approx(mae(p, t)).epsilon(1e-12));
    }
}

TEST_CASE("compute_metrics pairs both measures") {
    const auto m = compute_metrics({1.0, 2.0}, {3.0, 2.0});
    CHECK(m.mse == doctest::Approx(2.0));
    CHECK(m.mae == doctest::Approx(1.0));
}

TEST_CASE("mae squared never exceeds mse") {
    std::mt19937 rng(123);
    std::uniform_real_distribution<double> dist(-50.0, 50.0);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 16;
        std::vector<double> p(n), t(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = dist(rng);
            t[i] = dist(rng);
        }
        const double a = mae(p, t);
        CHECK(a * a <= mse(p, t) + 1e-9);
    }
}

TEST_CASE("moving average forecast is flat") {
    SUBCASE("constant lookback") {
        const auto f = moving_average_forecast(std::vector<double>(10, 3.5), 4, 5);
        REQUIRE(f.size() == 4);
        for (double v : f) CHECK(v == doctest::Approx(3.5));
    }
    SUBCASE("window of the trailing two values") {
        const auto f = moving_average_forecast({0.0, 1.0, 2.0, 4.0}, 3, 2);
        REQUIRE(f.size() == 3);
        for (double v : f) CHECK(v == doctest::Approx(3.0));
    }
    SUBCASE("full-lookback window equals the lookback mean") {
        const std::vector<double> lb = {1.0, 2.0, 3.0, 4.0};
        const auto f = moving_average_forecast(lb, 5, lb.size());
        for (double v : f) CHECK(v == doctest::Approx(2.5));
    }
    SUBCASE("horizon values are all equal") {
        const auto f = moving_average_forecast({1.0, 7.0, 2.0}, 6, 3);
        for (double v : f) CHECK(v == f[0]);
    }
}

TEST_CASE("moving average rejects bad windows") {
    CHECK_THROWS_AS(moving_average_forecast({1.0, 2.0}, 3, 0), ValidationError);
    CHECK_THROWS_AS(moving_average_forecast({1.0, 2.0}, 3, 3), ValidationError);
}
