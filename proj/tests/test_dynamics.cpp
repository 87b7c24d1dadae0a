#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "reclab/error.hpp"
#include "reclab/measure.hpp"
#include "reclab/parallel.hpp"
#include "reclab/stats.hpp"
#include "reclab/systems.hpp"
#include "support.hpp"

using namespace reclab;
using reclab::testing::Gen;

TEST_CASE("iterate follows the map formulas") {
    auto doubling = make_system("doubling");
    CHECK(iterate(*doubling, {0.3, 0.0}, 0)[0] == 0.3);
    CHECK(iterate(*doubling, {0.3, 0.0}, 1)[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(iterate(*doubling, {0.3, 0.0}, 3)[0] == doctest::Approx(0.4).epsilon(1e-14));

    auto lsv = make_system("lsv", {{"alpha", 1.0}});
    CHECK(lsv->apply({0.25, 0.0})[0] == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(lsv->apply({0.75, 0.0})[0] == doctest::Approx(0.5).epsilon(1e-15));

    Lorenz1dMap lorenz(0.7, 1.8);
    CHECK(lorenz.f(1e-10) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(lorenz.f(-1e-10) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(lorenz.f(1.0) == doctest::Approx(0.8));
}

TEST_CASE("singular orbits and bad parameters raise typed errors") {
    auto lorenz = make_system("lorenz1d");
    try {
        lorenz->apply({0.0, 0.0});
        FAIL("expected SingularOrbit");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SingularOrbit);
    }
    auto config_code = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::DomainError;
    };
    CHECK(config_code([] { make_system("tent"); }) == ErrorCode::ConfigError);
    CHECK(config_code([] { make_system("lsv", {{"alpha", 1.5}}); }) == ErrorCode::ConfigError);
    CHECK(config_code([] { make_system("lsv", {{"beta", 0.5}}); }) == ErrorCode::ConfigError);
    CHECK(config_code([] { make_system("lorenz2d", {{"lambda", 0.3}, {"c", 0.9}}); }) == ErrorCode::ConfigError);
}

TEST_CASE("property: iterate is a semigroup") {
    Gen gen(101);
    for (const auto& [name, params] : builtin_systems()) {
        auto system = make_system(name, params);
        int checked = 0;
        for (int i = 0; i < 200; ++i) {
            const Point x = gen.point(*system);
            const std::size_t m = gen.integer(0, 30);
            const std::size_t n = gen.integer(0, 30);
            try {
                const Point a = iterate(*system, x, m + n);
                const Point b = iterate(*system, iterate(*system, x, m), n);
                CHECK(a == b);
                ++checked;
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::SingularOrbit);
            }
        }
        CHECK(checked > 150);
    }
}

TEST_CASE("lorenz1d defaults are uniformly expanding") {
    Lorenz1dMap lorenz(0.7, 1.8);
    for (int i = 1; i <= 1000; ++i) {
        const double x = i / 1000.0;
        CHECK(lorenz.derivative(x) > 1.0);
        CHECK(lorenz.derivative(-x) > 1.0);
    }
}

TEST_CASE("simulated doubling orbits stay Lebesgue-typical") {
    auto doubling = make_system("doubling");
    Rng rng(5);
    Orbit orbit(*doubling, {0.3, 0.0}, rng);
    std::size_t left = 0;
    const std::size_t n = 200'000;
    for (std::size_t i = 0; i < n; ++i) {
        orbit.step();
        left += orbit.point()[0] < 0.5;
    }
    CHECK(std::fabs(static_cast<double>(left) / n - 0.5) < 0.01);
}

TEST_CASE("doubling orbits start at the requested point") {
    auto doubling = make_system("doubling");
    Rng rng(1);
    Orbit orbit(*doubling, {0.3, 0.0}, rng);
    CHECK(orbit.point()[0] == doctest::Approx(0.3).epsilon(1e-15));
    const double expected[] = {0.6, 0.2, 0.4, 0.8, 0.6};
    for (double e : expected) {
        orbit.step();
        CHECK(orbit.point()[0] == doctest::Approx(e).epsilon(1e-13));
    }
}

TEST_CASE("sample_invariant") {
    auto doubling = make_system("doubling");
    SUBCASE("doubling mean is one half") {
        const std::size_t n = 100'000;
        const auto s = sample_invariant(*doubling, 3, n);
        double mean = 0.0;
        for (const auto& x : s) mean += x[0];
        mean /= n;
        CHECK(std::fabs(mean - 0.5) <= 3.0 / std::sqrt(static_cast<double>(n)));
    }
    SUBCASE("lsv(0.5) piles up near the neutral fixed point") {
        // Oracle: the invariant density grows like x^-alpha near 0, so [0, 0.1]
        // carries more than its Lebesgue share; a plain long orbit agrees.
        auto lsv = make_system("lsv", {{"alpha", 0.5}});
        const auto s = sample_invariant(*lsv, 4, 1'000'000);
        const auto near = std::count_if(s.begin(), s.end(), [](const Point& x) { return x[0] <= 0.1; });
        const double fraction = static_cast<double>(near) / static_cast<double>(s.size());
        CHECK(fraction > 0.1);
        Point x{0.3141, 0.0};
        std::size_t orbit_near = 0;
        const std::size_t steps = 10'000'000;
        for (std::size_t i = 0; i < steps; ++i) {
            x = lsv->apply(x);
            orbit_near += x[0] <= 0.1;
        }
        CHECK(std::fabs(fraction - static_cast<double>(orbit_near) / steps) < 0.02);
    }
    SUBCASE("count zero gives no samples") { CHECK(sample_invariant(*doubling, 3, 0).empty()); }
    SUBCASE("reproducible across worker counts") {
        auto lorenz = make_system("lorenz2d");
        set_workers(1);
        const auto a = sample_invariant(*lorenz, 77, 20'000);
        set_workers(4);
        const auto b = sample_invariant(*lorenz, 77, 20'000);
        set_workers(1);
        CHECK(a == b);
        CHECK(sample_invariant(*lorenz, 78, 100) != std::vector<Point>(a.begin(), a.begin() + 100));
    }
    SUBCASE("independent points use one orbit per point") {
        const auto a = sample_invariant(*doubling, 9, 50, independent_points({}));
        std::set<double> distinct;
        for (const auto& x : a) distinct.insert(x[0]);
        CHECK(distinct.size() == a.size());
    }
}

TEST_CASE("ball_measure") {
    auto doubling = make_system("doubling");
    const auto s = sample_invariant(*doubling, 11, 100'000);
    SUBCASE("Lebesgue interval") {
        const auto m = ball_measure(*doubling, {0.5, 0.0}, 0.1, s);
        CHECK(std::fabs(m.value - 0.2) <= m.ci);
        CHECK(m.ci == doctest::Approx(1.96 * std::sqrt(m.value * (1 - m.value) / 100'000)));
    }
    SUBCASE("circle wrap") {
        const auto m = ball_measure(*doubling, {0.05, 0.0}, 0.1, s);
        CHECK(std::fabs(m.value - 0.2) <= 3 * m.ci);
    }
    SUBCASE("empty sample") {
        try {
            ball_measure(*doubling, {0.5, 0.0}, 0.1, std::vector<Point>{});
            FAIL("expected EmptySample");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::EmptySample);
        }
    }
    SUBCASE("property: doubling matches arc length within 3 CI") {
        Gen gen(12);
        for (int i = 0; i < 25; ++i) {
            const double z = gen.uniform(0.0, 1.0);
            const double r = gen.uniform(0.005, 0.4);
            const auto m = ball_measure(*doubling, {z, 0.0}, r, s);
            CHECK(std::fabs(m.value - reclab::testing::arc_length(r)) <= 3 * m.ci);
        }
    }
}

TEST_CASE("lorenz2d ball measure agrees with a long orbit count") {
    auto lorenz = make_system("lorenz2d");
    const auto s = sample_invariant(*lorenz, 13, 1'000'000);
    const Point z = s[12345];
    const auto m = ball_measure(*lorenz, z, 0.05, s);
    CHECK(m.value > 0.0);
    // Oracle: Birkhoff count along one orbit of 10^7 iterates.
    Point x{0.123, 0.4};
    std::size_t inside = 0;
    std::size_t steps = 0;
    for (std::size_t i = 0; i < 10'000'000; ++i) {
        x = lorenz->apply(x);
        if (i < 1000) continue;
        inside += lorenz->distance(x, z) <= 0.05;
        ++steps;
    }
    const double orbit = static_cast<double>(inside) / steps;
    CHECK(std::fabs(m.value - orbit) <= 0.1 * orbit + 3 * m.ci);
}

TEST_CASE("measure profiles") {
    auto doubling = make_system("doubling");
    const auto s = sample_invariant(*doubling, 14, 200'000);
    SUBCASE("Lebesgue profile and inverse") {
        const std::vector<double> radii{0.05, 0.1, 0.2};
        const auto p = measure_profile(*doubling, {0.5, 0.0}, radii, s);
        const double expected[] = {0.1, 0.2, 0.4};
        for (int i = 0; i < 3; ++i) {
            const auto m = proportion(static_cast<std::size_t>(std::llround(p.values()[i] * 200'000)), 200'000);
            CHECK(std::fabs(p.values()[i] - expected[i]) <= 3 * m.ci);
        }
        const MeasureProfile exact({0.5, 0.0}, radii, {0.1, 0.2, 0.4}, 0);
        CHECK(exact.inverse(0.2) == doctest::Approx(0.1));
        CHECK(exact(0.1) == doctest::Approx(0.2));
        CHECK(exact(0.075) == doctest::Approx(0.15));
    }
    SUBCASE("lsv(0.5) exceeds Lebesgue near 0") {
        auto lsv = make_system("lsv", {{"alpha", 0.5}});
        const auto ls = sample_invariant(*lsv, 15, 200'000);
        const std::vector<double> radii{0.005, 0.01, 0.02, 0.04};
        const auto p = measure_profile(*lsv, {0.01, 0.0}, radii, ls);
        for (std::size_t i = 0; i < radii.size(); ++i) {
            const double lebesgue = std::min(0.01 + radii[i], 1.0) - std::max(0.01 - radii[i], 0.0);
            CHECK(p.values()[i] > lebesgue);
        }
    }
    SUBCASE("property: monotone values and l(h(r)) <= r") {
        Gen gen(16);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t k = gen.integer(2, 30);
            std::vector<double> radii, values;
            double r = gen.uniform(1e-4, 1e-2);
            for (std::size_t i = 0; i < k; ++i) {
                radii.push_back(r);
                values.push_back(gen.uniform(0.0, 1.2));
                r *= gen.uniform(1.01, 2.0);
            }
            const MeasureProfile p({0.0, 0.0}, radii, values, 1);
            for (std::size_t i = 0; i < k; ++i) {
                CHECK(p.values()[i] >= 0.0);
                CHECK(p.values()[i] <= 1.0);
                if (i) CHECK(p.values()[i] >= p.values()[i - 1]);
                CHECK(p.inverse(p(radii[i])) <= radii[i] * (1 + 1e-12));
            }
        }
    }
    SUBCASE("out of range") {
        const MeasureProfile p({0.5, 0.0}, {0.1, 0.2}, {0.2, 0.4}, 0);
        try {
            p(0.3);
            FAIL("expected ProfileRangeExceeded");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ProfileRangeExceeded);
        }
        try {
            p.inverse(0.5);
            FAIL("expected ProfileRangeExceeded");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ProfileRangeExceeded);
        }
    }
    SUBCASE("streamed profile equals the stored-sample profile") {
        auto lsv = make_system("lsv", {{"alpha", 0.3}});
        const auto radii = geometric_grid(1e-3, 0.3, 20);
        const auto stored = sample_invariant(*lsv, 17, 30'000);
        const auto a = measure_profile(*lsv, {0.4, 0.0}, radii, stored);
        const auto b = measure_profile(*lsv, {0.4, 0.0}, radii, 17, 30'000);
        CHECK(a.values() == b.values());
    }
}

TEST_CASE("annulus ratio") {
    auto doubling = make_system("doubling");
    const auto s = sample_invariant(*doubling, 18, 4'000'000);
    const auto a = annulus_ratio(*doubling, {0.3, 0.0}, 0.01, 1.5, s);
    CHECK(std::fabs(a.ratio - 0.1) <= 3 * a.ci);
    const auto b = annulus_ratio(*doubling, {0.3, 0.0}, 1e-4, 1.5, s);
    CHECK(std::fabs(b.ratio - 0.01) <= 3 * b.ci);
    try {
        annulus_ratio(*doubling, {0.3, 0.0}, 0.01, 0.5, s);
        FAIL("expected DomainError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DomainError);
    }
}

TEST_CASE("local dimension") {
    SUBCASE("doubling is one-dimensional") {
        auto doubling = make_system("doubling");
        const auto s = sample_invariant(*doubling, 19, 1'000'000);
        const auto d = local_dimension(*doubling, {0.61, 0.0}, geometric_grid(1e-3, 0.1, 10), s);
        CHECK(d.valid);
        CHECK(std::fabs(d.slope - 1.0) <= 0.05);
        CHECK(d.d_lower <= d.slope);
        CHECK(d.d_upper >= d.slope);
    }
    SUBCASE("lorenz2d lies between one and two") {
        auto lorenz = make_system("lorenz2d");
        const auto s = sample_invariant(*lorenz, 20, 1'000'000);
        const auto d = local_dimension(*lorenz, s[777], geometric_grid(0.01, 0.1, 8), s);
        CHECK(d.slope > 1.0);
        CHECK(d.slope < 2.0);
        // Oracle: box counting on an orbit of 10^6 points.
        std::set<std::pair<long, long>> fine, coarse;
        Point x{0.2, 0.5};
        for (int i = 0; i < 1'000'000; ++i) {
            x = lorenz->apply(x);
            if (i < 1000) continue;
            fine.insert({std::lround(std::floor(x[0] / 0.005)), std::lround(std::floor(x[1] / 0.005))});
            coarse.insert({std::lround(std::floor(x[0] / 0.02)), std::lround(std::floor(x[1] / 0.02))});
        }
        const double box = std::log(static_cast<double>(fine.size()) / coarse.size()) / std::log(4.0);
        CHECK(box > 1.0);
        CHECK(box < 2.0);
    }
    SUBCASE("empty balls are rejected") {
        auto lorenz = make_system("lorenz2d");
        const auto s = sample_invariant(*lorenz, 21, 100'000);
        try {
            local_dimension(*lorenz, {0.0, 0.0}, geometric_grid(0.01, 0.1, 5), s);
            FAIL("expected ZeroBallMeasure");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ZeroBallMeasure);
        }
    }
}
