#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reclab/error.hpp"
#include "reclab/hitting.hpp"
#include "reclab/stats.hpp"
#include "support.hpp"

using namespace reclab;
using reclab::testing::Gen;

namespace {

SuspensionFlow unit_flow() { return build_suspension(make_system("doubling"), RoofFunction::constant(1.0), 1); }

SuspensionFlow affine_flow() {
    return build_suspension(make_system("doubling"), RoofFunction::affine(1.0, 1.0), 2);
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::DomainError;
}

// Independent oracle for the doubling map: a point is a string of bits and
// T^k x reads the string from bit k on. Returns the iterates k = 1..k_max
// whose image lies in the closed arc B_r(c).
std::vector<std::size_t> visits_of(const std::vector<unsigned char>& bits, double c, double r, std::size_t k_max) {
    std::vector<std::size_t> visits;
    double v = 0.0;
    for (std::size_t i = bits.size(); i-- > k_max;) v = (bits[i] + v) / 2;
    for (std::size_t k = k_max; k >= 1; --k) {
        v = (bits[k] + v) / 2;
        const double d = std::fabs(v - c);
        if (std::min(d, 1.0 - d) <= r) visits.push_back(k);
    }
    std::reverse(visits.begin(), visits.end());
    return visits;
}

std::vector<unsigned char> random_bits(Rng& rng, std::size_t n) {
    std::vector<unsigned char> bits(n);
    for (auto& b : bits) b = static_cast<unsigned char>(rng.next() >> 63);
    return bits;
}

// Lebesgue-random start; bits[0] is the leading binary digit.
std::vector<std::size_t> oracle_visits(Rng& rng, double c, double r, std::size_t k_max) {
    return visits_of(random_bits(rng, k_max + 64), c, r, k_max);
}

// Flow hit instants of the unit-roof suspension from a uniform start (x, h).
// The starting segment counts if x is in the shadow below the window.
std::vector<double> oracle_flow_hits(Rng& rng, double c, double s, double rho, std::size_t k_max) {
    const auto bits = random_bits(rng, k_max + 64);
    double x = 0.0;
    for (std::size_t i = 53; i-- > 0;) x = (bits[i] + x) / 2;
    const double h = rng.uniform();
    const double window = s - rho;
    std::vector<double> hits;
    const double d = std::fabs(x - c);
    if (std::min(d, 1.0 - d) <= rho && h < window) hits.push_back(window - h);
    for (std::size_t k : visits_of(bits, c, rho, k_max)) {
        hits.push_back((1.0 - h) + static_cast<double>(k - 1) + window);
    }
    return hits;
}

}  // namespace

TEST_CASE("exit_time") {
    const auto flow = unit_flow();
    const FlowBall ball{{{0.5, 0.0}, 0.5}, 0.1};
    CHECK(exit_time(flow, {{0.5, 0.0}, 0.45}, ball) == doctest::Approx(0.15));
    CHECK(exit_time(flow, {{0.9, 0.0}, 0.45}, ball) == 0.0);
    CHECK(exit_time(flow, {{0.5, 0.0}, 0.7}, ball) == 0.0);
    CHECK(code_of([&] { exit_time(flow, {{0.5, 0.0}, 0.45}, ball, 0.1); }) == ErrorCode::HorizonExceeded);

    SUBCASE("property: exit within 2 rho from any start in the ball") {
        Gen gen(41);
        const auto affine = affine_flow();
        for (int i = 0; i < 1000; ++i) {
            const double rho = gen.uniform(0.001, 0.2);
            const FlowBall b{{{gen.uniform(0.0, 1.0), 0.0}, gen.uniform(0.3, 0.8)}, rho};
            const FlowPoint p{{b.center.base[0] + gen.uniform(-rho, rho), 0.0}, b.center.height + gen.uniform(-rho, rho)};
            const double e = exit_time(affine, p, b);
            CHECK(e >= 0.0);
            CHECK(e <= 2 * rho);
        }
    }
}

TEST_CASE("hitting_times") {
    const auto flow = unit_flow();
    SUBCASE("first hit comes after the exit") {
        const FlowBall ball{{{0.5, 0.0}, 0.5}, 0.1};
        const FlowPoint p{{0.52, 0.0}, 0.55};
        const auto rec = hitting_times(flow, p, ball, 3, 1e6, 7);
        REQUIRE(!rec.hits.empty());
        CHECK(rec.exit_time == doctest::Approx(0.05));
        CHECK(rec.hits.front() > rec.exit_time);
    }
    SUBCASE("orbit table") {
        // 0.45 -> 0.9, 0.8, 0.6, 0.2, 0.4, 0.8, 0.6: visits the arc around 0.62 at 3, 7, 11.
        const FlowBall ball{{{0.62, 0.0}, 0.5}, 0.05};
        const auto rec = hitting_times(flow, {{0.45, 0.0}, 0.0}, ball, 3, 1e6, 8);
        REQUIRE(rec.hits.size() == 3);
        CHECK(rec.hits[0] == doctest::Approx(3.45));
        CHECK(rec.hits[1] == doctest::Approx(7.45));
        CHECK(rec.hits[2] == doctest::Approx(11.45));
        CHECK_FALSE(rec.truncated);
    }
    SUBCASE("start below the window in the shadow") {
        const FlowBall ball{{{0.5, 0.0}, 0.5}, 0.1};
        const auto rec = hitting_times(flow, {{0.45, 0.0}, 0.0}, ball, 1, 1e6, 9);
        REQUIRE(rec.hits.size() == 1);
        CHECK(rec.hits[0] == doctest::Approx(0.4));
    }
    SUBCASE("short horizon truncates") {
        const FlowBall ball{{{0.5, 0.0}, 0.5}, 0.1};
        const auto rec = hitting_times(flow, {{0.9, 0.0}, 0.0}, ball, 2, 0.1, 10);
        CHECK(rec.hits.empty());
        CHECK(rec.truncated);
    }
    SUBCASE("dirty targets are refused") {
        CHECK(code_of([&] { hitting_times(flow, {{0.9, 0.0}, 0.0}, {{{0.5, 0.0}, 0.05}, 0.1}, 1, 10.0); }) ==
              ErrorCode::DirtyFlowBox);
    }
    SUBCASE("property: hits increase and a longer horizon only extends them") {
        Gen gen(42);
        const auto affine = affine_flow();
        for (int i = 0; i < 300; ++i) {
            const double rho = gen.uniform(0.01, 0.1);
            const FlowBall ball{{{gen.uniform(0.0, 1.0), 0.0}, gen.uniform(0.2, 0.8)}, rho};
            const Point x{gen.uniform(0.0, 1.0), 0.0};
            const FlowPoint p{x, gen.uniform(0.0, 1.0) * affine.roof_at(x)};
            const double horizon = gen.uniform(5.0, 200.0);
            const std::uint64_t seed = gen.seed();
            const auto a = hitting_times(affine, p, ball, 20, horizon, seed);
            const auto b = hitting_times(affine, p, ball, 20, 2 * horizon, seed);
            for (std::size_t k = 1; k < a.hits.size(); ++k) {
                CHECK(a.hits[k] > a.hits[k - 1]);
                // The next entry waits at least for the exit through the top of the window.
                CHECK(a.hits[k] - a.hits[k - 1] >= 2 * rho);
            }
            if (!a.hits.empty()) CHECK(a.hits.front() > a.exit_time);
            REQUIRE(b.hits.size() >= a.hits.size());
            CHECK(std::equal(a.hits.begin(), a.hits.end(), b.hits.begin()));
        }
    }
}

TEST_CASE("discrete_hitting_times") {
    auto doubling = make_system("doubling");
    SUBCASE("orbit table") {
        // 0.45 -> 0.9, 0.8, 0.6, 0.2, 0.4, 0.8, 0.6, 0.2, 0.4
        const auto rec = discrete_hitting_times(*doubling, {0.45, 0.0}, {{0.4, 0.0}, 0.05}, 2, 100, 11);
        CHECK(rec.hits == std::vector<std::uint64_t>{5, 9});
    }
    SUBCASE("whole domain") {
        const auto rec = discrete_hitting_times(*doubling, {0.123, 0.0}, {{0.5, 0.0}, 0.5}, 6, 100, 12);
        CHECK(rec.hits == std::vector<std::uint64_t>{1, 2, 3, 4, 5, 6});
    }
    SUBCASE("fixed point") {
        const auto rec = discrete_hitting_times(*doubling, {0.0, 0.0}, {{0.0, 0.0}, 0.01}, 5, 100, 13);
        CHECK(rec.hits == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
    }
    SUBCASE("truncation") {
        const auto rec = discrete_hitting_times(*doubling, {0.45, 0.0}, {{0.4, 0.0}, 0.05}, 5, 6, 14);
        CHECK(rec.hits == std::vector<std::uint64_t>{5});
        CHECK(rec.truncated);
    }
    SUBCASE("property: matches a direct orbit scan") {
        Gen gen(43);
        auto lsv = make_system("lsv", {{"alpha", 0.5}});
        for (int i = 0; i < 200; ++i) {
            const Point x = gen.point(*lsv);
            const BaseBall target{gen.point(*lsv), gen.uniform(0.01, 0.2)};
            const auto rec = discrete_hitting_times(*lsv, x, target, 4, 2000, 0);
            std::vector<std::uint64_t> scan;
            Point y = x;
            for (std::uint64_t k = 1; k <= 2000 && scan.size() < 4; ++k) {
                y = lsv->apply(y);
                if (lsv->distance(y, target.center) <= target.radius) scan.push_back(k);
            }
            CHECK(rec.hits == scan);
        }
    }
}

TEST_CASE("flow_base_consistency") {
    SUBCASE("constant roof rebuilds exactly") {
        const auto flow = unit_flow();
        const FlowBall ball{{{0.62, 0.0}, 0.5}, 0.05};
        for (std::size_t m = 1; m <= 3; ++m) CHECK(flow_base_consistency(flow, {{0.45, 0.0}, 0.0}, ball, m, 8) == 0.0);
    }
    SUBCASE("property: affine roof residual below 1e-6 tau") {
        Gen gen(44);
        const auto flow = affine_flow();
        for (int i = 0; i < 1000; ++i) {
            const double rho = gen.uniform(0.01, 0.1);
            const FlowBall ball{{{gen.uniform(0.0, 1.0), 0.0}, gen.uniform(0.2, 0.8)}, rho};
            const Point x{gen.uniform(0.0, 1.0), 0.0};
            const FlowPoint p{x, gen.uniform(0.0, 1.0) * flow.roof_at(x)};
            const std::uint64_t seed = gen.seed();
            const std::size_t m = gen.integer(1, 3);
            const auto rec = hitting_times(flow, p, ball, m, 1e12, seed);
            REQUIRE(rec.hits.size() == m);
            CHECK(flow_base_consistency(flow, p, ball, m, seed) <= 1e-6 * rec.hits.back());
        }
    }
    SUBCASE("too few hits") {
        const auto flow = unit_flow();
        CHECK(code_of([&] {
                  flow_base_consistency(flow, {{0.45, 0.0}, 0.0}, {{{0.62, 0.0}, 0.5}, 0.05}, 3, 8, 5.0);
              }) == ErrorCode::TruncatedRecord);
    }
}

TEST_CASE("normalized survival matches the independent oracle") {
    const double c = 0.618;
    const std::vector<double> grid{0.0, 0.25, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0};
    SurvivalOptions options;
    options.n_trajectories = 50'000;

    SUBCASE("flow, rho = 0.02") {
        const auto flow = unit_flow();
        const FlowBall ball{{{c, 0.0}, 0.5}, 0.02};
        const auto result = normalized_survival(flow, ball, grid, 45, options);
        CHECK(result.survival.front() == 1.0);
        Rng rng(46);
        const std::size_t n = 50'000;
        std::vector<double> first;
        for (std::size_t i = 0; i < n; ++i) {
            const auto hits = oracle_flow_hits(rng, c, 0.5, 0.02, 1400);
            first.push_back(hits.empty() ? 1e9 : hits.front() * 0.04);
        }
        for (std::size_t j = 0; j < grid.size(); ++j) {
            const auto alive = static_cast<std::size_t>(std::count_if(first.begin(), first.end(), [&](double t) { return t > grid[j]; }));
            const auto o = proportion(alive, n);
            CHECK(std::fabs(result.survival[j] - o.value) <= 3 * std::hypot(result.ci[j], o.ci) + 0.002);
        }
        // The exponential limit is approached at rate about mu log(1/mu).
        CHECK(std::fabs(result.survival[3] - std::exp(-0.7)) <= 0.05);
    }
    SUBCASE("map, r = 0.01") {
        auto doubling = make_system("doubling");
        const auto result = normalized_survival(*doubling, BaseBall{{c, 0.0}, 0.01}, grid, 47, options);
        CHECK(result.survival.front() == 1.0);
        Rng rng(48);
        const std::size_t n = 50'000;
        std::vector<double> first;
        for (std::size_t i = 0; i < n; ++i) {
            const auto visits = oracle_visits(rng, c, 0.01, 3000);
            first.push_back(visits.empty() ? 1e9 : static_cast<double>(visits.front()) * 0.02);
        }
        for (std::size_t j = 0; j < grid.size(); ++j) {
            const auto alive = static_cast<std::size_t>(std::count_if(first.begin(), first.end(), [&](double t) { return t > grid[j]; }));
            const auto o = proportion(alive, n);
            CHECK(std::fabs(result.survival[j] - o.value) <= 3 * std::hypot(result.ci[j], o.ci) + 0.002);
        }
        CHECK(std::fabs(result.survival[4] - std::exp(-1.0)) <= 0.05);
    }
    SUBCASE("halving the radius keeps the curve within 0.02") {
        auto doubling = make_system("doubling");
        const std::vector<double> ts{1.0};
        SurvivalOptions small = options;
        small.n_trajectories = 20'000;
        // At r = 0.01 the curve still sits about 0.03 below e^-1, so compare one scale further down.
        const auto coarse = normalized_survival(*doubling, BaseBall{{c, 0.0}, 0.005}, ts, 49, small);
        const auto fine = normalized_survival(*doubling, BaseBall{{c, 0.0}, 0.0025}, ts, 50, small);
        CHECK(std::fabs(coarse.survival[0] - fine.survival[0]) <= std::hypot(coarse.ci[0], fine.ci[0]) + 0.02);
    }
}

TEST_CASE("poisson_counts") {
    const auto flow = unit_flow();
    const FlowBall ball{{{0.618, 0.0}, 0.5}, 0.02};
    SurvivalOptions options;
    options.n_trajectories = 50'000;
    const auto table = poisson_counts(flow, ball, 1.0, 3, 51, options);
    CHECK(std::accumulate(table.frequency.begin(), table.frequency.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(table.predicted[0] == doctest::Approx(std::exp(-1.0)));
    CHECK(table.predicted[2] == doctest::Approx(std::exp(-1.0) / 2));

    // Oracle: hit counts of independently simulated unit-roof trajectories.
    Rng rng(52);
    const std::size_t n = 50'000;
    std::vector<std::size_t> tally(4, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto hits = oracle_flow_hits(rng, 0.618, 0.5, 0.02, 60);
        const auto k = std::count_if(hits.begin(), hits.end(), [](double t) { return t * 0.04 <= 1.0; });
        ++tally[std::min<std::size_t>(static_cast<std::size_t>(k), 3)];
    }
    for (std::size_t m = 0; m < 4; ++m) {
        const auto o = proportion(tally[m], n);
        CHECK(std::fabs(table.frequency[m] - o.value) <= 3 * std::hypot(table.ci[m], o.ci) + 0.002);
        CHECK(std::fabs(table.frequency[m] - table.predicted[m]) <= 0.05);
    }

    SUBCASE("T = 2") {
        const auto t2 = poisson_counts(flow, ball, 2.0, 3, 53, options);
        CHECK(t2.predicted[2] == doctest::Approx(2 * std::exp(-2.0)));
        CHECK(std::fabs(t2.frequency[2] - t2.predicted[2]) <= 0.05);
    }
    SUBCASE("m = 0 row equals the survival at T") {
        const std::vector<double> grid{1.0};
        const auto s = normalized_survival(flow, ball, grid, 51, options);
        CHECK(std::fabs(table.frequency[0] - s.survival[0]) <= table.ci[0]);
    }
    SUBCASE("bad arguments") {
        CHECK(code_of([&] { poisson_counts(flow, ball, 1.0, 1, 1); }) == ErrorCode::DomainError);
        CHECK(poisson_pmf(2.0, 0) == doctest::Approx(std::exp(-2.0)));
    }
}

TEST_CASE("kac_check") {
    auto doubling = make_system("doubling");
    SUBCASE("whole domain") {
        KacOptions options;
        options.n_starts = 1000;
        options.measure_samples = 1000;
        const auto k = kac_check(*doubling, {{0.5, 0.0}, 0.5}, 54, options);
        CHECK(k.product.value == 1.0);
        CHECK(k.mean_return.value == 1.0);
    }
    SUBCASE("doubling [0.4, 0.6]") {
        const auto k = kac_check(*doubling, {{0.5, 0.0}, 0.1}, 55);
        CHECK(std::fabs(k.product.value - 1.0) <= 0.02);
        CHECK(std::fabs(k.mean_return.value - 5.0) <= 0.1);
        CHECK(k.censored == 0);
    }
    SUBCASE("lsv(0.5) [0.5, 0.7]") {
        auto lsv = make_system("lsv", {{"alpha", 0.5}});
        const auto k = kac_check(*lsv, {{0.6, 0.0}, 0.1}, 56);
        CHECK(std::fabs(k.product.value - 1.0) <= 0.05);
        // Oracle: mu(A) from one long orbit, independent of the sampler.
        Point x{0.377, 0.0};
        std::size_t inside = 0;
        const std::size_t steps = 10'000'000;
        for (std::size_t i = 0; i < steps; ++i) {
            x = lsv->apply(x);
            inside += std::fabs(x[0] - 0.6) <= 0.1;
        }
        const double mu = static_cast<double>(inside) / steps;
        CHECK(std::fabs(k.mean_return.value * mu - 1.0) <= 0.05);
    }
    SUBCASE("empty target") {
        auto lorenz = make_system("lorenz2d");
        KacOptions options;
        options.measure_samples = 10'000;
        CHECK(code_of([&] { kac_check(*lorenz, {{0.0, 0.99}, 1e-4}, 57, options); }) == ErrorCode::ZeroBallMeasure);
    }
}
