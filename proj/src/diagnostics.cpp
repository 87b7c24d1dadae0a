#include "reclab/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "reclab/error.hpp"
#include "reclab/parallel.hpp"

namespace reclab {

namespace {

constexpr std::size_t kChunk = 4096;
constexpr int kGridHalf = 20;

std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

bool in_set(const BaseSystem& system, const BaseBall& set, const Point& x) {
    return system.distance(x, set.center) <= set.radius;
}

// Grid of step r/20 over the closed ball B_r(x); points outside the domain are dropped.
std::vector<Point> ball_grid(const BaseSystem& system, const Point& x, double r) {
    std::vector<Point> grid;
    const double h = r / kGridHalf;
    auto wrap = [&](double v) {
        if (!system.periodic()) return v;
        v -= std::floor(v);
        return v >= 1.0 ? 0.0 : v;
    };
    const int second = system.dim() == 2 ? kGridHalf : 0;
    for (int a = -kGridHalf; a <= kGridHalf; ++a) {
        for (int b = -second; b <= second; ++b) {
            const Point y{wrap(x[0] + a * h), system.dim() == 2 ? x[1] + b * h : 0.0};
            if (system.contains(y)) grid.push_back(y);
        }
    }
    return grid;
}

// True if some grid point y of B_r(x) has T^j(y) in B_r(x) for a j in [j_lo, j_hi].
bool short_return(const BaseSystem& system, const Point& x, double r, std::size_t j_lo, std::size_t j_hi,
                  std::size_t& singular) {
    for (const Point& start : ball_grid(system, x, r)) {
        Point y = start;
        try {
            for (std::size_t j = 1; j <= j_hi; ++j) {
                y = system.apply(y);
                if (j >= j_lo && system.distance(y, x) <= r) return true;
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SingularOrbit) throw;
            ++singular;
        }
    }
    return false;
}

ShortReturnEstimate count_short_returns(const BaseSystem& system, double r, std::size_t j_lo, std::size_t j_hi,
                                        std::span<const Point> samples) {
    if (samples.empty()) throw Error(ErrorCode::EmptySample, "short-return estimate needs samples");
    if (!(r > 0.0)) throw Error(ErrorCode::DomainError, "radius must be positive");
    if (j_lo == 0) throw Error(ErrorCode::DomainError, "return lag must be at least 1");
    const std::size_t chunks = chunk_count(samples.size());
    std::vector<std::size_t> found(chunks, 0), singular(chunks, 0);
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t end = std::min(samples.size(), (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i) {
            found[c] += short_return(system, samples[i], r, j_lo, j_hi, singular[c]);
        }
    });
    ShortReturnEstimate out;
    std::size_t total = 0;
    for (std::size_t c = 0; c < chunks; ++c) {
        total += found[c];
        out.singular_skipped += singular[c];
    }
    out.measure = proportion(total, samples.size());
    return out;
}

}  // namespace

double empirical_lipschitz(const LipschitzObservable& phi, const BaseSystem& system,
                           std::span<const Point> samples) {
    double worst = 0.0;
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const double d = system.distance(samples[i], samples[i - 1]);
        if (d > 0.0) worst = std::max(worst, std::fabs(phi(samples[i]) - phi(samples[i - 1])) / d);
    }
    return worst;
}

Estimate correlation(const BaseSystem& system, const LipschitzObservable& phi, const BaseBall& psi_set,
                     std::size_t j, std::span<const Point> samples) {
    if (samples.empty()) throw Error(ErrorCode::EmptySample, "correlation needs samples");
    const std::size_t n = samples.size();
    std::vector<double> a(n), b(n);
    parallel_for(chunk_count(n), [&](std::size_t c) {
        const std::size_t end = std::min(n, (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i) {
            a[i] = phi(samples[i]);
            b[i] = in_set(system, psi_set, iterate(system, samples[i], j)) ? 1.0 : 0.0;
        }
    });
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);
    std::vector<double> products(n);
    for (std::size_t i = 0; i < n; ++i) products[i] = (a[i] - mean_a) * (b[i] - mean_b);
    return sample_mean(products);
}

ShortReturnEstimate short_return_measure(const BaseSystem& system, double r, std::size_t j,
                                         std::span<const Point> samples) {
    return count_short_returns(system, r, j, j, samples);
}

ShortReturnEstimate vr_measure(const BaseSystem& system, double r, std::size_t j_max,
                               std::span<const Point> samples) {
    return count_short_returns(system, r, 1, j_max, samples);
}

// ---------------------------------------------------------------- tower tail

TowerTail tower_tail(const BaseSystem& system, std::span<const double> n_grid, std::uint64_t seed,
                     const TowerTailOptions& options) {
    if (dynamic_cast<const LsvMap*>(&system) == nullptr) {
        throw Error(ErrorCode::DomainError, "tower tail needs a system with a designated tower base (lsv)");
    }
    if (n_grid.empty()) throw Error(ErrorCode::DomainError, "empty n grid");
    if (!std::is_sorted(n_grid.begin(), n_grid.end())) throw Error(ErrorCode::DomainError, "n grid must be sorted");
    const std::size_t g = n_grid.size();
    const std::size_t per_block = std::max<std::size_t>(1, options.block_returns);
    const std::size_t blocks = (options.n_returns + per_block - 1) / per_block;
    // hist[b][i]: returns whose length exceeds exactly the first i grid values.
    std::vector<std::vector<std::size_t>> hist(blocks, std::vector<std::size_t>(g + 1, 0));
    std::vector<std::size_t> censored(blocks, 0);

    parallel_for(blocks, [&](std::size_t b) {
        const std::size_t want = std::min(per_block, options.n_returns - b * per_block);
        Rng rng(derive_seed(seed, streams::trajectories, b));
        auto fresh_orbit = [&] {
            Orbit orbit(system, system.uniform_point(rng), rng);
            for (std::size_t i = 0; i < system.burn_in(); ++i) orbit.step();
            while (!LsvMap::in_tower_base(orbit.point())) orbit.step();
            return orbit;
        };
        Orbit orbit = fresh_orbit();
        std::size_t got = 0;
        while (got < want) {
            std::uint64_t steps = 0;
            bool cut = false;
            do {
                orbit.step();
                if (++steps > options.horizon) {
                    cut = true;
                    break;
                }
            } while (!LsvMap::in_tower_base(orbit.point()));
            ++got;
            if (cut) {
                ++censored[b];
                hist[b][g] += 1;
                orbit = fresh_orbit();
                continue;
            }
            const auto below = std::lower_bound(n_grid.begin(), n_grid.end(), static_cast<double>(steps)) -
                               n_grid.begin();
            hist[b][static_cast<std::size_t>(below)] += 1;
        }
    });

    std::vector<std::size_t> total(g + 1, 0);
    TowerTail out;
    for (std::size_t b = 0; b < blocks; ++b) {
        for (std::size_t i = 0; i <= g; ++i) total[i] += hist[b][i];
        out.censored += censored[b];
    }
    for (std::size_t i = 0; i <= g; ++i) out.returns += total[i];
    out.n_grid.assign(n_grid.begin(), n_grid.end());
    std::vector<double> log_n, log_tail;
    // exceed[i] = #returns longer than n_grid[i] = sum of hist over bins above i.
    std::size_t exceed = out.returns;
    for (std::size_t i = 0; i < g; ++i) {
        exceed -= total[i];
        const Estimate p = proportion(exceed, out.returns);
        out.tail.push_back(p.value);
        out.ci.push_back(p.ci);
        if (n_grid[i] >= options.fit_min_n && exceed >= options.min_count && p.value > 0.0) {
            log_n.push_back(std::log(n_grid[i]));
            log_tail.push_back(std::log(p.value));
        }
    }
    out.fitted_points = log_n.size();
    if (log_n.size() >= 2) out.exponent = fit_line(log_n, log_tail).slope;
    return out;
}

// ---------------------------------------------------------------- D2 / D'

std::vector<double> isotonic_decreasing(std::span<const double> values) {
    struct Block {
        double sum;
        std::size_t size;
        double mean() const { return sum / static_cast<double>(size); }
    };
    std::vector<Block> blocks;
    for (double v : values) {
        blocks.push_back({v, 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() < blocks.back().mean()) {
            blocks[blocks.size() - 2].sum += blocks.back().sum;
            blocks[blocks.size() - 2].size += blocks.back().size;
            blocks.pop_back();
        }
    }
    std::vector<double> out;
    for (const auto& b : blocks) out.insert(out.end(), b.size, b.mean());
    return out;
}

D2Curve d2_surrogate(const BaseSystem& system, const BaseBall& target, std::size_t l,
                     std::span<const double> t_grid, std::uint64_t seed, const SurrogateOptions& options) {
    if (t_grid.empty()) throw Error(ErrorCode::DomainError, "empty t grid");
    const auto base = sample_invariant(system, derive_seed(seed, streams::measure), options.measure_samples,
                                       options.sampler);
    D2Curve out;
    out.ball_measure = ball_measure(system, target.center, target.radius, base);
    out.t_grid.assign(t_grid.begin(), t_grid.end());
    const double mu = out.ball_measure.value;
    if (l == 0) {
        out.gap.assign(t_grid.size(), 0.0);
        out.ci.assign(t_grid.size(), 0.0);
        return out;
    }
    if (mu <= 0.0) throw Error(ErrorCode::ZeroBallMeasure, "target has no samples");

    std::vector<std::size_t> ts;
    for (double t : t_grid) {
        if (t < 0.0) throw Error(ErrorCode::DomainError, "t must be nonnegative");
        ts.push_back(static_cast<std::size_t>(t));
    }
    const std::size_t horizon = *std::max_element(ts.begin(), ts.end()) + l;

    // Visit pattern of the orbit of x over steps [0, horizon).
    auto visits = [&](const Point& x, std::uint64_t orbit_seed) {
        std::vector<char> v(horizon, 0);
        Rng rng(orbit_seed);
        Orbit orbit(system, x, rng);
        for (std::size_t k = 0; k < horizon; ++k) {
            if (k > 0) orbit.step();
            v[k] = in_set(system, target, orbit.point());
        }
        return v;
    };
    auto quiet = [&](const std::vector<char>& v, std::size_t from) {
        for (std::size_t k = from; k < from + l; ++k) {
            if (v[k]) return false;
        }
        return true;
    };

    const auto starts = sample_invariant(system, derive_seed(seed, streams::starts), options.n_starts,
                                         independent_points(options.sampler));
    std::vector<char> free_start(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) {
        free_start[i] = quiet(visits(starts[i], derive_seed(seed, streams::trajectories, i)), 0);
    });
    const auto conditioned = sample_conditioned(system, target.center, target.radius,
                                                derive_seed(seed, streams::starts, 1), options.n_conditioned, mu,
                                                options.sampler);
    std::vector<std::vector<char>> quiet_at(conditioned.size());
    parallel_for(conditioned.size(), [&](std::size_t i) {
        const auto v = visits(conditioned[i], derive_seed(seed, streams::configs, i));
        quiet_at[i].resize(ts.size());
        for (std::size_t g = 0; g < ts.size(); ++g) quiet_at[i][g] = quiet(v, ts[g]);
    });

    std::size_t n_free = 0;
    for (char c : free_start) n_free += c;
    const Estimate p_free = proportion(n_free, starts.size());
    for (std::size_t g = 0; g < ts.size(); ++g) {
        std::size_t n_quiet = 0;
        for (const auto& q : quiet_at) n_quiet += q[g];
        const Estimate p_cond = proportion(n_quiet, conditioned.size());
        const double diff = std::fabs(p_cond.value - p_free.value);
        out.gap.push_back(std::clamp(mu * diff, 0.0, 1.0));
        out.ci.push_back(mu * std::hypot(p_cond.ci, p_free.ci) + diff * out.ball_measure.ci);
    }
    const auto iso = isotonic_decreasing(out.gap);
    for (std::size_t g = 0; g < iso.size(); ++g) {
        out.isotonic_residual = std::max(out.isotonic_residual, std::fabs(out.gap[g] - iso[g]));
    }
    return out;
}

DPrimeCurve dprime_surrogate(const BaseSystem& system, const BaseBall& target, std::size_t n,
                             std::span<const double> k_grid, std::uint64_t seed, const SurrogateOptions& options) {
    if (k_grid.empty()) throw Error(ErrorCode::DomainError, "empty k grid");
    std::vector<std::size_t> limits;
    for (double k : k_grid) {
        if (!(k >= 1.0)) throw Error(ErrorCode::DomainError, "k must be at least 1");
        limits.push_back(static_cast<std::size_t>(std::floor(static_cast<double>(n) / k)));
    }
    const std::size_t horizon = *std::max_element(limits.begin(), limits.end());
    const auto base = sample_invariant(system, derive_seed(seed, streams::measure), options.measure_samples,
                                       options.sampler);
    DPrimeCurve out;
    out.k_grid.assign(k_grid.begin(), k_grid.end());
    out.ball_measure = ball_measure(system, target.center, target.radius, base);
    const double mu = out.ball_measure.value;
    if (mu <= 0.0) throw Error(ErrorCode::ZeroBallMeasure, "target has no samples");

    const auto starts = sample_conditioned(system, target.center, target.radius,
                                           derive_seed(seed, streams::starts), options.n_conditioned, mu,
                                           options.sampler);
    // counts[i][g]: visits of start i to A at steps 1..limits[g].
    std::vector<std::vector<double>> counts(starts.size(), std::vector<double>(limits.size(), 0.0));
    parallel_for(starts.size(), [&](std::size_t i) {
        std::vector<std::size_t> visits_upto(horizon + 1, 0);
        Rng rng(derive_seed(seed, streams::trajectories, i));
        Orbit orbit(system, starts[i], rng);
        for (std::size_t j = 1; j <= horizon; ++j) {
            orbit.step();
            visits_upto[j] = visits_upto[j - 1] + in_set(system, target, orbit.point());
        }
        for (std::size_t g = 0; g < limits.size(); ++g) counts[i][g] = static_cast<double>(visits_upto[limits[g]]);
    });
    const double scale = static_cast<double>(n) * mu;
    for (std::size_t g = 0; g < limits.size(); ++g) {
        std::vector<double> column(starts.size());
        for (std::size_t i = 0; i < starts.size(); ++i) column[i] = counts[i][g];
        const Estimate m = sample_mean(column);
        out.sum.push_back(scale * m.value);
        double rel = 0.0;
        if (m.value > 0.0) rel += (m.ci / m.value) * (m.ci / m.value);
        rel += (out.ball_measure.ci / mu) * (out.ball_measure.ci / mu);
        out.ci.push_back(scale * m.value * std::sqrt(rel));
    }
    return out;
}

}  // namespace reclab
