#include "reclab/hitting.hpp"

#include <algorithm>
#include <cmath>

#include "reclab/error.hpp"
#include "reclab/parallel.hpp"

namespace reclab {

namespace {

Estimate ratio_with_ci(double value, const Estimate& a, const Estimate& b) {
    double rel = 0.0;
    if (a.value != 0.0) rel += (a.ci / a.value) * (a.ci / a.value);
    if (b.value != 0.0) rel += (b.ci / b.value) * (b.ci / b.value);
    return {value, std::fabs(value) * std::sqrt(rel)};
}

bool in_base_ball(const BaseSystem& system, const BaseBall& ball, const Point& x) {
    return system.distance(x, ball.center) <= ball.radius;
}

void fill_survival(SurvivalResult& out, std::vector<double> normalized, std::size_t censored,
                   std::span<const double> t_grid) {
    out.law.samples = EmpiricalCdf(std::move(normalized), censored);
    out.t_grid.assign(t_grid.begin(), t_grid.end());
    const std::size_t n = out.law.samples.total();
    for (double t : t_grid) {
        const auto& sorted = out.law.samples.sorted_samples();
        const auto below = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
        const Estimate p = proportion(n - below, n);
        out.survival.push_back(p.value);
        out.ci.push_back(p.ci);
    }
    out.ks = ks_distance(out.law.samples, ReferenceLaw::exponential());
}

}  // namespace

double exit_time(const SuspensionFlow& flow, const FlowPoint& p, const FlowBall& ball, double horizon) {
    if (!(horizon > 0.0)) throw Error(ErrorCode::DomainError, "horizon must be positive");
    if (!in_ball(flow, ball, p)) return 0.0;
    const double e = ball.center.height + ball.radius - p.height;
    if (e > horizon) throw Error(ErrorCode::HorizonExceeded, "exit time beyond the horizon");
    return e;
}

HittingRecord hitting_times(const SuspensionFlow& flow, const FlowPoint& p, const FlowBall& ball,
                            std::size_t m_max, double horizon, std::uint64_t orbit_seed) {
    if (m_max == 0) throw Error(ErrorCode::DomainError, "m_max must be at least 1");
    if (!is_clean(flow, ball)) throw Error(ErrorCode::DirtyFlowBox, "hitting target is not a clean flow box");
    const BaseSystem& system = flow.base();
    const BaseBall shadow{ball.center.base, ball.radius};
    const double window = ball.center.height - ball.radius;

    HittingRecord rec;
    rec.exit_time = in_ball(flow, ball, p) ? ball.center.height + ball.radius - p.height : 0.0;

    auto record = [&](double t) {
        if (t > horizon) {
            rec.truncated = true;
            return false;
        }
        rec.hits.push_back(t);
        return rec.hits.size() < m_max;
    };

    if (in_base_ball(system, shadow, p.base) && p.height < window) {
        if (!record(window - p.height)) return rec;
    }
    Rng rng(orbit_seed);
    Orbit orbit(system, p.base, rng);
    // Flow time at which the current segment starts at height 0.
    double start = flow.roof_at(p.base) - p.height;
    for (;;) {
        if (start + window > horizon) {
            rec.truncated = true;
            return rec;
        }
        orbit.step();
        const Point& x = orbit.point();
        if (in_base_ball(system, shadow, x) && !record(start + window)) return rec;
        start += flow.roof_at(x);
    }
}

DiscreteHittingRecord discrete_hitting_times(const BaseSystem& system, const Point& x,
                                             const BaseBall& target, std::size_t m_max,
                                             std::uint64_t n_max, std::uint64_t orbit_seed) {
    if (m_max == 0) throw Error(ErrorCode::DomainError, "m_max must be at least 1");
    DiscreteHittingRecord rec;
    Rng rng(orbit_seed);
    Orbit orbit(system, x, rng);
    for (std::uint64_t k = 1; k <= n_max; ++k) {
        orbit.step();
        if (in_base_ball(system, target, orbit.point())) {
            rec.hits.push_back(k);
            if (rec.hits.size() == m_max) return rec;
        }
    }
    rec.truncated = true;
    return rec;
}

double flow_base_consistency(const SuspensionFlow& flow, const FlowPoint& p, const FlowBall& ball,
                             std::size_t m, std::uint64_t orbit_seed, double horizon) {
    if (m == 0) throw Error(ErrorCode::DomainError, "hit index must be at least 1");
    const HittingRecord measured = hitting_times(flow, p, ball, m, horizon, orbit_seed);
    if (measured.hits.size() < m) throw Error(ErrorCode::TruncatedRecord, "fewer recorded hits than requested");

    const BaseSystem& system = flow.base();
    const BaseBall shadow{ball.center.base, ball.radius};
    const double window = ball.center.height - ball.radius;
    // Hit indices along the base orbit; 0 is the starting segment.
    std::vector<std::uint64_t> indices;
    if (in_base_ball(system, shadow, p.base) && p.height < window) indices.push_back(0);
    if (indices.size() < m) {
        const auto discrete = discrete_hitting_times(system, p.base, shadow, m - indices.size(),
                                                     std::numeric_limits<std::uint64_t>::max(), orbit_seed);
        indices.insert(indices.end(), discrete.hits.begin(), discrete.hits.end());
    }
    const std::uint64_t k = indices[m - 1];
    double roof_sum = 0.0;
    Rng rng(orbit_seed);
    Orbit orbit(system, p.base, rng);
    for (std::uint64_t i = 0; i < k; ++i) {
        roof_sum += flow.roof_at(i == 0 ? p.base : orbit.point());
        orbit.step();
    }
    const double rebuilt = roof_sum - p.height + window;
    return std::fabs(measured.hits[m - 1] - rebuilt);
}

double birkhoff_factor(const SuspensionFlow& flow, const Point& y, std::uint64_t k, std::uint64_t orbit_seed) {
    if (k == 0) throw Error(ErrorCode::DomainError, "Birkhoff factor needs k >= 1");
    Rng rng(orbit_seed);
    Orbit orbit(flow.base(), y, rng);
    double sum = flow.roof_at(y);
    for (std::uint64_t i = 1; i < k; ++i) {
        orbit.step();
        sum += flow.roof_at(orbit.point());
    }
    return sum / (static_cast<double>(k) * flow.mean_roof().value);
}

// ---------------------------------------------------------------- laws

SurvivalResult normalized_survival(const SuspensionFlow& flow, const FlowBall& ball,
                                   std::span<const double> t_grid, std::uint64_t seed,
                                   const SurvivalOptions& options) {
    if (options.n_trajectories == 0) throw Error(ErrorCode::EmptySample, "no trajectories requested");
    const auto base = sample_invariant(flow.base(), derive_seed(seed, streams::measure),
                                       options.measure_samples, options.sampler);
    SurvivalResult out;
    out.ball_measure = ball_measure(flow.base(), ball.center.base, ball.radius, base);
    if (out.ball_measure.value <= 0.0) throw Error(ErrorCode::ZeroBallMeasure, "target ball has no samples");
    const double e = flow.mean_roof().value;
    const double norm = out.ball_measure.value / e;
    out.law.normalization = ratio_with_ci(norm, out.ball_measure, flow.mean_roof());

    const auto starts = sample_flow_invariant(flow, derive_seed(seed, streams::starts),
                                              options.n_trajectories, independent_points(options.sampler));
    const double horizon = options.horizon / norm;
    std::vector<double> first(starts.size());
    std::vector<char> censored(starts.size(), 0);
    parallel_for(starts.size(), [&](std::size_t i) {
        const auto rec = hitting_times(flow, starts[i], ball, 1, horizon,
                                       derive_seed(seed, streams::trajectories, i));
        if (rec.hits.empty()) {
            censored[i] = 1;
        } else {
            first[i] = rec.hits.front() * norm;
        }
    });
    std::vector<double> observed;
    std::size_t n_censored = 0;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        if (censored[i]) {
            ++n_censored;
        } else {
            observed.push_back(first[i]);
        }
    }
    fill_survival(out, std::move(observed), n_censored, t_grid);
    return out;
}

SurvivalResult normalized_survival(const BaseSystem& system, const BaseBall& ball,
                                   std::span<const double> t_grid, std::uint64_t seed,
                                   const SurvivalOptions& options) {
    if (options.n_trajectories == 0) throw Error(ErrorCode::EmptySample, "no trajectories requested");
    const auto base = sample_invariant(system, derive_seed(seed, streams::measure), options.measure_samples,
                                       options.sampler);
    SurvivalResult out;
    out.ball_measure = ball_measure(system, ball.center, ball.radius, base);
    if (out.ball_measure.value <= 0.0) throw Error(ErrorCode::ZeroBallMeasure, "target ball has no samples");
    const double norm = out.ball_measure.value;
    out.law.normalization = out.ball_measure;

    const auto starts = sample_invariant(system, derive_seed(seed, streams::starts), options.n_trajectories,
                                         independent_points(options.sampler));
    const auto n_max = static_cast<std::uint64_t>(std::ceil(options.horizon / norm));
    std::vector<double> first(starts.size());
    std::vector<char> censored(starts.size(), 0);
    parallel_for(starts.size(), [&](std::size_t i) {
        const auto rec = discrete_hitting_times(system, starts[i], ball, 1, n_max,
                                                derive_seed(seed, streams::trajectories, i));
        if (rec.hits.empty()) {
            censored[i] = 1;
        } else {
            first[i] = static_cast<double>(rec.hits.front()) * norm;
        }
    });
    std::vector<double> observed;
    std::size_t n_censored = 0;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        if (censored[i]) {
            ++n_censored;
        } else {
            observed.push_back(first[i]);
        }
    }
    fill_survival(out, std::move(observed), n_censored, t_grid);
    return out;
}

double poisson_pmf(double t, std::size_t m) {
    return std::exp(-t + static_cast<double>(m) * std::log(t) - std::lgamma(static_cast<double>(m) + 1.0));
}

PoissonTable poisson_counts(const SuspensionFlow& flow, const FlowBall& ball, double t_normalized,
                            std::size_t m_max, std::uint64_t seed, const SurvivalOptions& options) {
    if (m_max < 2) throw Error(ErrorCode::DomainError, "poisson table needs m_max >= 2");
    if (!(t_normalized > 0.0)) throw Error(ErrorCode::DomainError, "normalized time must be positive");
    if (options.n_trajectories == 0) throw Error(ErrorCode::EmptySample, "no trajectories requested");
    const auto base = sample_invariant(flow.base(), derive_seed(seed, streams::measure),
                                       options.measure_samples, options.sampler);
    const Estimate b = ball_measure(flow.base(), ball.center.base, ball.radius, base);
    if (b.value <= 0.0) throw Error(ErrorCode::ZeroBallMeasure, "target ball has no samples");
    const double norm = b.value / flow.mean_roof().value;

    const auto starts = sample_flow_invariant(flow, derive_seed(seed, streams::starts),
                                              options.n_trajectories, independent_points(options.sampler));
    const double horizon = t_normalized / norm;
    std::vector<std::size_t> count(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) {
        const auto rec = hitting_times(flow, starts[i], ball, m_max, horizon,
                                       derive_seed(seed, streams::trajectories, i));
        count[i] = rec.hits.size();
    });
    std::vector<std::size_t> tally(m_max + 1, 0);
    for (std::size_t c : count) ++tally[std::min(c, m_max)];

    PoissonTable table;
    table.normalization = ratio_with_ci(norm, b, flow.mean_roof());
    table.t_normalized = t_normalized;
    double predicted_sum = 0.0;
    for (std::size_t m = 0; m <= m_max; ++m) {
        const Estimate f = proportion(tally[m], starts.size());
        table.frequency.push_back(f.value);
        table.ci.push_back(f.ci);
        if (m < m_max) {
            table.predicted.push_back(poisson_pmf(t_normalized, m));
            predicted_sum += table.predicted.back();
        } else {
            table.predicted.push_back(std::max(0.0, 1.0 - predicted_sum));
        }
    }
    return table;
}

KacResult kac_check(const BaseSystem& system, const BaseBall& target, std::uint64_t seed,
                    const KacOptions& options) {
    if (options.n_starts == 0) throw Error(ErrorCode::EmptySample, "no starts requested");
    const auto base = sample_invariant(system, derive_seed(seed, streams::measure), options.measure_samples,
                                       options.sampler);
    KacResult out;
    out.measure = ball_measure(system, target.center, target.radius, base);
    if (out.measure.value <= 0.0) throw Error(ErrorCode::ZeroBallMeasure, "target has no samples");

    const auto starts = sample_conditioned(system, target.center, target.radius,
                                           derive_seed(seed, streams::starts), options.n_starts,
                                           out.measure.value, options.sampler);
    std::vector<double> returns(starts.size());
    std::vector<char> censored(starts.size(), 0);
    parallel_for(starts.size(), [&](std::size_t i) {
        const auto rec = discrete_hitting_times(system, starts[i], target, 1, options.n_max,
                                                derive_seed(seed, streams::trajectories, i));
        if (rec.hits.empty()) {
            censored[i] = 1;
        } else {
            returns[i] = static_cast<double>(rec.hits.front());
        }
    });
    std::vector<double> observed;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        if (censored[i]) {
            ++out.censored;
        } else {
            observed.push_back(returns[i]);
        }
    }
    out.mean_return = sample_mean(observed);
    out.product = ratio_with_ci(out.mean_return.value * out.measure.value, out.mean_return, out.measure);
    return out;
}

}  // namespace reclab
