#include "reclab/extremes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "reclab/error.hpp"
#include "reclab/hitting.hpp"
#include "reclab/parallel.hpp"

namespace reclab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_kind(int kind) {
    if (kind < 1 || kind > 3) throw Error(ErrorCode::DomainError, "observable kind must be 1, 2 or 3");
}

MonotoneCurve make_q(const ObservableSpec& spec) {
    const auto& radii = spec.profile.radii();
    if (radii.empty()) throw Error(ErrorCode::DomainError, "observable needs a measure profile");
    std::vector<double> values = spec.profile.values();
    if (spec.form == ObservableForm::flow) {
        for (std::size_t i = 0; i < radii.size(); ++i) values[i] /= 2.0 * radii[i];
    }
    return MonotoneCurve(radii, std::move(values));
}

// Segment [a, b] of heights at base x: box distance to (z, s).
double segment_distance(const BaseSystem& system, const Point& x, const FlowPoint& center, double a, double b) {
    const double s = center.height;
    const double dh = s < a ? a - s : (s > b ? s - b : 0.0);
    return std::max(system.distance(x, center.base), dh);
}

EvlResult assemble(const Observable& obs, double t, std::span<const double> y_grid, std::vector<double> maxima) {
    EvlResult out;
    out.y_grid.assign(y_grid.begin(), y_grid.end());
    std::vector<double> sorted = maxima;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const auto& spec = obs.spec();
    for (double y : y_grid) {
        const double u = obs.level(t, y);
        const auto k = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), u) - sorted.begin());
        const Estimate p = proportion(k, n);
        out.levels.push_back(u);
        out.empirical.push_back(p.value);
        out.ci.push_back(p.ci);
        out.predicted.push_back(limit_law(spec.kind, obs.shape(), y));
        out.grid_sup = std::max(out.grid_sup, std::fabs(p.value - out.predicted.back()));
    }
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = obs.normalize(maxima[i], t);
    out.maxima = EmpiricalCdf(std::move(z));
    out.ks = ks_distance(out.maxima, limit_reference(spec.kind, obs.shape()));
    return out;
}

std::vector<double> pilot_grid(const BaseSystem& system, const Point& z, double r_max, std::uint64_t seed,
                               const ProfileOptions& options) {
    if (options.samples == 0 || options.pilot_samples == 0 || options.points < 2) {
        throw Error(ErrorCode::EmptySample, "profile needs samples and at least two radii");
    }
    const auto pilot = sample_invariant(system, derive_seed(seed, streams::profile, 0), options.pilot_samples,
                                        options.sampler);
    std::vector<double> d(pilot.size());
    for (std::size_t i = 0; i < pilot.size(); ++i) d[i] = system.distance(pilot[i], z);
    std::sort(d.begin(), d.end());
    const double scale = static_cast<double>(options.pilot_samples) / static_cast<double>(options.samples);
    const auto pilot_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(options.min_count) * scale)));
    return adaptive_radius_grid(d, pilot_count, r_max, options.points);
}

}  // namespace

MeasureProfile build_profile(const BaseSystem& system, const Point& z, double r_max, std::uint64_t seed,
                             const ProfileOptions& options) {
    const auto radii = pilot_grid(system, z, r_max, seed, options);
    return measure_profile(system, z, radii, derive_seed(seed, streams::profile, 1), options.samples,
                           options.sampler);
}

MeasureProfile build_profile(const SuspensionFlow& flow, const FlowPoint& center, double r_max,
                             std::uint64_t seed, const ProfileOptions& options) {
    const auto radii = pilot_grid(flow.base(), center.base, r_max, seed, options);
    return flow_measure_profile(flow, center, radii, derive_seed(seed, streams::profile, 1), options.samples,
                                options.sampler);
}

double tail_transform(int kind, double shape, double y) {
    check_kind(kind);
    switch (kind) {
    case 1: return std::exp(-y);
    case 2:
        if (!(y > 0.0)) throw Error(ErrorCode::DomainError, "tau_2 is defined for y > 0");
        return std::pow(y, -shape);
    default:
        if (!(y <= 0.0)) throw Error(ErrorCode::DomainError, "tau_3 is defined for y <= 0");
        return std::pow(-y, shape);
    }
}

double limit_law(int kind, double shape, double y, const std::function<double(double)>& G) {
    const double tau = tail_transform(kind, shape, y);
    return G ? G(tau) : std::exp(-tau);
}

ReferenceLaw limit_reference(int kind, double shape) {
    check_kind(kind);
    if (kind == 1) return ReferenceLaw::gumbel();
    if (kind == 2) return ReferenceLaw::frechet(shape);
    return ReferenceLaw::weibull(shape);
}

// ---------------------------------------------------------------- observable

Observable::Observable(ObservableSpec spec) : spec_(std::move(spec)) {
    check_kind(spec_.kind);
    if (spec_.kind == 2 && !(spec_.beta > 0.0)) throw Error(ErrorCode::DomainError, "kind 2 requires beta > 0");
    if (spec_.kind == 3 && (!(spec_.gamma > 0.0) || !std::isfinite(spec_.d_max))) {
        throw Error(ErrorCode::DomainError, "kind 3 requires gamma > 0 and a finite D");
    }
    q_ = make_q(spec_);
}

double Observable::shape() const {
    if (spec_.kind == 2) return spec_.beta;
    if (spec_.kind == 3) return spec_.gamma;
    return 1.0;
}

double Observable::g(double v) const {
    switch (spec_.kind) {
    case 1: return v > 0.0 ? -std::log(v) : kInf;
    case 2: return v > 0.0 ? std::pow(v, -1.0 / spec_.beta) : kInf;
    default: return spec_.d_max - std::pow(v, 1.0 / spec_.gamma);
    }
}

double Observable::at_distance(double d) const {
    if (d <= 0.0) return g(0.0);
    return g(q_.at(d));
}

double Observable::level(double t, double y) const {
    if (!(t > 0.0)) throw Error(ErrorCode::DomainError, "horizon must be positive");
    return g(tail_transform(spec_.kind, shape(), y) / t);
}

double Observable::radius(double t, double y) const {
    if (!(t > 0.0)) throw Error(ErrorCode::DomainError, "horizon must be positive");
    return q_.inverse(tail_transform(spec_.kind, shape(), y) / t);
}

double Observable::normalize(double m, double t) const {
    switch (spec_.kind) {
    case 1: return m - std::log(t);
    case 2: return m * std::pow(t, -1.0 / spec_.beta);
    default: return -std::pow(t, 1.0 / spec_.gamma) * (spec_.d_max - m);
    }
}

double observe(const Observable& obs, const BaseSystem& system, const Point& x) {
    return obs.at_distance(system.distance(x, obs.spec().profile.center()));
}

double observe(const Observable& obs, const SuspensionFlow& flow, const FlowPoint& x) {
    const auto& profile = obs.spec().profile;
    const FlowPoint center{profile.center(), profile.center_height().value_or(0.0)};
    return obs.at_distance(flow.distance(x, center));
}

double normalizing_level(const Observable& obs, double t, double y) { return obs.level(t, y); }

// ---------------------------------------------------------------- maxima

RunningMax running_max(const Observable& obs, const BaseSystem& system, const Point& start, double t,
                       std::uint64_t orbit_seed) {
    if (!(t >= 0.0)) throw Error(ErrorCode::DomainError, "horizon must be nonnegative");
    const Point& z = obs.spec().profile.center();
    const auto n = static_cast<std::uint64_t>(std::floor(t));
    Rng rng(orbit_seed);
    Orbit orbit(system, start, rng);
    double d = system.distance(start, z);
    for (std::uint64_t k = 0; k < n; ++k) {
        orbit.step();
        d = std::min(d, system.distance(orbit.point(), z));
    }
    return {obs.at_distance(d), d};
}

double flow_min_distance(const SuspensionFlow& flow, const FlowPoint& start, const FlowPoint& center,
                         double t, std::uint64_t orbit_seed) {
    if (!(t >= 0.0)) throw Error(ErrorCode::DomainError, "horizon must be nonnegative");
    const BaseSystem& system = flow.base();
    double roof = flow.roof_at(start.base);
    double top = std::min(roof, start.height + t);
    double d = segment_distance(system, start.base, center, start.height, top);
    double remaining = t - (roof - start.height);
    Rng rng(orbit_seed);
    Orbit orbit(system, start.base, rng);
    while (remaining >= 0.0) {
        orbit.step();
        const Point& x = orbit.point();
        roof = flow.roof_at(x);
        d = std::min(d, segment_distance(system, x, center, 0.0, std::min(roof, remaining)));
        remaining -= roof;
    }
    return d;
}

RunningMax running_max(const Observable& obs, const SuspensionFlow& flow, const FlowPoint& start, double t,
                       std::uint64_t orbit_seed) {
    const auto& profile = obs.spec().profile;
    const FlowPoint center{profile.center(), profile.center_height().value_or(0.0)};
    const double d = flow_min_distance(flow, start, center, t, orbit_seed);
    return {obs.at_distance(d), d};
}

EvlResult evl_empirical(const Observable& obs, const BaseSystem& system, double t,
                        std::span<const double> y_grid, std::uint64_t seed, const EvlOptions& options) {
    if (options.n_samples == 0) throw Error(ErrorCode::EmptySample, "no samples requested");
    const auto starts = sample_invariant(system, derive_seed(seed, streams::starts), options.n_samples,
                                         independent_points(options.sampler));
    std::vector<double> maxima(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) {
        maxima[i] = running_max(obs, system, starts[i], t, derive_seed(seed, streams::trajectories, i)).value;
    });
    return assemble(obs, t, y_grid, std::move(maxima));
}

EvlResult evl_empirical(const Observable& obs, const SuspensionFlow& flow, double t,
                        std::span<const double> y_grid, std::uint64_t seed, const EvlOptions& options) {
    if (options.n_samples == 0) throw Error(ErrorCode::EmptySample, "no samples requested");
    const auto starts = sample_flow_invariant(flow, derive_seed(seed, streams::starts), options.n_samples,
                                              independent_points(options.sampler));
    std::vector<double> maxima(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) {
        maxima[i] = running_max(obs, flow, starts[i], t, derive_seed(seed, streams::trajectories, i)).value;
    });
    return assemble(obs, t, y_grid, std::move(maxima));
}

DualityResult evl_hitting_duality(const Observable& obs, const SuspensionFlow& flow, double t, double y,
                                  std::uint64_t seed, const EvlOptions& options) {
    if (options.n_samples == 0) throw Error(ErrorCode::EmptySample, "no samples requested");
    const auto& profile = obs.spec().profile;
    DualityResult out;
    out.level = obs.level(t, y);
    out.rho = obs.radius(t, y);
    const FlowBall ball{{profile.center(), profile.center_height().value_or(0.0)}, out.rho};
    if (!is_clean(flow, ball)) throw Error(ErrorCode::DirtyFlowBox, "dual ball is not a clean flow box");

    const auto starts = sample_flow_invariant(flow, derive_seed(seed, streams::starts), options.n_samples,
                                              independent_points(options.sampler));
    std::vector<char> below(starts.size()), survived(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) {
        const std::uint64_t orbit_seed = derive_seed(seed, streams::trajectories, i);
        below[i] = running_max(obs, flow, starts[i], t, orbit_seed).value <= out.level;
        const auto rec = hitting_times(flow, starts[i], ball, 1, t, orbit_seed);
        survived[i] = rec.hits.empty();
    });
    std::size_t n_below = 0, n_survived = 0;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        n_below += below[i];
        n_survived += survived[i];
    }
    out.p_max = proportion(n_below, starts.size());
    out.p_hit = proportion(n_survived, starts.size());
    return out;
}

bool profile_continuous(const MeasureProfile& profile) {
    const auto& v = profile.values();
    if (v.size() < 3 || profile.sample_count() == 0) return true;
    const double grain = 10.0 / static_cast<double>(profile.sample_count());
    std::vector<double> inc(v.size());
    inc[0] = v[0];
    for (std::size_t i = 1; i < v.size(); ++i) inc[i] = v[i] - v[i - 1];
    for (std::size_t i = 1; i + 1 < inc.size(); ++i) {
        if (inc[i] > 5.0 * std::max(inc[i - 1], inc[i + 1]) + grain) return false;
    }
    return true;
}

}  // namespace reclab
