#include "reclab/suspension.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "reclab/error.hpp"
#include "reclab/parallel.hpp"

namespace reclab {

// ---------------------------------------------------------------- roofs

RoofFunction RoofFunction::constant(double c) {
    if (!(c > 0.0)) throw Error(ErrorCode::NonPositiveRoof, "constant roof must be positive");
    RoofFunction f;
    f.kind_ = Kind::constant;
    f.name_ = "constant";
    f.a_ = c;
    return f;
}

RoofFunction RoofFunction::affine(double a, double b) {
    RoofFunction f;
    f.kind_ = Kind::affine;
    f.name_ = "affine";
    f.a_ = a;
    f.b_ = b;
    return f;
}

RoofFunction RoofFunction::loglorenz() {
    RoofFunction f;
    f.kind_ = Kind::loglorenz;
    f.name_ = "loglorenz";
    f.bounded_ = false;
    return f;
}

RoofFunction RoofFunction::custom(std::string name, std::function<double(const Point&)> eval,
                                  double lower_bound, bool bounded) {
    RoofFunction f;
    f.kind_ = Kind::custom;
    f.name_ = std::move(name);
    f.a_ = lower_bound;
    f.bounded_ = bounded;
    f.eval_ = std::move(eval);
    return f;
}

RoofFunction RoofFunction::from_json(const nlohmann::json& descriptor) {
    if (!descriptor.is_object() || !descriptor.contains("name") || !descriptor.at("name").is_string()) {
        throw Error(ErrorCode::ConfigError, "roof must be an object with a string 'name'");
    }
    const std::string name = descriptor.at("name").get<std::string>();
    std::set<std::string> allowed;
    if (name == "constant") {
        allowed = {"c"};
    } else if (name == "affine") {
        allowed = {"a", "b"};
    } else if (name != "loglorenz") {
        throw Error(ErrorCode::ConfigError, "unknown roof '" + name + "'");
    }
    for (const auto& [key, value] : descriptor.items()) {
        if (key == "name") continue;
        if (!allowed.count(key)) {
            throw Error(ErrorCode::ConfigError, "unknown parameter '" + key + "' for roof '" + name + "'");
        }
        if (!value.is_number()) throw Error(ErrorCode::ConfigError, "roof parameter '" + key + "' must be numeric");
    }
    auto num = [&](const char* key, double fallback) {
        return descriptor.contains(key) ? descriptor.at(key).get<double>() : fallback;
    };
    if (name == "constant") return constant(num("c", 1.0));
    if (name == "affine") return affine(num("a", 1.0), num("b", 1.0));
    return loglorenz();
}

nlohmann::json RoofFunction::to_json() const {
    switch (kind_) {
    case Kind::constant: return {{"name", name_}, {"c", a_}};
    case Kind::affine: return {{"name", name_}, {"a", a_}, {"b", b_}};
    default: return {{"name", name_}};
    }
}

double RoofFunction::operator()(const Point& x) const {
    switch (kind_) {
    case Kind::constant: return a_;
    case Kind::affine: return a_ + b_ * x[0];
    case Kind::loglorenz: return -std::log(std::fabs(x[0]));
    case Kind::custom: return eval_(x);
    }
    return 0.0;
}

double RoofFunction::infimum_on_ball(const BaseSystem& system, const Point& z, double r) const {
    switch (kind_) {
    case Kind::constant: return a_;
    case Kind::custom: return a_;
    case Kind::loglorenz: return -std::log(std::min(1.0, std::fabs(z[0]) + r));
    case Kind::affine: break;
    }
    // Affine: minimum over the endpoints of the x-intervals covered by the ball.
    std::vector<double> ends;
    const double lo = z[0] - r;
    const double hi = z[0] + r;
    if (system.periodic()) {
        if (r >= 0.5) {
            ends = {0.0, 1.0};
        } else if (lo < 0.0) {
            ends = {0.0, hi, lo + 1.0, 1.0};
        } else if (hi >= 1.0) {
            ends = {0.0, hi - 1.0, lo, 1.0};
        } else {
            ends = {lo, hi};
        }
    } else {
        ends = {lo, hi};
    }
    double m = std::numeric_limits<double>::infinity();
    for (double x : ends) m = std::min(m, a_ + b_ * x);
    return m;
}

// ---------------------------------------------------------------- flow

SuspensionFlow::SuspensionFlow(SystemPtr system, RoofFunction roof, Estimate mean_roof,
                               double roof_bound, std::uint64_t seed)
    : system_(std::move(system)), roof_(std::move(roof)), mean_roof_(mean_roof),
      roof_bound_(roof_bound), seed_(seed) {
    if (!(mean_roof_.value > 0.0)) throw Error(ErrorCode::NonPositiveRoof, "mean roof must be positive");
}

double SuspensionFlow::roof_at(const Point& x) const {
    const double r = roof_(x);
    if (!(r > 0.0)) throw Error(ErrorCode::NonPositiveRoof, "roof is not positive at a visited point");
    return r;
}

double SuspensionFlow::distance(const FlowPoint& a, const FlowPoint& b) const {
    return std::max(system_->distance(a.base, b.base), std::fabs(a.height - b.height));
}

SuspensionFlow build_suspension(SystemPtr system, RoofFunction roof, std::uint64_t seed,
                                const SuspensionOptions& options) {
    if (roof.kind() == RoofFunction::Kind::constant) {
        const double c = roof(Point{});
        return SuspensionFlow(std::move(system), std::move(roof), {c, 0.0}, c, seed);
    }
    const std::size_t n = options.mean_roof_samples;
    if (n < 2) throw Error(ErrorCode::EmptySample, "mean roof needs at least 2 samples");
    const auto samples = sample_invariant(*system, derive_seed(seed, streams::mean_roof), n, options.sampler);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        values[i] = roof(samples[i]);
        if (!(values[i] > 0.0) || !std::isfinite(values[i])) {
            throw Error(ErrorCode::NonPositiveRoof, "roof is not a positive finite number on a sampled point");
        }
    }
    const Estimate full = sample_mean(values);
    const Estimate half = sample_mean(std::span<const double>(values).first(n / 2));
    if (std::fabs(half.value - full.value) > options.cauchy_tolerance * full.value) {
        throw Error(ErrorCode::NonIntegrableRoof,
                    "roof mean does not settle as the sample doubles (" + std::to_string(half.value) +
                        " vs " + std::to_string(full.value) + ")");
    }
    double bound;
    if (roof.bounded()) {
        bound = 1.1 * *std::max_element(values.begin(), values.end());
    } else {
        const auto k = static_cast<std::size_t>(std::ceil((1.0 - 1e-8) * static_cast<double>(n))) - 1;
        std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
        bound = values[k];
    }
    return SuspensionFlow(std::move(system), std::move(roof), full, bound, seed);
}

FlowPoint flow_advance(const SuspensionFlow& flow, FlowPoint p, double t) {
    if (!(t >= 0.0)) throw Error(ErrorCode::DomainError, "flow time must be nonnegative");
    // Position above the current floor; whole roofs are subtracted so that
    // landing exactly on a roof gives height 0 rather than roof - eps.
    double position = p.height + t;
    double roof = flow.roof_at(p.base);
    while (position >= roof) {
        position -= roof;
        p.base = flow.base().apply(p.base);
        roof = flow.roof_at(p.base);
    }
    p.height = position;
    return p;
}

bool is_clean(const SuspensionFlow& flow, const FlowBall& ball) {
    const double rho = ball.radius;
    const double s = ball.center.height;
    if (!(rho > 0.0) || !(rho < s)) return false;
    return s + rho < flow.roof().infimum_on_ball(flow.base(), ball.center.base, rho);
}

bool in_ball(const SuspensionFlow& flow, const FlowBall& ball, const FlowPoint& p) {
    return flow.distance(p, ball.center) <= ball.radius;
}

Estimate flow_ball_measure(const SuspensionFlow& flow, const FlowBall& ball,
                           std::span<const Point> base_samples, bool strict) {
    if (base_samples.empty()) throw Error(ErrorCode::EmptySample, "flow ball measure needs samples");
    const double rho = ball.radius;
    const double s = ball.center.height;
    const double e = flow.mean_roof().value;
    if (is_clean(flow, ball)) {
        const Estimate b = ball_measure(flow.base(), ball.center.base, rho, base_samples);
        const double value = b.value * 2.0 * rho / e;
        double rel = 0.0;
        if (b.value > 0.0) rel += (b.ci / b.value) * (b.ci / b.value);
        rel += (flow.mean_roof().ci / e) * (flow.mean_roof().ci / e);
        return {value, value * std::sqrt(rel)};
    }
    if (strict) throw Error(ErrorCode::DirtyFlowBox, "flow ball is not a clean flow box");
    std::vector<double> terms(base_samples.size(), 0.0);
    for (std::size_t i = 0; i < base_samples.size(); ++i) {
        const Point& x = base_samples[i];
        if (flow.base().distance(x, ball.center.base) > rho) continue;
        const double top = std::min(s + rho, flow.roof_at(x));
        const double bottom = std::max(s - rho, 0.0);
        terms[i] = std::max(0.0, top - bottom) / e;
    }
    return sample_mean(terms);
}

Estimate flow_box_measure_direct(const SuspensionFlow& flow, const FlowBall& ball,
                                 std::span<const FlowPoint> flow_samples) {
    if (flow_samples.empty()) throw Error(ErrorCode::EmptySample, "flow ball measure needs samples");
    std::size_t inside = 0;
    for (const auto& p : flow_samples) inside += in_ball(flow, ball, p);
    return proportion(inside, flow_samples.size());
}

std::vector<FlowPoint> sample_flow_invariant(const SuspensionFlow& flow, std::uint64_t seed,
                                             std::size_t count, const SamplerOptions& options) {
    if (count == 0) return {};
    const BaseSystem& system = flow.base();
    const std::size_t block = std::max<std::size_t>(1, options.block_size);
    const std::size_t stride = std::max<std::size_t>(1, options.stride);
    const std::size_t n_blocks = (count + block - 1) / block;
    const double bound = flow.roof_bound();
    std::vector<FlowPoint> out(count);

    parallel_for(n_blocks, [&](std::size_t b) {
        const std::size_t first = b * block;
        const std::size_t last = std::min(count, first + block);
        for (int attempt = 0;; ++attempt) {
            Rng rng(derive_seed(seed, streams::flow_blocks,
                                b + (static_cast<std::uint64_t>(attempt) << 40)));
            try {
                Orbit orbit(system, system.uniform_point(rng), rng);
                for (std::size_t i = 0; i < system.burn_in(); ++i) orbit.step();
                std::size_t k = first;
                while (k < last) {
                    for (std::size_t i = 0; i < stride; ++i) orbit.step();
                    const double r = flow.roof_at(orbit.point());
                    if (rng.uniform() * bound < r) out[k++] = {orbit.point(), rng.uniform() * r};
                }
                return;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::SingularOrbit || attempt + 1 >= options.max_retries) throw;
            }
        }
    });
    return out;
}

namespace {

// Height-overlap accumulators of a flow profile: clean_delta is a difference
// array of samples whose overlap is the full 2r, dirty holds the other overlaps.
struct FlowProfileSums {
    std::vector<double> clean_delta;
    std::vector<double> dirty;

    explicit FlowProfileSums(std::size_t k) : clean_delta(k + 1, 0.0), dirty(k, 0.0) {}

    void add(const SuspensionFlow& flow, const FlowPoint& center, std::span<const double> radii,
             std::span<const Point> points) {
        const std::size_t k = radii.size();
        const double s = center.height;
        for (const Point& x : points) {
            const double d = flow.base().distance(x, center.base);
            const auto j0 = static_cast<std::size_t>(std::lower_bound(radii.begin(), radii.end(), d) - radii.begin());
            if (j0 == k) continue;
            const double roof = flow.roof_at(x);
            const double c = std::min(s, roof - s);
            const auto j1 = std::max(
                j0, static_cast<std::size_t>(std::upper_bound(radii.begin(), radii.end(), c) - radii.begin()));
            clean_delta[j0] += 1.0;
            clean_delta[j1] -= 1.0;
            for (std::size_t j = j1; j < k; ++j) {
                const double r = radii[j];
                dirty[j] += std::max(0.0, std::min(s + r, roof) - std::max(s - r, 0.0));
            }
        }
    }

    void merge(const FlowProfileSums& other) {
        for (std::size_t j = 0; j < clean_delta.size(); ++j) clean_delta[j] += other.clean_delta[j];
        for (std::size_t j = 0; j < dirty.size(); ++j) dirty[j] += other.dirty[j];
    }

    MeasureProfile finish(const SuspensionFlow& flow, const FlowPoint& center, std::span<const double> radii,
                          std::size_t count) const {
        const double norm = static_cast<double>(count) * flow.mean_roof().value;
        std::vector<double> values(radii.size());
        double active = 0.0;
        for (std::size_t j = 0; j < radii.size(); ++j) {
            active += clean_delta[j];
            values[j] = (active * 2.0 * radii[j] + dirty[j]) / norm;
        }
        return MeasureProfile(center.base, std::vector<double>(radii.begin(), radii.end()), std::move(values),
                              count, center.height);
    }
};

}  // namespace

MeasureProfile flow_measure_profile(const SuspensionFlow& flow, const FlowPoint& center,
                                    std::span<const double> radii,
                                    std::span<const Point> base_samples) {
    if (base_samples.empty()) throw Error(ErrorCode::EmptySample, "profile needs samples");
    FlowProfileSums sums(radii.size());
    sums.add(flow, center, radii, base_samples);
    return sums.finish(flow, center, radii, base_samples.size());
}

MeasureProfile flow_measure_profile(const SuspensionFlow& flow, const FlowPoint& center,
                                    std::span<const double> radii, std::uint64_t master_seed,
                                    std::size_t count, const SamplerOptions& options) {
    if (count == 0) throw Error(ErrorCode::EmptySample, "profile needs samples");
    const std::size_t block = std::max<std::size_t>(1, options.block_size);
    std::vector<FlowProfileSums> parts((count + block - 1) / block, FlowProfileSums(0));
    visit_invariant(flow.base(), master_seed, count, options, [&](std::size_t b, std::span<const Point> points) {
        FlowProfileSums part(radii.size());
        part.add(flow, center, radii, points);
        parts[b] = std::move(part);
    });
    FlowProfileSums total(radii.size());
    for (const auto& part : parts) total.merge(part);
    return total.finish(flow, center, radii, count);
}

}  // namespace reclab
