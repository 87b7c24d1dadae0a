#include "reclab/measure.hpp"

#include <algorithm>
#include <cmath>

#include "reclab/error.hpp"
#include "reclab/parallel.hpp"

namespace reclab {

void visit_invariant(const BaseSystem& system, std::uint64_t master_seed, std::size_t count,
                     const SamplerOptions& options,
                     const std::function<void(std::size_t, std::span<const Point>)>& visit) {
    if (count == 0) return;
    const std::size_t block = std::max<std::size_t>(1, options.block_size);
    const std::size_t stride = std::max<std::size_t>(1, options.stride);
    const std::size_t n_blocks = (count + block - 1) / block;

    parallel_for(n_blocks, [&](std::size_t b) {
        const std::size_t size = std::min(count, (b + 1) * block) - b * block;
        std::vector<Point> points(size);
        for (int attempt = 0;; ++attempt) {
            Rng rng(derive_seed(master_seed, streams::invariant_blocks,
                                b + (static_cast<std::uint64_t>(attempt) << 40)));
            try {
                Orbit orbit(system, system.uniform_point(rng), rng);
                for (std::size_t i = 0; i < system.burn_in(); ++i) orbit.step();
                for (auto& p : points) {
                    for (std::size_t s = 0; s < stride; ++s) orbit.step();
                    p = orbit.point();
                }
                break;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::SingularOrbit || attempt + 1 >= options.max_retries) throw;
            }
        }
        visit(b, points);
    });
}

std::vector<Point> sample_invariant(const BaseSystem& system, std::uint64_t master_seed,
                                    std::size_t count, const SamplerOptions& options) {
    std::vector<Point> out(count);
    const std::size_t block = std::max<std::size_t>(1, options.block_size);
    visit_invariant(system, master_seed, count, options, [&](std::size_t b, std::span<const Point> points) {
        std::copy(points.begin(), points.end(), out.begin() + static_cast<std::ptrdiff_t>(b * block));
    });
    return out;
}

std::vector<Point> sample_conditioned(const BaseSystem& system, const Point& z, double r,
                                      std::uint64_t master_seed, std::size_t count, double fraction,
                                      const SamplerOptions& options) {
    std::vector<Point> out;
    if (count == 0) return out;
    if (!(fraction > 0.0)) throw Error(ErrorCode::ZeroBallMeasure, "conditioning set has zero measure");
    const std::size_t batch = std::max<std::size_t>(
        4096, static_cast<std::size_t>(1.2 * static_cast<double>(count) / std::min(fraction, 1.0)));
    for (std::uint64_t round = 0; out.size() < count; ++round) {
        if (round > 64) throw Error(ErrorCode::ZeroBallMeasure, "too few invariant samples land in the ball");
        const auto pool = sample_invariant(system, derive_seed(master_seed, round), batch, options);
        for (const auto& x : pool) {
            if (system.distance(x, z) <= r) out.push_back(x);
            if (out.size() == count) break;
        }
    }
    return out;
}

Estimate ball_measure(const BaseSystem& system, const Point& z, double r,
                      std::span<const Point> samples) {
    if (samples.empty()) throw Error(ErrorCode::EmptySample, "ball measure needs samples");
    if (!(r > 0.0)) throw Error(ErrorCode::DomainError, "ball radius must be positive");
    std::size_t inside = 0;
    for (const auto& x : samples) inside += system.distance(x, z) <= r;
    return proportion(inside, samples.size());
}

// ---------------------------------------------------------------- curves

MonotoneCurve::MonotoneCurve(std::vector<double> radii, std::vector<double> values)
    : radii_(std::move(radii)), values_(std::move(values)) {
    if (radii_.empty() || radii_.size() != values_.size()) {
        throw Error(ErrorCode::DomainError, "profile needs matching, nonempty radii and values");
    }
    for (std::size_t i = 0; i < radii_.size(); ++i) {
        if (!(radii_[i] > 0.0) || (i > 0 && !(radii_[i] > radii_[i - 1]))) {
            throw Error(ErrorCode::DomainError, "profile radii must be positive and strictly increasing");
        }
    }
    double running = 0.0;
    for (double& v : values_) {
        running = std::max(running, v);
        v = running;
    }
}

double MonotoneCurve::at(double r) const {
    if (r <= 0.0) return 0.0;
    if (r > radii_.back()) {
        throw Error(ErrorCode::ProfileRangeExceeded, "radius beyond the profile grid");
    }
    const auto it = std::lower_bound(radii_.begin(), radii_.end(), r);
    const std::size_t k = static_cast<std::size_t>(it - radii_.begin());
    if (*it == r) return values_[k];
    const double r0 = k == 0 ? 0.0 : radii_[k - 1];
    const double v0 = k == 0 ? 0.0 : values_[k - 1];
    return v0 + (values_[k] - v0) * (r - r0) / (radii_[k] - r0);
}

double MonotoneCurve::inverse(double v) const {
    if (v <= 0.0) return 0.0;
    if (v > values_.back()) {
        throw Error(ErrorCode::ProfileRangeExceeded, "value beyond the profile range");
    }
    const auto it = std::lower_bound(values_.begin(), values_.end(), v);
    const std::size_t k = static_cast<std::size_t>(it - values_.begin());
    const double r0 = k == 0 ? 0.0 : radii_[k - 1];
    const double v0 = k == 0 ? 0.0 : values_[k - 1];
    // v0 < v <= values_[k], so the segment is strictly increasing.
    const double r = r0 + (v - v0) / (values_[k] - v0) * (radii_[k] - r0);
    return std::min(r, radii_[k]);
}

MeasureProfile::MeasureProfile(Point center, std::vector<double> radii, std::vector<double> values,
                               std::size_t sample_count, std::optional<double> center_height)
    : center_(center), center_height_(center_height), sample_count_(sample_count) {
    for (double& v : values) v = std::clamp(v, 0.0, 1.0);
    curve_ = MonotoneCurve(std::move(radii), std::move(values));
}

MeasureProfile measure_profile(const BaseSystem& system, const Point& z,
                               std::span<const double> radii, std::span<const Point> samples) {
    if (samples.empty()) throw Error(ErrorCode::EmptySample, "profile needs samples");
    std::vector<double> distances;
    distances.reserve(samples.size());
    for (const auto& x : samples) distances.push_back(system.distance(x, z));
    std::sort(distances.begin(), distances.end());
    std::vector<double> values;
    values.reserve(radii.size());
    for (double r : radii) {
        const auto k = std::upper_bound(distances.begin(), distances.end(), r) - distances.begin();
        values.push_back(static_cast<double>(k) / static_cast<double>(samples.size()));
    }
    return MeasureProfile(z, std::vector<double>(radii.begin(), radii.end()), std::move(values),
                          samples.size());
}

std::vector<double> adaptive_radius_grid(std::span<const double> sorted_distances,
                                         std::size_t min_count, double r_max, std::size_t count) {
    if (sorted_distances.empty()) throw Error(ErrorCode::EmptySample, "radius grid needs samples");
    if (count < 2) throw Error(ErrorCode::DomainError, "radius grid needs at least 2 points");
    const std::size_t k = std::min(std::max<std::size_t>(min_count, 1), sorted_distances.size()) - 1;
    double lo = sorted_distances[k];
    // Skip exact ties with the center (atoms or repeated samples).
    if (!(lo > 0.0)) {
        const auto it = std::upper_bound(sorted_distances.begin(), sorted_distances.end(), 0.0);
        lo = it == sorted_distances.end() ? r_max * 1e-6 : *it;
    }
    lo = std::min(lo, r_max * 0.5);
    return geometric_grid(lo, r_max, count);
}

MeasureProfile measure_profile(const BaseSystem& system, const Point& z,
                               std::span<const double> radii, std::uint64_t master_seed,
                               std::size_t count, const SamplerOptions& options) {
    if (count == 0) throw Error(ErrorCode::EmptySample, "profile needs samples");
    const std::size_t k = radii.size();
    const std::size_t block = std::max<std::size_t>(1, options.block_size);
    std::vector<std::vector<std::size_t>> hist((count + block - 1) / block);
    visit_invariant(system, master_seed, count, options, [&](std::size_t b, std::span<const Point> points) {
        std::vector<std::size_t> h(k + 1, 0);
        for (const auto& x : points) {
            const double d = system.distance(x, z);
            ++h[static_cast<std::size_t>(std::lower_bound(radii.begin(), radii.end(), d) - radii.begin())];
        }
        hist[b] = std::move(h);
    });
    std::vector<std::size_t> total(k + 1, 0);
    for (const auto& h : hist) {
        for (std::size_t i = 0; i <= k; ++i) total[i] += h[i];
    }
    std::vector<double> values(k);
    std::size_t running = 0;
    for (std::size_t i = 0; i < k; ++i) {
        running += total[i];
        values[i] = static_cast<double>(running) / static_cast<double>(count);
    }
    return MeasureProfile(z, std::vector<double>(radii.begin(), radii.end()), std::move(values), count);
}

// ---------------------------------------------------------------- regularity

AnnulusEstimate annulus_with_width(const BaseSystem& system, const Point& z, double r, double width,
                                   std::span<const Point> samples) {
    if (samples.empty()) throw Error(ErrorCode::EmptySample, "annulus estimate needs samples");
    std::size_t ball = 0, ring = 0;
    for (const auto& x : samples) {
        const double d = system.distance(x, z);
        if (d <= r) {
            ++ball;
        } else if (d <= r + width) {
            ++ring;
        }
    }
    if (ball == 0) throw Error(ErrorCode::ZeroBallMeasure, "no samples in the inner ball");
    const double n = static_cast<double>(samples.size());
    AnnulusEstimate est;
    est.ball_measure = static_cast<double>(ball) / n;
    est.annulus_measure = static_cast<double>(ring) / n;
    est.ratio = static_cast<double>(ring) / static_cast<double>(ball);
    // Ratio of counts: ring | (ring + ball) is binomial.
    const double m = static_cast<double>(ring + ball);
    const double q = static_cast<double>(ring) / m;
    const double q_ci = 1.96 * std::sqrt(q * (1.0 - q) / m);
    const double dratio = 1.0 / ((1.0 - q) * (1.0 - q));
    est.ci = q_ci * dratio;
    return est;
}

AnnulusEstimate annulus_ratio(const BaseSystem& system, const Point& z, double r, double delta,
                              std::span<const Point> samples) {
    if (!(delta > 1.0)) throw Error(ErrorCode::DomainError, "annulus exponent delta must exceed 1");
    if (!(r > 0.0)) throw Error(ErrorCode::DomainError, "annulus radius must be positive");
    return annulus_with_width(system, z, r, std::pow(r, delta), samples);
}

LocalDimension local_dimension(const BaseSystem& system, const Point& z,
                               std::span<const double> radii, std::span<const Point> samples) {
    if (radii.size() < 3) throw Error(ErrorCode::DomainError, "local dimension needs at least 3 radii");
    std::vector<double> log_r, log_h;
    for (double r : radii) {
        const Estimate h = ball_measure(system, z, r, samples);
        if (h.value <= 0.0) throw Error(ErrorCode::ZeroBallMeasure, "empty ball in the radius grid");
        log_r.push_back(std::log(r));
        log_h.push_back(std::log(h.value));
    }
    LocalDimension out;
    out.slope = fit_line(log_r, log_h).slope;
    out.d_lower = std::numeric_limits<double>::infinity();
    out.d_upper = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < log_r.size(); ++i) {
        const double s = (log_h[i] - log_h[i - 1]) / (log_r[i] - log_r[i - 1]);
        out.d_lower = std::min(out.d_lower, s);
        out.d_upper = std::max(out.d_upper, s);
    }
    out.valid = out.slope > 0.0;
    return out;
}

}  // namespace reclab
