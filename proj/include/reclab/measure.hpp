#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "reclab/stats.hpp"
#include "reclab/systems.hpp"

namespace reclab {

struct SamplerOptions {
    /// Iterates between recorded points of one orbit block.
    std::size_t stride = 10;
    /// Points per orbit block; fixed so output does not depend on workers.
    std::size_t block_size = 4096;
    /// Restarts of a block whose orbit hits the singular set.
    int max_retries = 8;
};

/// Same options with one burned-in orbit per point, so that trajectories
/// started from the samples do not overlap.
inline SamplerOptions independent_points(SamplerOptions options) {
    options.block_size = 1;
    return options;
}

/// Streams `count` invariant samples to `visit(block, points)` one orbit block
/// at a time; blocks may run concurrently and arrive in any order.
void visit_invariant(const BaseSystem& system, std::uint64_t master_seed, std::size_t count,
                     const SamplerOptions& options,
                     const std::function<void(std::size_t, std::span<const Point>)>& visit);

/// Birkhoff sampler for the invariant measure: independent orbit blocks,
/// each started uniformly, burned in, then recorded every `stride` steps.
std::vector<Point> sample_invariant(const BaseSystem& system, std::uint64_t master_seed,
                                    std::size_t count, const SamplerOptions& options = {});

/// `count` invariant samples conditioned on the closed ball B_r(z), taken from
/// successive invariant batches. `fraction` is a rough estimate of mu(B_r(z))
/// used to size the batches.
std::vector<Point> sample_conditioned(const BaseSystem& system, const Point& z, double r,
                                      std::uint64_t master_seed, std::size_t count, double fraction,
                                      const SamplerOptions& options = {});

/// Fraction of samples in the closed ball B_r(z).
Estimate ball_measure(const BaseSystem& system, const Point& z, double r,
                      std::span<const Point> samples);

/// Non-decreasing curve through the origin and the knots (r_i, v_i),
/// linear in between. Evaluation beyond the last knot is out of range.
class MonotoneCurve {
  public:
    MonotoneCurve() = default;
    /// Enforces monotonicity by cumulative max.
    MonotoneCurve(std::vector<double> radii, std::vector<double> values);

    double at(double r) const;
    /// Generalized inverse inf{r >= 0 : at(r) >= v}.
    double inverse(double v) const;

    const std::vector<double>& radii() const { return radii_; }
    const std::vector<double>& values() const { return values_; }
    double max_radius() const { return radii_.back(); }
    double max_value() const { return values_.back(); }

  private:
    std::vector<double> radii_;
    std::vector<double> values_;
};

/// h_z(r) = mu(B_r(z)) on a radius grid. For flow profiles the center also
/// carries a height and the values are flow-measure estimates.
class MeasureProfile {
  public:
    MeasureProfile() = default;
    MeasureProfile(Point center, std::vector<double> radii, std::vector<double> values,
                   std::size_t sample_count, std::optional<double> center_height = std::nullopt);

    const Point& center() const { return center_; }
    const std::optional<double>& center_height() const { return center_height_; }
    const std::vector<double>& radii() const { return curve_.radii(); }
    const std::vector<double>& values() const { return curve_.values(); }
    std::size_t sample_count() const { return sample_count_; }
    const MonotoneCurve& curve() const { return curve_; }

    /// h(r), interpolated between grid radii.
    double operator()(double r) const { return curve_.at(r); }
    /// l(y) = inf{r : h(r) >= y}.
    double inverse(double y) const { return curve_.inverse(y); }

  private:
    Point center_{};
    std::optional<double> center_height_;
    MonotoneCurve curve_;
    std::size_t sample_count_ = 0;
};

/// Ball-measure estimates on a strictly increasing grid of positive radii.
MeasureProfile measure_profile(const BaseSystem& system, const Point& z,
                               std::span<const double> radii, std::span<const Point> samples);

/// Same estimate from `count` streamed invariant samples, without storing them.
MeasureProfile measure_profile(const BaseSystem& system, const Point& z,
                               std::span<const double> radii, std::uint64_t master_seed,
                               std::size_t count, const SamplerOptions& options = {});

/// Geometric grid from the radius holding `min_count` of the sorted sample
/// distances up to `r_max`, so the smallest radius still has a usable count.
std::vector<double> adaptive_radius_grid(std::span<const double> sorted_distances,
                                         std::size_t min_count, double r_max, std::size_t count);

struct AnnulusEstimate {
    double ratio = 0.0;
    double ci = 0.0;
    double annulus_measure = 0.0;
    double ball_measure = 0.0;
};

/// mu(B_{r + eps} \ B_r) / mu(B_r) with eps = r^delta.
AnnulusEstimate annulus_ratio(const BaseSystem& system, const Point& z, double r, double delta,
                              std::span<const Point> samples);

/// Same ratio for an explicit annulus width.
AnnulusEstimate annulus_with_width(const BaseSystem& system, const Point& z, double r, double width,
                                   std::span<const Point> samples);

struct LocalDimension {
    double slope = 0.0;
    double d_lower = 0.0;
    double d_upper = 0.0;
    bool valid = false;
};

/// Log-log slope of h_z(r); lower/upper are the extreme adjacent two-point slopes.
LocalDimension local_dimension(const BaseSystem& system, const Point& z,
                               std::span<const double> radii, std::span<const Point> samples);

}  // namespace reclab
