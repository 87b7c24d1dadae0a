#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reclab/measure.hpp"
#include "reclab/stats.hpp"
#include "reclab/systems.hpp"

namespace reclab {

/// Positive roof r : Omega -> R+ of a suspension.
class RoofFunction {
  public:
    enum class Kind { constant, affine, loglorenz, custom };

    /// r(x) = c.
    static RoofFunction constant(double c);
    /// r(x) = a + b * x[0].
    static RoofFunction affine(double a, double b);
    /// r(x) = -ln|x[0]|, unbounded near the singular line of the Lorenz section.
    static RoofFunction loglorenz();
    /// Arbitrary roof with a known global lower bound; used for experiments
    /// outside the built-in families.
    static RoofFunction custom(std::string name, std::function<double(const Point&)> eval,
                               double lower_bound, bool bounded);

    /// {"name": "affine", "a": 1, "b": 1}; unknown names or keys raise ConfigError.
    static RoofFunction from_json(const nlohmann::json& descriptor);
    nlohmann::json to_json() const;

    double operator()(const Point& x) const;
    /// Lower bound of r on the closed ball B_r(z), exact for the built-ins.
    double infimum_on_ball(const BaseSystem& system, const Point& z, double r) const;

    Kind kind() const { return kind_; }
    const std::string& name() const { return name_; }
    bool bounded() const { return bounded_; }

  private:
    Kind kind_ = Kind::constant;
    std::string name_ = "constant";
    double a_ = 1.0;
    double b_ = 0.0;
    bool bounded_ = true;
    std::function<double(const Point&)> eval_;
};

/// A point of the suspension in canonical form 0 <= height < r(base).
struct FlowPoint {
    Point base{};
    double height = 0.0;
};

/// Suspension semi-flow over a base system. The normalized invariant measure
/// is mu_Omega x Lebesgue / E(r).
class SuspensionFlow {
  public:
    SuspensionFlow(SystemPtr system, RoofFunction roof, Estimate mean_roof, double roof_bound,
                   std::uint64_t seed);

    const BaseSystem& base() const { return *system_; }
    const SystemPtr& base_ptr() const { return system_; }
    const RoofFunction& roof() const { return roof_; }
    /// E(r) with the half-width of its 95% CI.
    const Estimate& mean_roof() const { return mean_roof_; }
    /// Proposal bound of the rejection sampler for the r-weighted marginal.
    double roof_bound() const { return roof_bound_; }
    std::uint64_t seed() const { return seed_; }

    /// r(x); throws NonPositiveRoof.
    double roof_at(const Point& x) const;
    /// Box metric max(d_Omega, |height difference|).
    double distance(const FlowPoint& a, const FlowPoint& b) const;

  private:
    SystemPtr system_;
    RoofFunction roof_;
    Estimate mean_roof_;
    double roof_bound_;
    std::uint64_t seed_;
};

struct SuspensionOptions {
    std::size_t mean_roof_samples = 1'000'000;
    /// Relative Cauchy tolerance between the half-sample and full-sample means.
    double cauchy_tolerance = 0.05;
    SamplerOptions sampler{};
};

SuspensionFlow build_suspension(SystemPtr system, RoofFunction roof, std::uint64_t seed,
                                const SuspensionOptions& options = {});

/// X_t(p) by exact accumulation of roof values.
FlowPoint flow_advance(const SuspensionFlow& flow, FlowPoint p, double t);

/// Closed box-metric ball B_rho(x) x [s - rho, s + rho].
struct FlowBall {
    FlowPoint center;
    double radius = 0.0;
};

/// The ball is a clean flow box: rho < s and s + rho < inf of r over the base ball.
bool is_clean(const SuspensionFlow& flow, const FlowBall& ball);

bool in_ball(const SuspensionFlow& flow, const FlowBall& ball, const FlowPoint& p);

/// mu_X of the ball. Clean boxes use mu_Omega(B) * 2 rho / E(r); otherwise the
/// height overlap is integrated sample by sample, or DirtyFlowBox in strict mode.
Estimate flow_ball_measure(const SuspensionFlow& flow, const FlowBall& ball,
                           std::span<const Point> base_samples, bool strict = false);

/// mu_X(ball) as the fraction of mu_X samples inside it.
Estimate flow_box_measure_direct(const SuspensionFlow& flow, const FlowBall& ball,
                                 std::span<const FlowPoint> flow_samples);

/// mu_X samples: base points from the invariant sampler accepted with
/// probability r(x)/bound, heights uniform on [0, r(x)).
std::vector<FlowPoint> sample_flow_invariant(const SuspensionFlow& flow, std::uint64_t seed,
                                             std::size_t count, const SamplerOptions& options = {});

/// Profile r -> mu_X(B_r(center)) with heights integrated exactly per base sample.
MeasureProfile flow_measure_profile(const SuspensionFlow& flow, const FlowPoint& center,
                                    std::span<const double> radii,
                                    std::span<const Point> base_samples);

/// Same profile from `count` streamed invariant base samples.
MeasureProfile flow_measure_profile(const SuspensionFlow& flow, const FlowPoint& center,
                                    std::span<const double> radii, std::uint64_t master_seed,
                                    std::size_t count, const SamplerOptions& options = {});

}  // namespace reclab
