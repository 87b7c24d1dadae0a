#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "reclab/measure.hpp"
#include "reclab/stats.hpp"
#include "reclab/suspension.hpp"
#include "reclab/systems.hpp"

namespace reclab {

/// Closed ball in the base space.
struct BaseBall {
    Point center{};
    double radius = 0.0;
};

/// Exit time and successive entry instants of a flow orbit into a target.
struct HittingRecord {
    double exit_time = 0.0;
    std::vector<double> hits;
    /// The horizon was reached before m_max hits.
    bool truncated = false;
};

struct DiscreteHittingRecord {
    std::vector<std::uint64_t> hits;
    bool truncated = false;
};

/// E_B(p): 0 outside the ball, otherwise the time to leave through the top
/// of the height window. Throws HorizonExceeded if that exceeds `horizon`.
double exit_time(const SuspensionFlow& flow, const FlowPoint& p, const FlowBall& ball,
                 double horizon = std::numeric_limits<double>::infinity());

/// First `m_max` entry instants after the exit time, up to `horizon`.
/// Each roof segment over the base ball enters the ball once, at height
/// s - rho. `orbit_seed` feeds systems whose simulated orbits draw bits.
/// Throws DirtyFlowBox for balls that are not clean flow boxes.
HittingRecord hitting_times(const SuspensionFlow& flow, const FlowPoint& p, const FlowBall& ball,
                            std::size_t m_max, double horizon, std::uint64_t orbit_seed = 0);

/// Positive iterates k with R^k(x) in the closed ball, up to n_max.
DiscreteHittingRecord discrete_hitting_times(const BaseSystem& system, const Point& x,
                                             const BaseBall& target, std::size_t m_max,
                                             std::uint64_t n_max, std::uint64_t orbit_seed = 0);

/// |tau^m measured by the flow - tau^m rebuilt from discrete hits and roof sums|.
/// Throws TruncatedRecord if fewer than m hits occur before `horizon`.
double flow_base_consistency(const SuspensionFlow& flow, const FlowPoint& p, const FlowBall& ball,
                             std::size_t m, std::uint64_t orbit_seed = 0, double horizon = 1e12);

/// c(y, k) = (sum_{i<k} r(R^i y)) / (k E(r)); tends to 1 by the ergodic theorem.
double birkhoff_factor(const SuspensionFlow& flow, const Point& y, std::uint64_t k,
                       std::uint64_t orbit_seed = 0);

/// Normalized first-hitting times and their multiplier.
struct NormalizedLaw {
    /// mu_Omega(B) for maps, mu_X(B) / (2 rho) for flows.
    Estimate normalization;
    EmpiricalCdf samples;
};

struct SurvivalOptions {
    std::size_t n_trajectories = 50'000;
    std::size_t measure_samples = 1'000'000;
    /// Horizon in normalized time.
    double horizon = 50.0;
    SamplerOptions sampler{};
};

struct SurvivalResult {
    NormalizedLaw law;
    std::vector<double> t_grid;
    std::vector<double> survival;
    std::vector<double> ci;
    /// Base ball measure used in the normalization.
    Estimate ball_measure;
    double ks = 0.0;
};

/// Flow version: starts from mu_X, normalized time tau^X * mu_X(B) / (2 rho).
SurvivalResult normalized_survival(const SuspensionFlow& flow, const FlowBall& ball,
                                   std::span<const double> t_grid, std::uint64_t seed,
                                   const SurvivalOptions& options = {});

/// Map version: starts from mu_Omega, normalized time tau^R * mu_Omega(B).
SurvivalResult normalized_survival(const BaseSystem& system, const BaseBall& ball,
                                   std::span<const double> t_grid, std::uint64_t seed,
                                   const SurvivalOptions& options = {});

/// Frequencies of exactly m hits in normalized time [0, T]; the last row
/// collects m >= m_max so the rows sum to 1.
struct PoissonTable {
    std::vector<double> frequency;
    std::vector<double> ci;
    std::vector<double> predicted;
    Estimate normalization;
    double t_normalized = 0.0;
};

PoissonTable poisson_counts(const SuspensionFlow& flow, const FlowBall& ball, double t_normalized,
                            std::size_t m_max, std::uint64_t seed, const SurvivalOptions& options = {});

/// e^{-t} t^m / m!.
double poisson_pmf(double t, std::size_t m);

struct KacResult {
    /// mean return time x mu(A); 1 by Kac's lemma.
    Estimate product;
    Estimate mean_return;
    Estimate measure;
    std::size_t censored = 0;
};

struct KacOptions {
    std::size_t n_starts = 100'000;
    std::size_t measure_samples = 1'000'000;
    std::uint64_t n_max = 100'000'000;
    SamplerOptions sampler{};
};

KacResult kac_check(const BaseSystem& system, const BaseBall& target, std::uint64_t seed,
                    const KacOptions& options = {});

}  // namespace reclab
