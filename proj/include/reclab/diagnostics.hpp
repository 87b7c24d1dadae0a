#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "reclab/hitting.hpp"
#include "reclab/measure.hpp"
#include "reclab/stats.hpp"
#include "reclab/systems.hpp"

namespace reclab {

struct LipschitzObservable {
    std::function<double(const Point&)> eval;
    double lip_bound = 0.0;
    double sup_bound = 0.0;

    double operator()(const Point& x) const { return eval(x); }
};

/// Largest |Phi(x) - Phi(y)| / d(x, y) over consecutive sample pairs.
double empirical_lipschitz(const LipschitzObservable& phi, const BaseSystem& system,
                           std::span<const Point> samples);

/// Cov(Phi, 1_A o T^j) from invariant samples; ci from the centered products.
Estimate correlation(const BaseSystem& system, const LipschitzObservable& phi, const BaseBall& psi_set,
                     std::size_t j, std::span<const Point> samples);

struct ShortReturnEstimate {
    Estimate measure;
    /// Grid points skipped because their orbit met the singular set.
    std::size_t singular_skipped = 0;
};

/// mu(N_r(j)): fraction of samples x for which a grid search of step r/20
/// over B_r(x) finds y with T^j(y) in B_r(x).
ShortReturnEstimate short_return_measure(const BaseSystem& system, double r, std::size_t j,
                                         std::span<const Point> samples);

/// mu(V_r), V_r the union of N_r(j) over 1 <= j <= j_max.
ShortReturnEstimate vr_measure(const BaseSystem& system, double r, std::size_t j_max,
                               std::span<const Point> samples);

struct TowerTailOptions {
    std::size_t n_returns = 10'000'000;
    std::size_t block_returns = 100'000;
    /// Fit only n at or beyond this (the first decade is transient).
    double fit_min_n = 10.0;
    /// Grid points need this many exceedances to enter the fit.
    std::size_t min_count = 50;
    /// Excursions longer than this many steps are censored.
    std::uint64_t horizon = 100'000'000;
};

struct TowerTail {
    std::vector<double> n_grid;
    std::vector<double> tail;
    std::vector<double> ci;
    double exponent = 0.0;
    std::size_t fitted_points = 0;
    std::size_t returns = 0;
    std::size_t censored = 0;
};

/// mu_Lambda(R > n) for the return time R to the tower base Lambda = [1/2, 1]
/// of the LSV map, from the excursions of long orbits, with its log-log slope.
TowerTail tower_tail(const BaseSystem& system, std::span<const double> n_grid, std::uint64_t seed,
                     const TowerTailOptions& options = {});

/// Gap |mu(A, no visit to A in [t, t+l)) - mu(A) mu(no visit in [0, l))| for A = B_r(z).
struct D2Curve {
    std::vector<double> t_grid;
    std::vector<double> gap;
    std::vector<double> ci;
    Estimate ball_measure;
    /// max |gap - non-increasing isotonic fit|.
    double isotonic_residual = 0.0;
};

struct SurrogateOptions {
    std::size_t measure_samples = 1'000'000;
    /// Starts drawn without conditioning.
    std::size_t n_starts = 100'000;
    /// Starts conditioned on A.
    std::size_t n_conditioned = 100'000;
    SamplerOptions sampler{};
};

D2Curve d2_surrogate(const BaseSystem& system, const BaseBall& target, std::size_t l,
                     std::span<const double> t_grid, std::uint64_t seed, const SurrogateOptions& options = {});

struct DPrimeCurve {
    std::vector<double> k_grid;
    std::vector<double> sum;
    std::vector<double> ci;
    Estimate ball_measure;
};

/// n * sum_{j=1}^{floor(n/k)} mu(A and T^-j A) over a grid of k.
DPrimeCurve dprime_surrogate(const BaseSystem& system, const BaseBall& target, std::size_t n,
                             std::span<const double> k_grid, std::uint64_t seed,
                             const SurrogateOptions& options = {});

/// Least-squares non-increasing fit (pool adjacent violators).
std::vector<double> isotonic_decreasing(std::span<const double> values);

}  // namespace reclab
