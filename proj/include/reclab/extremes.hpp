#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "reclab/measure.hpp"
#include "reclab/stats.hpp"
#include "reclab/suspension.hpp"
#include "reclab/systems.hpp"

namespace reclab {

/// q(d) = h(d) / (2d) for the flow form, q(d) = h(d) for the map form.
enum class ObservableForm { flow, map };

/// phi(x) = g(q(d(x, z))) with
///   kind 1: g(v) = -log v
///   kind 2: g(v) = v^(-1/beta)
///   kind 3: g(v) = D - v^(1/gamma)
/// Kind 1 has p = 1 as its auxiliary function; it plays no role at runtime
/// because levels are defined through g directly.
struct ObservableSpec {
    int kind = 1;
    double beta = 1.0;
    double gamma = 1.0;
    double d_max = 0.0;
    ObservableForm form = ObservableForm::map;
    /// Centered at z; carries the center height for observables on a flow.
    MeasureProfile profile;
};

/// tau_1(y) = e^-y, tau_2(y) = y^-beta on y > 0, tau_3(y) = (-y)^gamma on y <= 0.
/// Throws DomainError outside the kind's domain.
double tail_transform(int kind, double shape, double y);

/// H(y) = G(tau_kind(y)); G defaults to e^-t.
double limit_law(int kind, double shape, double y,
                 const std::function<double(double)>& G = nullptr);

/// Gumbel, Frechet(beta) or max-stable Weibull(gamma).
ReferenceLaw limit_reference(int kind, double shape);

class Observable {
  public:
    explicit Observable(ObservableSpec spec);

    const ObservableSpec& spec() const { return spec_; }
    /// Monotone version of q used for evaluation and inversion.
    const MonotoneCurve& q() const { return q_; }
    double shape() const;

    double g(double v) const;
    /// phi as a function of the distance to the center; +inf (kinds 1, 2)
    /// or D (kind 3) at distance 0. Throws ProfileRangeExceeded.
    double at_distance(double d) const;

    /// u_t(y) = g(tau(y) / t).
    double level(double t, double y) const;
    /// l(tau(y) / t): radius of the ball whose hitting is dual to {M_t > u_t(y)}.
    double radius(double t, double y) const;
    /// Z with P(Z <= y) = P(M_t <= u_t(y)).
    double normalize(double m, double t) const;

  private:
    ObservableSpec spec_;
    MonotoneCurve q_;
};

/// phi on base points (map systems).
double observe(const Observable& obs, const BaseSystem& system, const Point& x);
/// phi on flow points, box metric to (z, s).
double observe(const Observable& obs, const SuspensionFlow& flow, const FlowPoint& x);

/// u_t(y) with argument checks.
double normalizing_level(const Observable& obs, double t, double y);

struct RunningMax {
    double value = 0.0;
    /// Smallest distance to the center along the orbit; phi is non-increasing in it.
    double min_distance = 0.0;
};

/// Maximum of phi over the iterates 0..floor(t).
RunningMax running_max(const Observable& obs, const BaseSystem& system, const Point& start, double t,
                       std::uint64_t orbit_seed = 0);

/// Supremum of phi over flow time [0, t], exact per roof segment.
RunningMax running_max(const Observable& obs, const SuspensionFlow& flow, const FlowPoint& start,
                       double t, std::uint64_t orbit_seed = 0);

/// Minimum box distance to (z, s) over flow time [0, t].
double flow_min_distance(const SuspensionFlow& flow, const FlowPoint& start, const FlowPoint& center,
                         double t, std::uint64_t orbit_seed = 0);

struct EvlOptions {
    std::size_t n_samples = 50'000;
    SamplerOptions sampler{};
};

struct EvlResult {
    std::vector<double> y_grid;
    std::vector<double> levels;
    std::vector<double> empirical;
    std::vector<double> predicted;
    std::vector<double> ci;
    /// Normalized maxima and their KS distance to the limit law.
    EmpiricalCdf maxima;
    double ks = 0.0;
    /// sup over the grid of |empirical - predicted|.
    double grid_sup = 0.0;
};

EvlResult evl_empirical(const Observable& obs, const BaseSystem& system, double t,
                        std::span<const double> y_grid, std::uint64_t seed, const EvlOptions& options = {});

EvlResult evl_empirical(const Observable& obs, const SuspensionFlow& flow, double t,
                        std::span<const double> y_grid, std::uint64_t seed, const EvlOptions& options = {});

struct DualityResult {
    /// P(M_t <= u_t(y)).
    Estimate p_max;
    /// P(tau^X of B_rho > t).
    Estimate p_hit;
    double rho = 0.0;
    double level = 0.0;
};

/// Both sides of {M_t <= u_t(y)} = {tau_{B_rho(z)} > t}, rho = l(tau(y)/t),
/// measured on the same mu_X starts and orbits.
DualityResult evl_hitting_duality(const Observable& obs, const SuspensionFlow& flow, double t, double y,
                                  std::uint64_t seed, const EvlOptions& options = {});

struct ProfileOptions {
    std::size_t samples = 20'000'000;
    /// Pilot sample that places the smallest grid radius.
    std::size_t pilot_samples = 1'000'000;
    /// Expected count of full-sample points inside the smallest radius.
    std::size_t min_count = 2000;
    std::size_t points = 200;
    SamplerOptions sampler{};
};

/// Profile around z on a geometric grid from an adaptive lower radius up to r_max.
MeasureProfile build_profile(const BaseSystem& system, const Point& z, double r_max, std::uint64_t seed,
                             const ProfileOptions& options = {});

/// Box-metric profile around (z, s) for flow-form observables.
MeasureProfile build_profile(const SuspensionFlow& flow, const FlowPoint& center, double r_max,
                             std::uint64_t seed, const ProfileOptions& options = {});

/// False when some profile increment exceeds 5 times both of its neighbors
/// by more than sampling granularity.
bool profile_continuous(const MeasureProfile& profile);

}  // namespace reclab
