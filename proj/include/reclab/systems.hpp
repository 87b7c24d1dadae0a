#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reclab/random.hpp"

namespace reclab {

/// Coordinates in R^k, k in {1, 2}. One-dimensional systems leave [1] at 0.
using Point = std::array<double, 2>;

/// Orbits closer than this to a singular set are treated as singular.
inline constexpr double kSingularTolerance = 1e-12;

/// State carried along a simulated orbit. `word` is scratch space for systems
/// that track more precision than a double holds.
struct OrbitState {
    Point point{};
    std::uint64_t word = 0;
};

/// A map R on a metric domain Omega, with a reference distribution for
/// starting points and a burn-in used by the invariant-measure sampler.
class BaseSystem {
  public:
    virtual ~BaseSystem() = default;

    virtual std::string_view name() const = 0;
    virtual int dim() const = 0;
    virtual nlohmann::json params() const = 0;

    /// R(x). Throws Error(SingularOrbit) near the singular set.
    virtual Point apply(const Point& x) const = 0;
    virtual double distance(const Point& a, const Point& b) const = 0;
    virtual bool contains(const Point& x) const = 0;
    /// Largest distance between two points of the domain.
    virtual double diameter() const = 0;
    /// True when the first coordinate lives on the circle [0, 1).
    virtual bool periodic() const { return false; }
    /// Uniform point on the domain; starting distribution of the sampler.
    virtual Point uniform_point(Rng& rng) const = 0;

    virtual OrbitState begin(const Point& x, Rng& /*rng*/) const { return {x, 0}; }
    virtual void advance(OrbitState& state, Rng& /*rng*/) const { state.point = apply(state.point); }

    std::size_t burn_in() const { return burn_in_; }
    void set_burn_in(std::size_t n) { burn_in_ = n; }

  private:
    std::size_t burn_in_ = 1000;
};

using SystemPtr = std::shared_ptr<const BaseSystem>;

/// T(x) = 2x mod 1 on the circle [0, 1).
///
/// Simulated orbits keep a 64-bit binary expansion and shift in a fresh
/// random bit per step, so long orbits follow a Lebesgue-typical point
/// instead of collapsing onto 0 after 53 doublings. `apply` is plain
/// double arithmetic.
class DoublingMap final : public BaseSystem {
  public:
    std::string_view name() const override { return "doubling"; }
    int dim() const override { return 1; }
    nlohmann::json params() const override { return nlohmann::json::object(); }
    Point apply(const Point& x) const override;
    double distance(const Point& a, const Point& b) const override;
    bool contains(const Point& x) const override { return x[0] >= 0.0 && x[0] < 1.0; }
    double diameter() const override { return 0.5; }
    bool periodic() const override { return true; }
    Point uniform_point(Rng& rng) const override { return {rng.uniform(), 0.0}; }
    /// Bits of the register below the precision of x are drawn at random.
    OrbitState begin(const Point& x, Rng& rng) const override;
    void advance(OrbitState& state, Rng& rng) const override;
};

/// Liverani-Saussol-Vaienti map: x(1 + (2x)^alpha) on [0, 1/2), 2x - 1 on [1/2, 1].
class LsvMap final : public BaseSystem {
  public:
    explicit LsvMap(double alpha);
    std::string_view name() const override { return "lsv"; }
    int dim() const override { return 1; }
    nlohmann::json params() const override { return {{"alpha", alpha_}}; }
    Point apply(const Point& x) const override;
    double distance(const Point& a, const Point& b) const override;
    bool contains(const Point& x) const override { return x[0] >= 0.0 && x[0] <= 1.0; }
    double diameter() const override { return 1.0; }
    Point uniform_point(Rng& rng) const override { return {rng.uniform(), 0.0}; }

    double alpha() const { return alpha_; }
    /// Induced tower base [1/2, 1].
    static bool in_tower_base(const Point& x) { return x[0] >= 0.5; }

  private:
    double alpha_;
    double two_pow_alpha_;
};

/// One-dimensional Lorenz-like map f(x) = sign(x)(b|x|^alpha - 1) on [-1, 1] \ {0}.
class Lorenz1dMap final : public BaseSystem {
  public:
    Lorenz1dMap(double alpha, double b);
    std::string_view name() const override { return "lorenz1d"; }
    int dim() const override { return 1; }
    nlohmann::json params() const override { return {{"alpha", alpha_}, {"b", b_}}; }
    Point apply(const Point& x) const override;
    double distance(const Point& a, const Point& b) const override;
    bool contains(const Point& x) const override { return x[0] >= -1.0 && x[0] <= 1.0; }
    double diameter() const override { return 2.0; }
    Point uniform_point(Rng& rng) const override { return {rng.uniform(-1.0, 1.0), 0.0}; }

    double f(double x) const;
    double derivative(double x) const;

  private:
    double alpha_;
    double b_;
};

/// Geometric Lorenz return map F(x, y) = (f(x), lambda*y + c*sign(x)) on the
/// square [-1, 1]^2 minus the line {x = 0}, with the max metric.
class Lorenz2dMap final : public BaseSystem {
  public:
    Lorenz2dMap(double alpha, double b, double lambda, double c);
    std::string_view name() const override { return "lorenz2d"; }
    int dim() const override { return 2; }
    nlohmann::json params() const override {
        return {{"alpha", alpha_}, {"b", b_}, {"lambda", lambda_}, {"c", c_}};
    }
    Point apply(const Point& x) const override;
    double distance(const Point& a, const Point& b) const override;
    bool contains(const Point& x) const override {
        return x[0] >= -1.0 && x[0] <= 1.0 && x[1] >= -1.0 && x[1] <= 1.0;
    }
    double diameter() const override { return 2.0; }
    Point uniform_point(Rng& rng) const override {
        return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    }

  private:
    Lorenz1dMap quotient_;
    double alpha_;
    double b_;
    double lambda_;
    double c_;
};

/// Builds a built-in system from its identifier and parameter record.
/// Unknown names or parameters raise Error(ConfigError).
SystemPtr make_system(std::string_view name, const nlohmann::json& params = nlohmann::json::object());

/// Identifiers and default parameters of the built-in systems.
std::vector<std::pair<std::string, nlohmann::json>> builtin_systems();

/// R^n(x) by repeated `apply`.
Point iterate(const BaseSystem& system, Point x, std::size_t n);

/// Stepper over a simulated orbit.
class Orbit {
  public:
    Orbit(const BaseSystem& system, const Point& start, Rng& rng)
        : system_(&system), rng_(&rng), state_(system.begin(start, rng)) {}

    const Point& point() const { return state_.point; }
    void step() { system_->advance(state_, *rng_); }

  private:
    const BaseSystem* system_;
    Rng* rng_;
    OrbitState state_;
};

}  // namespace reclab
