#pragma once

#include <cmath>
#include <cstdint>

#include "reclab/random.hpp"
#include "reclab/systems.hpp"

namespace reclab::testing {

// Hand-rolled generators for property tests; every case is reproducible
// from the fixed seed.
class Gen {
  public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return rng_.uniform(lo, hi); }
    std::size_t integer(std::size_t lo, std::size_t hi) {
        return lo + static_cast<std::size_t>(rng_.next() % (hi - lo + 1));
    }
    Point point(const BaseSystem& system) { return system.uniform_point(rng_); }
    std::uint64_t seed() { return rng_.next(); }

  private:
    Rng rng_;
};

// Lebesgue length of the circle arc B_r(z), r <= 1/2.
inline double arc_length(double r) { return std::min(1.0, 2.0 * r); }

inline bool within(double value, double target, double tol) { return std::fabs(value - target) <= tol; }

}  // namespace reclab::testing
