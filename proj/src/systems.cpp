#include "reclab/systems.hpp"

#include <cmath>
#include <set>

#include "reclab/error.hpp"

namespace reclab {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : -1.0; }

void check_params(std::string_view system, const nlohmann::json& params,
                  const std::set<std::string>& allowed) {
    if (!params.is_object()) {
        throw Error(ErrorCode::ConfigError, "parameters of '" + std::string(system) + "' must be an object");
    }
    for (const auto& [key, value] : params.items()) {
        if (!allowed.count(key)) {
            throw Error(ErrorCode::ConfigError,
                        "unknown parameter '" + key + "' for system '" + std::string(system) + "'");
        }
        if (!value.is_number()) {
            throw Error(ErrorCode::ConfigError, "parameter '" + key + "' must be numeric");
        }
    }
}

double param_or(const nlohmann::json& params, const char* key, double fallback) {
    return params.contains(key) ? params.at(key).get<double>() : fallback;
}

}  // namespace

// ---------------------------------------------------------------- doubling

Point DoublingMap::apply(const Point& x) const {
    double y = 2.0 * x[0];
    if (y >= 1.0) y -= 1.0;
    return {y, 0.0};
}

double DoublingMap::distance(const Point& a, const Point& b) const {
    const double d = std::fabs(a[0] - b[0]);
    return std::min(d, 1.0 - d);
}

OrbitState DoublingMap::begin(const Point& x, Rng& rng) const {
    double v = x[0] - std::floor(x[0]);
    if (v >= 1.0) v = 0.0;
    OrbitState s;
    s.word = static_cast<std::uint64_t>(std::ldexp(v, 64));
    // A double in [2^e, 2^(e+1)) fixes the top 53 bits from position e down;
    // the e + 12 lowest register bits are unknown.
    const int unknown = v > 0.0 ? std::min(64, std::ilogb(v) + 12) : 0;
    if (unknown > 0) {
        const std::uint64_t mask = unknown == 64 ? ~0ULL : (1ULL << unknown) - 1;
        s.word = (s.word & ~mask) | (rng.next() & mask);
    }
    s.point = {static_cast<double>(s.word >> 11) * 0x1.0p-53, 0.0};
    return s;
}

void DoublingMap::advance(OrbitState& state, Rng& rng) const {
    state.word = (state.word << 1) | static_cast<std::uint64_t>(rng.bit());
    // Truncation keeps the point strictly below 1.
    state.point[0] = static_cast<double>(state.word >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------- LSV

LsvMap::LsvMap(double alpha) : alpha_(alpha), two_pow_alpha_(std::pow(2.0, alpha)) {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw Error(ErrorCode::ConfigError, "lsv requires alpha in (0, 1]");
    }
}

Point LsvMap::apply(const Point& x) const {
    const double v = x[0];
    if (v < 0.5) return {v * (1.0 + two_pow_alpha_ * std::pow(v, alpha_)), 0.0};
    return {2.0 * v - 1.0, 0.0};
}

double LsvMap::distance(const Point& a, const Point& b) const { return std::fabs(a[0] - b[0]); }

// ---------------------------------------------------------------- Lorenz

Lorenz1dMap::Lorenz1dMap(double alpha, double b) : alpha_(alpha), b_(b) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorCode::ConfigError, "lorenz1d requires alpha in (0, 1)");
    }
    if (!(b > 1.0 && b <= 2.0)) {
        throw Error(ErrorCode::ConfigError, "lorenz1d requires b in (1, 2]");
    }
}

double Lorenz1dMap::f(double x) const {
    if (std::fabs(x) < kSingularTolerance) {
        throw Error(ErrorCode::SingularOrbit, "orbit reached the singular line x = 0");
    }
    return sign(x) * (b_ * std::pow(std::fabs(x), alpha_) - 1.0);
}

double Lorenz1dMap::derivative(double x) const {
    return b_ * alpha_ * std::pow(std::fabs(x), alpha_ - 1.0);
}

Point Lorenz1dMap::apply(const Point& x) const { return {f(x[0]), 0.0}; }

double Lorenz1dMap::distance(const Point& a, const Point& b) const { return std::fabs(a[0] - b[0]); }

Lorenz2dMap::Lorenz2dMap(double alpha, double b, double lambda, double c)
    : quotient_(alpha, b), alpha_(alpha), b_(b), lambda_(lambda), c_(c) {
    if (!(lambda > 0.0 && lambda <= 0.5)) {
        throw Error(ErrorCode::ConfigError, "lorenz2d requires lambda in (0, 1/2]");
    }
    if (!(c - lambda > 0.0 && c + lambda <= 1.0)) {
        throw Error(ErrorCode::ConfigError, "lorenz2d requires lambda < c <= 1 - lambda");
    }
}

Point Lorenz2dMap::apply(const Point& x) const {
    const double fx = quotient_.f(x[0]);
    return {fx, lambda_ * x[1] + c_ * sign(x[0])};
}

double Lorenz2dMap::distance(const Point& a, const Point& b) const {
    return std::max(std::fabs(a[0] - b[0]), std::fabs(a[1] - b[1]));
}

// ---------------------------------------------------------------- factory

SystemPtr make_system(std::string_view name, const nlohmann::json& params) {
    const nlohmann::json p = params.is_null() ? nlohmann::json::object() : params;
    if (name == "doubling") {
        check_params(name, p, {});
        return std::make_shared<DoublingMap>();
    }
    if (name == "lsv") {
        check_params(name, p, {"alpha"});
        return std::make_shared<LsvMap>(param_or(p, "alpha", 0.5));
    }
    if (name == "lorenz1d") {
        check_params(name, p, {"alpha", "b"});
        return std::make_shared<Lorenz1dMap>(param_or(p, "alpha", 0.7), param_or(p, "b", 1.8));
    }
    if (name == "lorenz2d") {
        check_params(name, p, {"alpha", "b", "lambda", "c"});
        return std::make_shared<Lorenz2dMap>(param_or(p, "alpha", 0.7), param_or(p, "b", 1.8),
                                             param_or(p, "lambda", 0.3), param_or(p, "c", 0.6));
    }
    throw Error(ErrorCode::ConfigError, "unknown system '" + std::string(name) + "'");
}

std::vector<std::pair<std::string, nlohmann::json>> builtin_systems() {
    return {
        {"doubling", nlohmann::json::object()},
        {"lsv", {{"alpha", 0.5}}},
        {"lorenz1d", {{"alpha", 0.7}, {"b", 1.8}}},
        {"lorenz2d", {{"alpha", 0.7}, {"b", 1.8}, {"lambda", 0.3}, {"c", 0.6}}},
    };
}

Point iterate(const BaseSystem& system, Point x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x = system.apply(x);
    return x;
}

}  // namespace reclab
