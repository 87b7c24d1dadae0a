#include "reclab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "reclab/error.hpp"

namespace reclab {

Estimate proportion(std::size_t hits, std::size_t total) {
    if (total == 0) throw Error(ErrorCode::EmptySample, "proportion of an empty sample");
    const double n = static_cast<double>(total);
    const double p = static_cast<double>(hits) / n;
    return {p, 1.96 * std::sqrt(p * (1.0 - p) / n)};
}

Estimate sample_mean(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptySample, "mean of an empty sample");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double var = values.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {mean, 1.96 * std::sqrt(var / n)};
}

EmpiricalCdf::EmpiricalCdf(std::vector<double> samples, std::size_t censored)
    : sorted_(std::move(samples)), censored_(censored) {
    std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::operator()(double x) const {
    if (empty()) throw Error(ErrorCode::EmptySample, "CDF of an empty sample");
    const auto k = std::upper_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
    return static_cast<double>(k) / static_cast<double>(total());
}

double ReferenceLaw::cdf(double x) const {
    switch (kind) {
    case Kind::exponential: return x <= 0.0 ? 0.0 : -std::expm1(-x);
    case Kind::gumbel: return std::exp(-std::exp(-x));
    case Kind::frechet: return x <= 0.0 ? 0.0 : std::exp(-std::pow(x, -shape));
    case Kind::weibull: return x >= 0.0 ? 1.0 : std::exp(-std::pow(-x, shape));
    case Kind::uniform: return std::clamp(x, 0.0, 1.0);
    }
    return 0.0;
}

std::string ReferenceLaw::name() const {
    switch (kind) {
    case Kind::exponential: return "exponential";
    case Kind::gumbel: return "gumbel";
    case Kind::frechet: return "frechet";
    case Kind::weibull: return "weibull";
    case Kind::uniform: return "uniform";
    }
    return "unknown";
}

ReferenceLaw ReferenceLaw::from_json(const nlohmann::json& descriptor) {
    std::string law;
    double shape = 1.0;
    if (descriptor.is_string()) {
        law = descriptor.get<std::string>();
    } else if (descriptor.is_object() && descriptor.contains("law")) {
        law = descriptor.at("law").get<std::string>();
        if (descriptor.contains("shape")) shape = descriptor.at("shape").get<double>();
    } else {
        throw Error(ErrorCode::UnknownReference, "reference law descriptor must be a name or {law, shape}");
    }
    if (law == "exponential") return exponential();
    if (law == "gumbel") return gumbel();
    if (law == "frechet") return frechet(shape);
    if (law == "weibull") return weibull(shape);
    if (law == "uniform") return uniform();
    throw Error(ErrorCode::UnknownReference, "unknown reference law '" + law + "'");
}

double ks_distance(const EmpiricalCdf& empirical, const ReferenceLaw& reference) {
    if (empirical.empty()) throw Error(ErrorCode::EmptySample, "KS distance of an empty sample");
    const auto& xs = empirical.sorted_samples();
    const double n = static_cast<double>(empirical.total());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = reference.cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    // Censored mass sits beyond every observation, where the reference reaches 1.
    d = std::max(d, 1.0 - static_cast<double>(xs.size()) / n);
    return d;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw Error(ErrorCode::DomainError, "line fit needs at least two paired points");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw Error(ErrorCode::DomainError, "line fit needs distinct abscissae");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

std::vector<double> geometric_grid(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0 && hi >= lo) || count == 0) {
        throw Error(ErrorCode::DomainError, "geometric grid needs 0 < lo <= hi and count >= 1");
    }
    std::vector<double> grid(count);
    if (count == 1) {
        grid[0] = lo;
        return grid;
    }
    const double step = std::log(hi / lo) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) grid[i] = lo * std::exp(step * static_cast<double>(i));
    grid.back() = hi;
    return grid;
}

std::vector<double> linear_grid(double lo, double hi, std::size_t count) {
    if (count == 0) return {};
    std::vector<double> grid(count);
    if (count == 1) {
        grid[0] = lo;
        return grid;
    }
    for (std::size_t i = 0; i < count; ++i) {
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    return grid;
}

}  // namespace reclab
