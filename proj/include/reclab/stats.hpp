#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace reclab {

/// Point estimate with the half-width of its 95% confidence interval.
struct Estimate {
    double value = 0.0;
    double ci = 0.0;
};

/// Binomial proportion with the normal-approximation 95% half-width.
Estimate proportion(std::size_t hits, std::size_t total);

/// Sample mean with the normal-approximation 95% half-width.
Estimate sample_mean(std::span<const double> values);

/// Step CDF of a sample. Censored observations are known only to exceed
/// every recorded value; they keep the CDF below 1 everywhere.
class EmpiricalCdf {
  public:
    EmpiricalCdf() = default;
    explicit EmpiricalCdf(std::vector<double> samples, std::size_t censored = 0);

    /// Right-continuous: fraction of all observations <= x.
    double operator()(double x) const;

    const std::vector<double>& sorted_samples() const { return sorted_; }
    std::size_t censored_count() const { return censored_; }
    std::size_t total() const { return sorted_.size() + censored_; }
    bool empty() const { return total() == 0; }

  private:
    std::vector<double> sorted_;
    std::size_t censored_ = 0;
};

/// Reference distribution functions used as limit laws.
struct ReferenceLaw {
    enum class Kind { exponential, gumbel, frechet, weibull, uniform };
    Kind kind = Kind::exponential;
    /// Shape: beta for Frechet, gamma for Weibull; unused otherwise.
    double shape = 1.0;

    double cdf(double x) const;
    std::string name() const;

    static ReferenceLaw exponential() { return {Kind::exponential, 1.0}; }
    static ReferenceLaw gumbel() { return {Kind::gumbel, 1.0}; }
    static ReferenceLaw frechet(double beta) { return {Kind::frechet, beta}; }
    /// Max-stable (reversed) Weibull exp(-(-y)^gamma) on y <= 0.
    static ReferenceLaw weibull(double gamma) { return {Kind::weibull, gamma}; }
    static ReferenceLaw uniform() { return {Kind::uniform, 1.0}; }

    /// Parses {"law": "frechet", "shape": 2} or a bare name; throws UnknownReference.
    static ReferenceLaw from_json(const nlohmann::json& descriptor);
};

/// Sup-norm distance between the empirical step CDF and the reference CDF.
/// Throws EmptySample for an empty sample.
double ks_distance(const EmpiricalCdf& empirical, const ReferenceLaw& reference);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Ordinary least squares y = intercept + slope * x; needs two distinct x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// Geometric grid of `count` values from lo to hi inclusive.
std::vector<double> geometric_grid(double lo, double hi, std::size_t count);

/// Uniform grid of `count` values from lo to hi inclusive.
std::vector<double> linear_grid(double lo, double hi, std::size_t count);

}  // namespace reclab
