#include "reclab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "reclab/diagnostics.hpp"
#include "reclab/error.hpp"
#include "reclab/extremes.hpp"
#include "reclab/hitting.hpp"
#include "reclab/measure.hpp"
#include "reclab/parallel.hpp"
#include "reclab/suspension.hpp"
#include "reclab/systems.hpp"

namespace reclab {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

// Reads keys of one JSON object, records the resolved value of each, and
// rejects keys nobody asked for.
class Reader {
  public:
    Reader(const json& source, std::string where) : source_(source), where_(std::move(where)) {
        if (!source_.is_object()) config_error(where_ + " must be an object");
        resolved_ = json::object();
    }

    bool has(const std::string& key) const { return source_.contains(key); }

    json raw(const std::string& key, const std::optional<json>& fallback) {
        used_.insert(key);
        if (!source_.contains(key)) {
            if (!fallback) config_error("missing required key '" + qualified(key) + "'");
            return resolved_[key] = *fallback;
        }
        return resolved_[key] = source_.at(key);
    }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
        const json v = raw(key, fallback ? std::optional<json>(*fallback) : std::nullopt);
        if (!v.is_number()) config_error("key '" + qualified(key) + "' must be a number");
        return v.get<double>();
    }

    double positive(const std::string& key, std::optional<double> fallback = std::nullopt) {
        const double v = number(key, fallback);
        if (!(v > 0.0)) config_error("key '" + qualified(key) + "' must be positive");
        return v;
    }

    std::uint64_t integer(const std::string& key, std::optional<std::uint64_t> fallback = std::nullopt) {
        const json v = raw(key, fallback ? std::optional<json>(*fallback) : std::nullopt);
        if (!v.is_number()) config_error("key '" + qualified(key) + "' must be an integer");
        const double d = v.get<double>();
        if (!(d >= 0.0) || d != std::floor(d) || d > 1.8e19) {
            config_error("key '" + qualified(key) + "' must be a nonnegative integer");
        }
        const auto n = v.is_number_unsigned() ? v.get<std::uint64_t>() : static_cast<std::uint64_t>(d);
        resolved_[key] = n;
        return n;
    }

    std::size_t count(const std::string& key, std::optional<std::uint64_t> fallback = std::nullopt) {
        const auto n = integer(key, fallback);
        if (n == 0) config_error("key '" + qualified(key) + "' must be positive");
        return static_cast<std::size_t>(n);
    }

    bool flag(const std::string& key, bool fallback) {
        const json v = raw(key, fallback);
        if (!v.is_boolean()) config_error("key '" + qualified(key) + "' must be true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
        const json v = raw(key, fallback ? std::optional<json>(*fallback) : std::nullopt);
        if (!v.is_string()) config_error("key '" + qualified(key) + "' must be a string");
        return v.get<std::string>();
    }

    Reader child(const std::string& key, const json& fallback = json::object()) {
        used_.insert(key);
        const json& v = source_.contains(key) ? source_.at(key) : fallback;
        if (!v.is_object()) config_error("key '" + qualified(key) + "' must be an object");
        return Reader(v, qualified(key));
    }

    void set(const std::string& key, json value) {
        used_.insert(key);
        resolved_[key] = std::move(value);
    }

    void finish() const {
        for (const auto& [key, value] : source_.items()) {
            if (!used_.count(key)) config_error("unknown key '" + qualified(key) + "'");
        }
    }

    const json& resolved() const { return resolved_; }
    const std::string& where() const { return where_; }

  private:
    std::string qualified(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

    const json& source_;
    std::string where_;
    json resolved_;
    std::set<std::string> used_;
};

// ---------------------------------------------------------------- resolution

SystemPtr build_system(const json& descriptor) {
    if (!descriptor.is_object() || !descriptor.contains("name") || !descriptor.at("name").is_string()) {
        config_error("system must be an object with a string 'name'");
    }
    json params = descriptor;
    params.erase("name");
    for (const auto& [key, value] : params.items()) {
        if (!value.is_number()) config_error("system parameter '" + key + "' must be numeric");
    }
    return make_system(descriptor.at("name").get<std::string>(), params);
}

SystemPtr resolve_system(Reader& r) {
    const json descriptor = r.raw("system", std::nullopt);
    auto system = build_system(descriptor);
    json resolved = system->params();
    resolved["name"] = std::string(system->name());
    r.set("system", resolved);
    return system;
}

SamplerOptions resolve_sampler(Reader& r, BaseSystem& system) {
    Reader s = r.child("sampler");
    SamplerOptions options;
    options.stride = s.count("stride", 10);
    system.set_burn_in(static_cast<std::size_t>(s.integer("burn_in", 1000)));
    s.finish();
    r.set("sampler", s.resolved());
    return options;
}

json point_json(const BaseSystem& system, const Point& x) {
    return system.dim() == 1 ? json::array({x[0]}) : json::array({x[0], x[1]});
}

Point resolve_center(Reader& r, const std::string& key, const BaseSystem& system, std::uint64_t seed,
                     std::uint64_t salt, const SamplerOptions& sampler) {
    const json v = r.raw(key, std::nullopt);
    Point x{};
    if (v.is_string() && v.get<std::string>() == "random") {
        x = sample_invariant(system, derive_seed(seed, streams::configs, salt), 1, independent_points(sampler))[0];
    } else if (v.is_number()) {
        x = {v.get<double>(), 0.0};
    } else if (v.is_array() && !v.empty() && v.size() <= 2 && std::all_of(v.begin(), v.end(), [](const json& e) {
                   return e.is_number();
               })) {
        x = {v[0].get<double>(), v.size() > 1 ? v[1].get<double>() : 0.0};
    } else {
        config_error("key '" + key + "' must be a coordinate array or \"random\"");
    }
    if (v.is_array() && static_cast<int>(v.size()) != system.dim()) {
        config_error("key '" + key + "' needs " + std::to_string(system.dim()) + " coordinates");
    }
    if (!system.contains(x)) config_error("key '" + key + "' lies outside the domain of the system");
    r.set(key, point_json(system, x));
    return x;
}

double resolve_radius(Reader& r, const std::string& key, const BaseSystem& system, std::optional<double> fallback) {
    const double v = r.positive(key, fallback);
    if (v > system.diameter()) config_error("key '" + key + "' exceeds the domain scale");
    return v;
}

std::vector<double> resolve_grid(Reader& r, const std::string& key, const json& fallback, bool geometric_default) {
    const json v = r.raw(key, fallback);
    std::vector<double> grid;
    if (v.is_array()) {
        for (const auto& e : v) {
            if (!e.is_number()) config_error("grid '" + key + "' must hold numbers");
            grid.push_back(e.get<double>());
        }
    } else if (v.is_object()) {
        Reader g(v, key);
        const double from = g.number("from");
        const double to = g.number("to");
        const std::size_t points = g.count("points");
        const std::string spacing = g.text("spacing", geometric_default ? "geometric" : "linear");
        g.finish();
        if (spacing == "linear") {
            grid = points == 1 ? std::vector<double>{from} : linear_grid(from, to, points);
        } else if (spacing == "geometric") {
            if (!(from > 0.0 && to > 0.0)) config_error("geometric grid '" + key + "' needs positive ends");
            grid = points == 1 ? std::vector<double>{from} : geometric_grid(from, to, points);
        } else {
            config_error("grid '" + key + "' spacing must be linear or geometric");
        }
        r.set(key, g.resolved());
    } else {
        config_error("grid '" + key + "' must be an array or {from, to, points}");
    }
    if (grid.empty()) config_error("grid '" + key + "' is empty");
    return grid;
}

void require_sorted(const std::vector<double>& grid, const std::string& key, bool positive) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (positive && !(grid[i] > 0.0)) config_error("grid '" + key + "' must be positive");
        if (i > 0 && !(grid[i] > grid[i - 1])) config_error("grid '" + key + "' must be strictly increasing");
    }
}

struct FlowSetup {
    RoofFunction roof;
    SuspensionOptions options;
};

FlowSetup resolve_roof(Reader& r, const SamplerOptions& sampler) {
    const json descriptor = r.raw("roof", json{{"name", "constant"}, {"c", 1.0}});
    FlowSetup setup{RoofFunction::from_json(descriptor), {}};
    r.set("roof", setup.roof.to_json());
    setup.options.mean_roof_samples = r.count("mean_roof_samples", 1'000'000);
    setup.options.sampler = sampler;
    return setup;
}

double resolve_height(Reader& r, const RoofFunction& roof, const Point& center) {
    const double fallback = 0.5 * roof(center);
    const double s = r.number("height", fallback);
    if (!(s > 0.0)) config_error("key 'height' must be positive");
    return s;
}

ProfileOptions resolve_profile(Reader& r, const SamplerOptions& sampler, double& r_max, double r_max_default) {
    Reader p = r.child("profile");
    ProfileOptions options;
    options.samples = p.count("samples", 20'000'000);
    options.pilot_samples = p.count("pilot_samples", 1'000'000);
    options.min_count = p.count("min_count", 2000);
    options.points = p.count("points", 200);
    r_max = p.positive("r_max", r_max_default);
    options.sampler = sampler;
    p.finish();
    r.set("profile", p.resolved());
    return options;
}

struct ObservableSetup {
    int kind = 1;
    double beta = 1.0;
    double gamma = 1.0;
    double d_max = 0.0;
    ObservableForm form = ObservableForm::map;
};

ObservableSetup resolve_observable(Reader& r, bool flow) {
    ObservableSetup o;
    const auto kind = r.integer("kind", 1);
    if (kind < 1 || kind > 3) config_error("key 'kind' must be 1, 2 or 3");
    o.kind = static_cast<int>(kind);
    if (o.kind == 2) o.beta = r.positive("beta", 2.0);
    if (o.kind == 3) {
        o.gamma = r.positive("gamma", 2.0);
        o.d_max = r.number("d_max", 5.0);
    }
    const std::string form = r.text("form", flow ? "flow" : "map");
    if (form == "flow") {
        if (!flow) config_error("flow-form observables need a suspension");
        o.form = ObservableForm::flow;
    } else if (form != "map") {
        config_error("key 'form' must be flow or map");
    }
    return o;
}

json default_y_grid(int kind) {
    if (kind == 2) return {{"from", 0.45}, {"to", 8.0}, {"points", 21}};
    if (kind == 3) return {{"from", -2.1}, {"to", 0.0}, {"points", 21}};
    return {{"from", -1.5}, {"to", 4.5}, {"points", 21}};
}

// ---------------------------------------------------------------- results

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

struct Outcome {
    Table data;
    /// Rows of (x, empirical, predicted, ci).
    std::vector<std::array<double, 4>> plot;
    std::string statistic_name = "ks";
    double statistic = kNaN;
    double ci = kNaN;
    std::optional<double> tolerance;
    std::optional<bool> pass;
    json extra = json::object();
};

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double max_of(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, x);
    return m;
}

// ---------------------------------------------------------------- experiments
//
// Each experiment resolves its keys (with defaults) from a Reader and returns
// a runner that only reads the resolved values.

using Runner = std::function<Outcome()>;

struct Context {
    std::uint64_t seed = 0;
    SystemPtr system;
    SamplerOptions sampler;
};

Runner hit_survival(Reader& r, Context& c) {
    const bool flow = r.flag("flow", true);
    std::optional<FlowSetup> setup;
    if (flow) setup = resolve_roof(r, c.sampler);
    const Point center = resolve_center(r, "center", *c.system, c.seed, 1, c.sampler);
    const double height = flow ? resolve_height(r, setup->roof, center) : 0.0;
    const double radius = resolve_radius(r, "radius", *c.system, 0.02);
    auto t_grid = resolve_grid(r, "t_grid", {{"from", 0.0}, {"to", 5.0}, {"points", 51}}, false);
    require_sorted(t_grid, "t_grid", false);
    SurvivalOptions options;
    options.n_trajectories = r.count("n_trajectories", 50'000);
    options.measure_samples = r.count("measure_samples", 1'000'000);
    options.horizon = r.positive("horizon", 50.0);
    options.sampler = c.sampler;
    const ReferenceLaw reference = ReferenceLaw::from_json(r.raw("reference", json{{"law", "exponential"}}));
    const double tolerance = r.positive("tolerance", 0.02);

    return [=]() {
        SurvivalResult s;
        if (flow) {
            const auto susp = build_suspension(c.system, setup->roof, c.seed, setup->options);
            s = normalized_survival(susp, FlowBall{{center, height}, radius}, t_grid, c.seed, options);
        } else {
            s = normalized_survival(*c.system, BaseBall{center, radius}, t_grid, c.seed, options);
        }
        Outcome out;
        out.data.header = {"t", "survival", "ci", "predicted"};
        for (std::size_t i = 0; i < t_grid.size(); ++i) {
            const double predicted = 1.0 - reference.cdf(t_grid[i]);
            out.data.rows.push_back({t_grid[i], s.survival[i], s.ci[i], predicted});
            out.plot.push_back({t_grid[i], s.survival[i], predicted, s.ci[i]});
        }
        out.statistic = ks_distance(s.law.samples, reference);
        out.ci = max_of(s.ci);
        out.tolerance = tolerance;
        out.pass = out.statistic <= tolerance;
        out.extra = {{"normalization", s.law.normalization.value},
                     {"normalization_ci", s.law.normalization.ci},
                     {"ball_measure", s.ball_measure.value},
                     {"censored", s.law.samples.censored_count()}};
        return out;
    };
}

Runner poisson(Reader& r, Context& c) {
    const FlowSetup setup = resolve_roof(r, c.sampler);
    const Point center = resolve_center(r, "center", *c.system, c.seed, 1, c.sampler);
    const double height = resolve_height(r, setup.roof, center);
    const double radius = resolve_radius(r, "radius", *c.system, 0.02);
    const double t_norm = r.positive("t_normalized", 1.0);
    const std::size_t m_max = r.count("m_max", 3);
    SurvivalOptions options;
    options.n_trajectories = r.count("n_trajectories", 50'000);
    options.measure_samples = r.count("measure_samples", 1'000'000);
    options.sampler = c.sampler;
    const double tolerance = r.positive("tolerance", 0.02);

    return [=]() {
        const auto susp = build_suspension(c.system, setup.roof, c.seed, setup.options);
        const auto p = poisson_counts(susp, FlowBall{{center, height}, radius}, t_norm, m_max, c.seed, options);
        Outcome out;
        out.data.header = {"m", "frequency", "ci", "predicted"};
        out.statistic_name = "max_abs_deviation";
        out.statistic = 0.0;
        out.ci = 0.0;
        for (std::size_t m = 0; m < p.frequency.size(); ++m) {
            const auto x = static_cast<double>(m);
            out.data.rows.push_back({x, p.frequency[m], p.ci[m], p.predicted[m]});
            out.plot.push_back({x, p.frequency[m], p.predicted[m], p.ci[m]});
            // The last row pools m >= m_max; the comparison covers the exact counts.
            if (m < m_max) {
                out.statistic = std::max(out.statistic, std::fabs(p.frequency[m] - p.predicted[m]));
                out.ci = std::max(out.ci, p.ci[m]);
            }
        }
        out.tolerance = tolerance;
        out.pass = out.statistic <= tolerance;
        out.extra = {{"normalization", p.normalization.value}, {"normalization_ci", p.normalization.ci}};
        return out;
    };
}

Runner kac(Reader& r, Context& c) {
    const Point center = resolve_center(r, "center", *c.system, c.seed, 1, c.sampler);
    const double radius = resolve_radius(r, "radius", *c.system, 0.1);
    KacOptions options;
    options.n_starts = r.count("n_starts", 100'000);
    options.measure_samples = r.count("measure_samples", 1'000'000);
    options.n_max = r.count("n_max", 100'000'000);
    options.sampler = c.sampler;
    const double tolerance = r.positive("tolerance", 0.02);

    return [=]() {
        const auto k = kac_check(*c.system, BaseBall{center, radius}, c.seed, options);
        Outcome out;
        out.data.header = {"radius", "product", "ci", "mean_return", "mean_return_ci",
                           "measure", "measure_ci", "censored"};
        out.data.rows.push_back({radius, k.product.value, k.product.ci, k.mean_return.value, k.mean_return.ci,
                                 k.measure.value, k.measure.ci, static_cast<double>(k.censored)});
        out.plot.push_back({radius, k.product.value, 1.0, k.product.ci});
        out.statistic_name = "abs_deviation";
        out.statistic = std::fabs(k.product.value - 1.0);
        out.ci = k.product.ci;
        out.tolerance = tolerance;
        out.pass = out.statistic <= tolerance;
        return out;
    };
}

Runner evl(Reader& r, Context& c) {
    const bool flow = r.flag("flow", true);
    std::optional<FlowSetup> setup;
    if (flow) setup = resolve_roof(r, c.sampler);
    const Point center = resolve_center(r, "center", *c.system, c.seed, 1, c.sampler);
    const double height = flow ? resolve_height(r, setup->roof, center) : 0.0;
    const ObservableSetup obs = resolve_observable(r, flow);
    const double t = r.positive("t", 1e4);
    auto y_grid = resolve_grid(r, "y_grid", default_y_grid(obs.kind), false);
    require_sorted(y_grid, "y_grid", false);
    EvlOptions options;
    options.n_samples = r.count("n_samples", 50'000);
    options.sampler = c.sampler;
    double r_max = 0.0;
    const ProfileOptions profile = resolve_profile(r, c.sampler, r_max, c.system->diameter());
    const std::string statistic = r.text("statistic", flow ? "grid_sup" : "ks");
    if (statistic != "grid_sup" && statistic != "ks") config_error("key 'statistic' must be grid_sup or ks");
    const double tolerance = r.positive("tolerance", flow ? 0.03 : 0.05);

    return [=]() {
        ObservableSpec spec{obs.kind, obs.beta, obs.gamma, obs.d_max, obs.form, {}};
        EvlResult e;
        if (flow) {
            const auto susp = build_suspension(c.system, setup->roof, c.seed, setup->options);
            spec.profile = build_profile(susp, FlowPoint{center, height}, r_max, c.seed, profile);
            e = evl_empirical(Observable(spec), susp, t, y_grid, c.seed, options);
        } else {
            spec.profile = build_profile(*c.system, center, r_max, c.seed, profile);
            e = evl_empirical(Observable(spec), *c.system, t, y_grid, c.seed, options);
        }
        Outcome out;
        out.data.header = {"y", "level", "empirical", "predicted", "ci"};
        for (std::size_t i = 0; i < e.y_grid.size(); ++i) {
            out.data.rows.push_back({e.y_grid[i], e.levels[i], e.empirical[i], e.predicted[i], e.ci[i]});
            out.plot.push_back({e.y_grid[i], e.empirical[i], e.predicted[i], e.ci[i]});
        }
        out.statistic_name = statistic;
        out.statistic = statistic == "ks" ? e.ks : e.grid_sup;
        out.ci = max_of(e.ci);
        out.tolerance = tolerance;
        out.pass = out.statistic <= tolerance;
        out.extra = {{"ks", e.ks},
                     {"grid_sup", e.grid_sup},
                     {"profile_min_radius", spec.profile.radii().front()},
                     {"profile_continuous", profile_continuous(spec.profile)}};
        return out;
    };
}

Runner duality(Reader& r, Context& c) {
    const FlowSetup setup = resolve_roof(r, c.sampler);
    const Point center = resolve_center(r, "center", *c.system, c.seed, 1, c.sampler);
    const double height = resolve_height(r, setup.roof, center);
    const ObservableSetup obs = resolve_observable(r, true);
    const double t = r.positive("t", 1e3);
    auto y_values = resolve_grid(r, "y", json::array({-1.0, 0.0, 1.0, 2.0}), false);
    EvlOptions options;
    options.n_samples = r.count("n_samples", 4000);
    options.sampler = c.sampler;
    double r_max = 0.0;
    const ProfileOptions profile = resolve_profile(r, c.sampler, r_max, c.system->diameter());
    const double tolerance = r.positive("tolerance", 3.0);

    return [=]() {
        const auto susp = build_suspension(c.system, setup.roof, c.seed, setup.options);
        ObservableSpec spec{obs.kind, obs.beta, obs.gamma, obs.d_max, obs.form, {}};
        spec.profile = build_profile(susp, FlowPoint{center, height}, r_max, c.seed, profile);
        const Observable observable(spec);
        Outcome out;
        out.data.header = {"y", "level", "rho", "p_max", "ci_max", "p_hit", "ci_hit"};
        out.statistic_name = "max_abs_difference";
        out.statistic = 0.0;
        out.ci = 0.0;
        bool pass = true;
        for (double y : y_values) {
            const auto d = evl_hitting_duality(observable, susp, t, y, c.seed, options);
            const double combined = std::hypot(d.p_max.ci, d.p_hit.ci);
            const double diff = std::fabs(d.p_max.value - d.p_hit.value);
            out.data.rows.push_back({y, d.level, d.rho, d.p_max.value, d.p_max.ci, d.p_hit.value, d.p_hit.ci});
            out.plot.push_back({y, d.p_max.value, d.p_hit.value, combined});
            out.statistic = std::max(out.statistic, diff);
            out.ci = std::max(out.ci, combined);
            pass = pass && diff <= tolerance * combined;
        }
        // The tolerance counts combined CI half-widths.
        out.tolerance = tolerance;
        out.pass = pass;
        return out;
    };
}

LipschitzObservable make_phi(const std::string& name) {
    // Every built-in domain has first coordinates in [-1, 1].
    if (name == "identity") return {[](const Point& x) { return x[0]; }, 1.0, 1.0};
    if (name == "sine") {
        constexpr double two_pi = 2.0 * std::numbers::pi;
        return {[](const Point& x) { return std::sin(two_pi * x[0]); }, two_pi, 1.0};
    }
    config_error("key 'phi' must be identity or sine");
}

// Cov(x, 1_[a,b] o T^j) for the doubling map with Lebesgue measure.
double doubling_identity_covariance(double a, double b, std::size_t j) {
    return 0.5 * (b - a) * (a + b - 1.0) / std::ldexp(1.0, static_cast<int>(j));
}

Runner correlation_experiment(Reader& r, Context& c) {
    const std::string phi_name = r.text("phi", "identity");
    const LipschitzObservable phi = make_phi(phi_name);
    const Point psi_center = resolve_center(r, "psi_center", *c.system, c.seed, 2, c.sampler);
    const double psi_radius = resolve_radius(r, "psi_radius", *c.system, 0.25);
    const std::size_t j_max = static_cast<std::size_t>(r.integer("j_max", 6));
    const std::size_t samples = r.count("samples", 1'000'000);
    const double tolerance = r.positive("tolerance", 0.05);
    const bool exact = c.system->name() == "doubling" && phi_name == "identity" &&
                       psi_center[0] - psi_radius >= 0.0 && psi_center[0] + psi_radius <= 1.0;

    return [=]() {
        const auto base = sample_invariant(*c.system, derive_seed(c.seed, streams::measure), samples, c.sampler);
        Outcome out;
        out.data.header = {"j", "estimate", "ci", "predicted"};
        out.statistic_name = "max_relative_error";
        out.statistic = exact ? 0.0 : kNaN;
        out.ci = 0.0;
        for (std::size_t j = 0; j <= j_max; ++j) {
            const auto e = correlation(*c.system, phi, BaseBall{psi_center, psi_radius}, j, base);
            const double predicted =
                exact ? doubling_identity_covariance(psi_center[0] - psi_radius, psi_center[0] + psi_radius, j)
                      : kNaN;
            const auto x = static_cast<double>(j);
            out.data.rows.push_back({x, e.value, e.ci, predicted});
            out.plot.push_back({x, e.value, predicted, e.ci});
            out.ci = std::max(out.ci, e.ci);
            if (exact) out.statistic = std::max(out.statistic, std::fabs(e.value / predicted - 1.0));
        }
        out.tolerance = tolerance;
        if (exact) out.pass = out.statistic <= tolerance;
        out.extra = {{"empirical_lipschitz", empirical_lipschitz(phi, *c.system, base)}};
        return out;
    };
}

Runner short_returns(Reader& r, Context& c) {
    auto radii = resolve_grid(r, "radii", json::array({1e-2, 1e-3, 1e-4}), true);
    for (double x : radii) {
        if (!(x > 0.0) || x > c.system->diameter()) config_error("radii must lie in (0, domain scale]");
    }
    std::sort(radii.begin(), radii.end(), std::greater<>());
    if (std::adjacent_find(radii.begin(), radii.end()) != radii.end()) config_error("radii must be distinct");
    const double reference_radius = r.positive("reference_radius", radii.front());
    if (std::find(radii.begin(), radii.end(), reference_radius) == radii.end()) {
        config_error("key 'reference_radius' must be one of the radii");
    }
    const std::size_t j = r.count("j", 1);
    const std::size_t j_max = r.count("j_max", 5);
    const std::size_t samples = r.count("samples", 100'000);
    const double tolerance = r.positive("tolerance", 0.1);
    const bool exact = c.system->name() == "doubling";

    return [=]() {
        const auto base = sample_invariant(*c.system, derive_seed(c.seed, streams::measure), samples, c.sampler);
        Outcome out;
        out.data.header = {"r", "n_measure", "n_ci", "v_measure", "v_ci", "predicted", "singular_skipped"};
        out.statistic_name = "max_relative_error";
        out.statistic = 0.0;
        out.ci = 0.0;
        bool any_exact = false;
        bool decreasing = true;
        double previous_v = std::numeric_limits<double>::infinity();
        for (double rad : radii) {
            const auto n = short_return_measure(*c.system, rad, j, base);
            const auto v = vr_measure(*c.system, rad, j_max, base);
            // Doubling: (2^j - 1) x must lie within (2^j + 1) r of an integer.
            const double reach = (std::ldexp(1.0, static_cast<int>(j)) + 1.0) * rad;
            const double predicted = exact && reach < 0.5 ? 2.0 * reach : kNaN;
            out.data.rows.push_back({rad, n.measure.value, n.measure.ci, v.measure.value, v.measure.ci, predicted,
                                     static_cast<double>(n.singular_skipped + v.singular_skipped)});
            out.plot.push_back({rad, n.measure.value, predicted, n.measure.ci});
            out.ci = std::max(out.ci, n.measure.ci);
            if (!std::isnan(predicted) && rad == reference_radius) {
                any_exact = true;
                out.statistic = std::max(out.statistic, std::fabs(n.measure.value / predicted - 1.0));
            }
            decreasing = decreasing && v.measure.value < previous_v;
            previous_v = v.measure.value;
        }
        if (!any_exact) out.statistic = kNaN;
        out.tolerance = tolerance;
        out.pass = (!any_exact || out.statistic <= tolerance) && decreasing;
        out.extra = {{"v_decreasing", decreasing}};
        return out;
    };
}

Runner tower(Reader& r, Context& c) {
    if (c.system->name() != "lsv") config_error("tower-tail needs the lsv system");
    const double alpha = c.system->params().at("alpha").get<double>();
    auto n_grid = resolve_grid(r, "n_grid", {{"from", 30.0}, {"to", 300.0}, {"points", 12}}, true);
    require_sorted(n_grid, "n_grid", false);
    if (n_grid.front() < 0.0) config_error("grid 'n_grid' must be nonnegative");
    TowerTailOptions options;
    options.n_returns = r.count("n_returns", 10'000'000);
    options.block_returns = r.count("block_returns", 100'000);
    options.fit_min_n = r.number("fit_min_n", 10.0);
    options.min_count = r.count("min_count", 50);
    options.horizon = r.count("horizon", 100'000'000);
    const double tolerance = r.positive("tolerance", 0.2);

    return [=]() {
        const auto tt = tower_tail(*c.system, n_grid, c.seed, options);
        const double expected = -1.0 / alpha;
        // Reference line through the first fitted point.
        std::size_t anchor = 0;
        while (anchor < n_grid.size() && !(n_grid[anchor] >= options.fit_min_n && tt.tail[anchor] > 0.0)) ++anchor;
        Outcome out;
        out.data.header = {"n", "tail", "ci", "predicted"};
        for (std::size_t i = 0; i < n_grid.size(); ++i) {
            const double predicted = anchor < n_grid.size() && n_grid[i] > 0.0
                                         ? tt.tail[anchor] * std::pow(n_grid[i] / n_grid[anchor], expected)
                                         : kNaN;
            out.data.rows.push_back({n_grid[i], tt.tail[i], tt.ci[i], predicted});
            out.plot.push_back({n_grid[i], tt.tail[i], predicted, tt.ci[i]});
        }
        out.statistic_name = "exponent_error";
        out.statistic = std::fabs(tt.exponent - expected);
        out.ci = max_of(tt.ci);
        out.tolerance = tolerance;
        out.pass = tt.fitted_points >= 2 && out.statistic <= tolerance;
        out.extra = {{"exponent", tt.exponent},
                     {"expected_exponent", expected},
                     {"fitted_points", tt.fitted_points},
                     {"returns", tt.returns},
                     {"censored", tt.censored}};
        return out;
    };
}

Runner assumptions(Reader& r, Context& c) {
    const std::string check = r.text("check", "annulus");
    const Point center = resolve_center(r, "center", *c.system, c.seed, 1, c.sampler);
    const std::size_t samples = r.count("samples", 1'000'000);
    const bool lebesgue = c.system->name() == "doubling";

    if (check == "annulus") {
        auto radii = resolve_grid(r, "radii", json::array({1e-2, 1e-3, 1e-4}), true);
        const double delta = r.number("delta", 1.5);
        if (!(delta > 1.0)) config_error("key 'delta' must exceed 1");
        const double tolerance = r.positive("tolerance", 3.0);
        return [=]() {
            const auto base =
                sample_invariant(*c.system, derive_seed(c.seed, streams::measure), samples, c.sampler);
            Outcome out;
            out.data.header = {"r", "ratio", "ci", "predicted"};
            out.statistic_name = "max_ci_multiple";
            out.statistic = lebesgue ? 0.0 : kNaN;
            out.ci = 0.0;
            for (double rad : radii) {
                const auto a = annulus_ratio(*c.system, center, rad, delta, base);
                const double predicted = lebesgue ? std::pow(rad, delta - 1.0) : kNaN;
                out.data.rows.push_back({rad, a.ratio, a.ci, predicted});
                out.plot.push_back({rad, a.ratio, predicted, a.ci});
                out.ci = std::max(out.ci, a.ci);
                if (lebesgue) {
                    const double gap = std::fabs(a.ratio - predicted);
                    out.statistic = std::max(out.statistic, a.ci > 0.0 ? gap / a.ci : (gap > 0.0 ? kNaN : 0.0));
                }
            }
            // Tolerance counts CI half-widths.
            out.tolerance = tolerance;
            if (lebesgue) out.pass = out.statistic <= tolerance;
            return out;
        };
    }
    if (check == "dimension") {
        auto radii = resolve_grid(r, "radii", {{"from", 1e-3}, {"to", 1e-1}, {"points", 10}}, true);
        require_sorted(radii, "radii", true);
        const std::optional<double> expected =
            r.has("expected_dimension") || c.system->dim() == 1
                ? std::optional<double>(r.positive("expected_dimension", 1.0))
                : std::nullopt;
        const double tolerance = r.positive("tolerance", 0.05);
        return [=]() {
            const auto base =
                sample_invariant(*c.system, derive_seed(c.seed, streams::measure), samples, c.sampler);
            const auto dim = local_dimension(*c.system, center, radii, base);
            Outcome out;
            out.data.header = {"r", "measure", "ci", "predicted"};
            const auto anchor = ball_measure(*c.system, center, radii.back(), base);
            for (double rad : radii) {
                const auto m = ball_measure(*c.system, center, rad, base);
                const double predicted = expected ? anchor.value * std::pow(rad / radii.back(), *expected) : kNaN;
                out.data.rows.push_back({rad, m.value, m.ci, predicted});
                out.plot.push_back({rad, m.value, predicted, m.ci});
            }
            out.statistic_name = "slope_error";
            out.statistic = expected ? std::fabs(dim.slope - *expected) : kNaN;
            out.ci = 0.0;
            out.tolerance = tolerance;
            if (expected) out.pass = dim.valid && out.statistic <= tolerance;
            out.extra = {{"slope", dim.slope}, {"d_lower", dim.d_lower}, {"d_upper", dim.d_upper},
                         {"valid", dim.valid}};
            return out;
        };
    }
    if (check == "lorenz-ratio") {
        auto radii = resolve_grid(r, "radii", {{"from", 0.02}, {"to", 0.08}, {"points", 6}}, true);
        require_sorted(radii, "radii", true);
        const double delta = r.number("delta", 1.5);
        if (!(delta > 1.0)) config_error("key 'delta' must exceed 1");
        const double tolerance = r.positive("tolerance", 5.0);
        return [=]() {
            const auto base =
                sample_invariant(*c.system, derive_seed(c.seed, streams::measure), samples, c.sampler);
            Outcome out;
            out.data.header = {"r", "epsilon", "annulus_measure", "ratio", "ci"};
            std::vector<double> ratios;
            double widest = 0.0;
            for (double rad : radii) {
                const double eps = std::pow(rad, delta);
                std::size_t inside = 0;
                for (const auto& x : base) {
                    // Euclidean annulus: the chord bound behind the ratio is a round-ball estimate.
                    const double d = std::hypot(x[0] - center[0], x[1] - center[1]);
                    inside += d > rad && d <= rad + eps;
                }
                const auto m = proportion(inside, base.size());
                const double scale = std::sqrt(rad * eps);
                ratios.push_back(m.value / scale);
                out.data.rows.push_back({rad, eps, m.value, m.value / scale, m.ci / scale});
                out.plot.push_back({rad, m.value / scale, kNaN, m.ci / scale});
                widest = std::max(widest, m.ci / scale);
            }
            // A non-increasing trend as r shrinks is a nonnegative log-log slope in r.
            std::vector<double> log_r, log_ratio;
            for (std::size_t i = 0; i < radii.size(); ++i) {
                if (ratios[i] <= 0.0) continue;
                log_r.push_back(std::log(radii[i]));
                log_ratio.push_back(std::log(ratios[i]));
            }
            const double slope = log_r.size() >= 2 ? fit_line(log_r, log_ratio).slope : kNaN;
            const double lo = *std::min_element(ratios.begin(), ratios.end());
            const double hi = *std::max_element(ratios.begin(), ratios.end());
            out.statistic_name = "max_over_min";
            out.statistic = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
            out.ci = widest;
            out.tolerance = tolerance;
            const bool trend = slope >= 0.0;
            out.pass = out.statistic <= tolerance && trend;
            out.extra = {{"trend_slope", number_or_null(slope)}, {"trend_ok", trend}};
            return out;
        };
    }
    config_error("key 'check' must be annulus, dimension or lorenz-ratio");
}

using Resolver = Runner (*)(Reader&, Context&);

Resolver resolver_for(const std::string& experiment) {
    if (experiment == "hit-survival") return hit_survival;
    if (experiment == "poisson") return poisson;
    if (experiment == "kac") return kac;
    if (experiment == "evl") return evl;
    if (experiment == "duality") return duality;
    if (experiment == "correlation") return correlation_experiment;
    if (experiment == "short-returns") return short_returns;
    if (experiment == "tower-tail") return tower;
    if (experiment == "assumptions") return assumptions;
    config_error("unknown experiment '" + experiment + "'");
}

struct Prepared {
    ExperimentConfig config;
    Context context;
    Runner runner;
};

Prepared prepare(const json& source) {
    Prepared p;
    auto& cfg = p.config;
    Reader r(source, "");
    cfg.experiment = r.text("experiment");
    const Resolver resolver = resolver_for(cfg.experiment);
    cfg.seed = r.integer("seed");
    cfg.name = r.text("name", cfg.experiment);
    if (cfg.name.empty() || cfg.name.find('/') != std::string::npos) {
        config_error("key 'name' must be a plain file stem");
    }
    const auto workers = r.count("workers", 1);
    cfg.workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, 1024));
    cfg.output_dir = r.text("output_dir", ".");
    p.context.seed = cfg.seed;
    p.context.system = resolve_system(r);
    // The system was created just above and is not shared yet.
    p.context.sampler = resolve_sampler(r, *std::const_pointer_cast<BaseSystem>(p.context.system));
    p.runner = resolver(r, p.context);
    r.finish();
    cfg.resolved = r.resolved();
    return p;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"hit-survival", "poisson",       "kac",
                                                   "evl",          "duality",       "correlation",
                                                   "short-returns", "tower-tail",   "assumptions"};
    return names;
}

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.17g", x);
    return buffer;
}

ExperimentConfig parse_config(const json& config) { return prepare(config).config; }

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) config_error("cannot open config file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        config_error("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

RunReport run_experiment(const ExperimentConfig& config, const std::optional<std::filesystem::path>& out_dir) {
    Prepared p = prepare(config.resolved);
    set_workers(config.workers);

    const std::filesystem::path dir = out_dir ? *out_dir : std::filesystem::path(config.output_dir);
    RunReport report;
    report.data = dir / (config.name + ".data.csv");
    report.summary = dir / (config.name + ".summary.json");
    report.plot = dir / (config.name + ".plot.csv");

    const Outcome outcome = p.runner();

    try {
        std::filesystem::create_directories(dir);
        write_csv(report.data, outcome.data.header, outcome.data.rows);
        std::vector<std::vector<double>> plot_rows;
        for (const auto& row : outcome.plot) plot_rows.push_back({row[0], row[1], row[2], row[3]});
        write_csv(report.plot, {"x", "empirical", "predicted", "ci"}, plot_rows);

        json summary = {{"experiment", config.experiment},
                        {"name", config.name},
                        {"config", config.resolved},
                        {"statistic", outcome.statistic_name},
                        {"ks", number_or_null(outcome.statistic)},
                        {"ci", number_or_null(outcome.ci)},
                        {"tolerance", outcome.tolerance ? json(*outcome.tolerance) : json(nullptr)},
                        {"pass", outcome.pass ? json(*outcome.pass) : json(nullptr)},
                        {"results", outcome.extra}};
        std::ofstream out(report.summary, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + report.summary.string());
        out << summary.dump(2) << '\n';
        if (!out) throw std::runtime_error("cannot write " + report.summary.string());
    } catch (...) {
        std::error_code ignored;
        for (const auto& path : {report.data, report.summary, report.plot}) std::filesystem::remove(path, ignored);
        throw;
    }
    report.pass = outcome.pass;
    report.statistic = outcome.statistic;
    return report;
}

}  // namespace reclab
