// Runs every acceptance criterion at its stated tolerance and prints one
// PASS/FAIL line per criterion. Exit status is nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "reclab/error.hpp"
#include "reclab/experiment.hpp"
#include "reclab/extremes.hpp"
#include "reclab/hitting.hpp"
#include "reclab/random.hpp"

using namespace reclab;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kConfigs = RECLAB_CONFIG_DIR;

struct Verdict {
    bool pass = false;
    std::string detail;
};

fs::path work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "reclab_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

json read_config(const std::string& name) {
    std::ifstream in(kConfigs / (name + ".json"));
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + name);
    return json::parse(in);
}

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

// Runs a shipped config and reports its statistic against its tolerance.
Verdict run_config(const json& config, RunReport* report_out = nullptr) {
    const auto report = run_experiment(parse_config(config), work_dir());
    if (report_out) *report_out = report;
    const auto summary = json::parse(std::ifstream(report.summary));
    Verdict v;
    v.pass = report.pass.value_or(false);
    v.detail = config.at("name").get<std::string>() + " " + summary.value("statistic_name", std::string("statistic")) +
               "=" + num(report.statistic) + " tol=" + num(summary.at("tolerance").get<double>());
    return v;
}

Verdict run_named(const std::string& name) { return run_config(read_config(name)); }

Verdict all_of(const std::vector<Verdict>& parts) {
    Verdict v{true, ""};
    for (const auto& p : parts) {
        v.pass = v.pass && p.pass;
        v.detail += (v.detail.empty() ? "" : "; ") + p.detail + (p.pass ? "" : " [fail]");
    }
    return v;
}

// A mu-random center whose ball holds no periodic point of period <= 3;
// periodic points of the doubling map of period n are k / (2^n - 1). Longer
// periods would cover the whole circle at r = 0.02 (spacing 1/31 < 2r).
double generic_doubling_center(std::uint64_t seed, double r) {
    auto doubling = make_system("doubling");
    for (std::uint64_t attempt = 0;; ++attempt) {
        const double z = sample_invariant(*doubling, derive_seed(seed, streams::configs, attempt), 1,
                                          independent_points({}))[0][0];
        bool periodic = false;
        for (int n = 1; n <= 3 && !periodic; ++n) {
            const double q = std::ldexp(1.0, n) - 1.0;
            for (double k = 0; k < q && !periodic; ++k) periodic = doubling->distance({z, 0.0}, {k / q, 0.0}) <= r;
        }
        if (!periodic) return z;
    }
}

json with_generic_center(json config) {
    config["center"] = {generic_doubling_center(config.at("seed").get<std::uint64_t>(), config.at("radius").get<double>())};
    return config;
}

Verdict ac1() {
    const auto start = std::chrono::steady_clock::now();
    const json config = with_generic_center(read_config("hit_survival_doubling"));
    Verdict v = run_config(config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    v.detail += " center=" + format_number(config.at("center")[0].get<double>()) + " runtime=" + num(seconds) + "s";
    v.pass = v.pass && seconds <= 300.0;
    return v;
}

Verdict ac2() {
    const json config = with_generic_center(read_config("poisson_doubling"));
    RunReport report;
    Verdict v = run_config(config, &report);
    std::ifstream data(report.data);
    std::string line;
    std::getline(data, line);
    v.detail += " center=" + format_number(config.at("center")[0].get<double>()) + " rows(m,freq,ci,pred):";
    while (std::getline(data, line)) v.detail += " [" + line + "]";
    return v;
}

Verdict ac3() { return all_of({run_named("kac_doubling"), run_named("kac_lsv")}); }

Verdict ac4() {
    const auto flow = build_suspension(make_system("doubling"), RoofFunction::affine(1.0, 1.0), 404);
    Rng rng(405);
    double worst = 0.0;
    std::size_t cases = 0;
    for (; cases < 1000; ++cases) {
        const double rho = rng.uniform(0.005, 0.1);
        const FlowBall ball{{{rng.uniform(), 0.0}, rng.uniform(0.2, 0.8)}, rho};
        const Point x{rng.uniform(), 0.0};
        const FlowPoint p{x, rng.uniform() * flow.roof_at(x)};
        const std::size_t m = 1 + rng.next() % 3;
        const std::uint64_t orbit_seed = rng.next();
        const auto rec = hitting_times(flow, p, ball, m, 1e12, orbit_seed);
        const double residual = flow_base_consistency(flow, p, ball, m, orbit_seed);
        worst = std::max(worst, residual / rec.hits.back());
    }
    return {worst <= 1e-6, std::to_string(cases) + " cases, max residual/tau=" + num(worst) + " tol=1e-06"};
}

Verdict ac5() {
    return all_of({run_named("evl_gumbel_flow"), run_named("evl_frechet_flow"), run_named("evl_weibull_flow")});
}

Verdict ac6() {
    auto system = make_system("doubling");
    const auto flow = build_suspension(system, RoofFunction::affine(1.0, 1.0), 606);
    Rng rng(607);
    ProfileOptions profile_options;
    profile_options.samples = 2'000'000;
    profile_options.pilot_samples = 200'000;
    profile_options.min_count = 200;
    EvlOptions options;
    options.n_samples = 4000;
    std::size_t agree = 0;
    double worst = 0.0;
    double p_lo = 1.0, p_hi = 0.0;
    for (int i = 0; i < 20; ++i) {
        ObservableSpec spec;
        spec.kind = 1 + static_cast<int>(rng.next() % 3);
        spec.beta = rng.uniform(0.5, 3.0);
        spec.gamma = rng.uniform(0.5, 3.0);
        spec.d_max = 5.0;
        spec.form = ObservableForm::flow;
        const double z = rng.uniform();
        spec.profile = build_profile(flow, {{z, 0.0}, 0.5}, 0.45, rng.next(), profile_options);
        const Observable obs(spec);
        const double t = std::exp(rng.uniform(std::log(100.0), std::log(5000.0)));
        const double y = spec.kind == 1 ? rng.uniform(-1.0, 3.0)
                                        : (spec.kind == 2 ? rng.uniform(0.5, 4.0) : rng.uniform(-2.0, -0.3));
        const auto d = evl_hitting_duality(obs, flow, t, y, rng.next(), options);
        const double combined = std::hypot(d.p_max.ci, d.p_hit.ci);
        const double diff = std::fabs(d.p_max.value - d.p_hit.value);
        agree += diff <= 3 * combined;
        p_lo = std::min(p_lo, d.p_hit.value);
        p_hi = std::max(p_hi, d.p_hit.value);
        worst = std::max(worst, combined > 0 ? diff / combined : (diff > 0 ? INFINITY : 0.0));
    }
    return {agree == 20, std::to_string(agree) + "/20 within 3 combined CI, max ratio=" + num(worst) +
                                  ", P(tau>t) in [" + num(p_lo) + ", " + num(p_hi) + "]"};
}

Verdict ac7() { return run_named("evl_lsv_map"); }

Verdict ac8() { return run_named("correlation_doubling"); }

Verdict ac9() { return run_named("short_returns_doubling"); }

Verdict ac10() {
    return all_of({run_named("annulus_doubling"), run_named("dimension_doubling"), run_named("lorenz_ratio")});
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

Verdict ac11() {
    std::vector<json> configs;
    auto kac = read_config("kac_doubling");
    kac["n_starts"] = 10000;
    configs.push_back(kac);
    auto survival = with_generic_center(read_config("hit_survival_doubling"));
    survival["n_trajectories"] = 5000;
    configs.push_back(survival);
    auto evl = read_config("evl_lsv_map");
    evl["n_samples"] = 2000;
    evl["t"] = 1000;
    configs.push_back(evl);
    auto tower = read_config("tower_tail_lsv");
    tower["n_returns"] = 1'000'000;
    configs.push_back(tower);
    auto duality = read_config("duality_doubling");
    duality["n_samples"] = 1000;
    configs.push_back(duality);

    Verdict v{true, ""};
    for (auto config : configs) {
        std::string first;
        bool same = true;
        for (unsigned workers : {1u, 3u, 4u}) {
            config["workers"] = workers;
            const fs::path dir = work_dir() / ("workers" + std::to_string(workers));
            fs::create_directories(dir);
            const auto report = run_experiment(parse_config(config), dir);
            const std::string data = slurp(report.data);
            if (workers == 1) {
                first = data;
            } else {
                same = same && data == first && !data.empty();
            }
        }
        v.pass = v.pass && same;
        v.detail += (v.detail.empty() ? "" : ", ") + config.at("name").get<std::string>() + (same ? " identical" : " DIFFERS");
    }
    v.detail += " (workers 1, 3, 4)";
    return v;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"AC1 exponential hitting law (flow)", ac1},
        {"AC2 Poisson counts", ac2},
        {"AC3 Kac's lemma", ac3},
        {"AC4 flow-base consistency", ac4},
        {"AC5 flow extreme value laws", ac5},
        {"AC6 EVL-hitting duality", ac6},
        {"AC7 tower-map EVL", ac7},
        {"AC8 correlation oracle", ac8},
        {"AC9 short returns", ac9},
        {"AC10 assumptions", ac10},
        {"AC11 determinism", ac11},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        failures += !v.pass;
        std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
