#include "hdm/verify.hpp"

#include "hdm/checkpoint.hpp"
#include "hdm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace hdm {

json to_json(const CheckResult& c) {
    return {{"name", c.name}, {"statistic", c.statistic}, {"threshold", c.threshold}, {"pass", c.pass},
            {"details", c.details}};
}

bool VerificationReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

json VerificationReport::to_json() const {
    json list = json::array();
    for (const auto& c : checks) list.push_back(hdm::to_json(c));
    return {{"format", "hdm-verification"}, {"version", 1}, {"pass", all_pass()}, {"checks", list}};
}

// ---- schedule and score ---------------------------------------------------

ScheduleIdentityResult check_schedule_identities(const Schedule& schedule, int points) {
    if (points < 2) throw std::invalid_argument("schedule identities: need at least 2 points");
    ScheduleIdentityResult r;
    const double h = 1e-5;
    const double lo = schedule.t_min();
    const double hi = 1.0 - 2.0 * h;
    for (int k = 0; k < points; ++k) {
        const double t = lo + (hi - lo) * k / (points - 1);
        const auto [alpha, sigma] = schedule.alpha_sigma(t);
        r.vp_error = std::max(r.vp_error, std::abs(alpha * alpha + sigma * sigma - 1.0));
        const double a = t - h;
        const double b = t + h;
        const auto lo_as = schedule.alpha_sigma(a);
        const auto hi_as = schedule.alpha_sigma(b);
        const double f_fd = (std::log(hi_as.alpha) - std::log(lo_as.alpha)) / (b - a);
        const double s2_fd = (hi_as.sigma * hi_as.sigma - lo_as.sigma * lo_as.sigma) / (b - a);
        const double g2_fd = s2_fd - 2.0 * f_fd * sigma * sigma;
        const auto [f, g2] = schedule.drift_diffusion(t);
        r.f_relative_error = std::max(r.f_relative_error, std::abs(f - f_fd) / std::abs(f_fd));
        r.g2_relative_error = std::max(r.g2_relative_error, std::abs(g2 - g2_fd) / std::abs(g2_fd));
    }
    return r;
}

double empirical_log_density(const JointDataset& data, const Schedule& schedule, const Vec& x_t, double t) {
    const auto [alpha, sigma] = schedule.alpha_sigma(t);
    std::vector<double> logs(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        logs[i] = -(x_t - alpha * data[i].x).squaredNorm() / (2.0 * sigma * sigma);
    const double peak = *std::max_element(logs.begin(), logs.end());
    std::vector<double> terms(logs.size());
    for (std::size_t i = 0; i < logs.size(); ++i) terms[i] = std::exp(logs[i] - peak);
    const double d = static_cast<double>(x_t.size());
    return peak + std::log(compensated_sum(terms)) - std::log(static_cast<double>(data.size())) -
           0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma);
}

double check_score_finite_differences(const JointDataset& data, const Schedule& schedule, int probes,
                                      std::uint64_t seed) {
    const OracleDenoiser oracle(data, schedule);
    Rng rng = stream_rng(seed, 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    for (int p = 0; p < probes; ++p) {
        const double t = std::exp(std::log(schedule.t_min()) * (1.0 - unit(rng)));
        const auto [alpha, sigma] = schedule.alpha_sigma(t);
        const std::size_t atom = static_cast<std::size_t>(rng() % data.size());
        const Vec x_t = alpha * data[atom].x + sigma * standard_normal(rng, data.d_x());
        const Vec s = oracle.score(x_t, t);
        const double h = 1e-4 * sigma;
        Vec fd(x_t.size());
        for (Eigen::Index i = 0; i < x_t.size(); ++i) {
            Vec up = x_t;
            Vec dn = x_t;
            up[i] += h;
            dn[i] -= h;
            fd[i] = (empirical_log_density(data, schedule, up, t) - empirical_log_density(data, schedule, dn, t)) /
                    (2.0 * h);
        }
        worst = std::max(worst, (s - fd).cwiseAbs().maxCoeff() / std::max(fd.cwiseAbs().maxCoeff(), 1.0));
    }
    return worst;
}

// ---- proofs ---------------------------------------------------------------

ProofDiagnostics verify_quadratic_variation(const Denoiser& denoiser, const Schedule& schedule, SamplerConfig cfg,
                                            const Vec& x_T, const Vec& y_T, int paths) {
    if (paths < 2) throw std::invalid_argument("quadratic variation: need at least 2 paths");
    cfg.method = SamplerMethod::EulerMaruyamaSde;
    cfg.hybrid = true;
    cfg.record_trajectories = true;
    const int d_y = denoiser.d_y();
    const std::vector<double> grid = time_grid(schedule, cfg);
    const std::size_t G = grid.size();

    // y values per path and grid time; x is shared
    std::vector<std::vector<Vec>> ys(static_cast<std::size_t>(paths));
    std::vector<Vec> expectations;
    parallel_for(static_cast<std::size_t>(paths), cfg.jobs, [&](std::size_t m) {
        Rng xr = stream_rng(cfg.seed, 0);
        Rng yr = stream_rng(cfg.seed, m + 1);
        TrajectoryResult r = integrate_trajectory(denoiser, schedule, cfg, x_T, y_T, xr, yr);
        if (!r.ok) throw DivergenceError("quadratic variation: path " + std::to_string(m) + ": " + r.error);
        std::vector<Vec>& row = ys[m];
        row.reserve(G);
        for (const auto& z : r.trajectory->states) row.push_back(z.tail(d_y));
        if (m == 0) expectations = r.trajectory->expectations;
    });

    ProofDiagnostics out;
    out.paths = paths;
    out.taus = grid;
    out.y_variance.resize(G);
    std::vector<double> column(static_cast<std::size_t>(paths));
    for (std::size_t k = 0; k < G; ++k) {
        double total = 0.0;
        for (int j = 0; j < d_y; ++j) {
            for (int m = 0; m < paths; ++m) column[static_cast<std::size_t>(m)] = ys[static_cast<std::size_t>(m)][k][j];
            const double mean = compensated_sum(column) / paths;
            for (double& v : column) v = (v - mean) * (v - mean);
            total += compensated_sum(column) / (paths - 1);
        }
        out.y_variance[k] = total / d_y;
    }
    out.quad_variation_estimate = out.y_variance.back();
    out.t_min_is_minimum = true;
    for (std::size_t k = 1; k + 1 < G; ++k)
        if (out.y_variance[k] < out.y_variance.back()) out.t_min_is_minimum = false;

    const Vec y_final = expectations.back().tail(d_y);
    for (const auto& e : expectations) out.epsilon_curve.push_back((e.tail(d_y) - y_final).norm());
    return out;
}

double ito_isometry_variance(const Schedule& schedule, double tau, double T, int intervals) {
    if (!(tau > 0.0 && tau < T && T <= 1.0)) throw std::invalid_argument("ito isometry: need 0 < tau < T <= 1");
    if (intervals < 2) throw std::invalid_argument("ito isometry: need at least 2 intervals");
    if (intervals % 2) ++intervals;
    const double a = std::log(tau);
    const double h = (std::log(T) - a) / intervals;
    std::vector<double> terms(static_cast<std::size_t>(intervals) + 1);
    for (int i = 0; i <= intervals; ++i) {
        const double t = std::exp(a + i * h);
        const auto [alpha, sigma] = schedule.alpha_sigma(t);
        const double s2 = sigma * sigma;
        const double integrand = alpha * alpha * schedule.drift_diffusion(t).g2 / (s2 * s2) * t;  // dt = t du
        const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        terms[static_cast<std::size_t>(i)] = w * integrand;
    }
    const auto [alpha, sigma] = schedule.alpha_sigma(tau);
    return std::pow(sigma, 4) / (alpha * alpha) * compensated_sum(terms) * h / 3.0;
}

std::vector<Vec> integral_identity_quadrature(const Schedule& schedule, const Trajectory& trajectory, int d_y) {
    const auto& times = trajectory.times;
    if (times.size() < 2 || trajectory.states.size() != times.size() || trajectory.expectations.size() != times.size())
        throw std::invalid_argument("integral identity: trajectory must record states and expectations at every time");
    auto ratio = [&](double t) {
        const auto [alpha, sigma] = schedule.alpha_sigma(t);
        return alpha / sigma;
    };
    const double sigma_T = schedule.alpha_sigma(times.front()).sigma;
    const Vec y_T = trajectory.states.front().tail(d_y);
    std::vector<Vec> out{y_T};
    // accumulates int_tau^T d(alpha/sigma) E[y|x_t], which is >= 0 in the direction of integration
    Vec integral = Vec::Zero(d_y);
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double step = ratio(times[k]) - ratio(times[k - 1]);
        integral -= step * 0.5 * (trajectory.expectations[k - 1].tail(d_y) + trajectory.expectations[k].tail(d_y));
        const double sigma = schedule.alpha_sigma(times[k]).sigma;
        out.push_back((sigma / sigma_T) * y_T - sigma * integral);
    }
    return out;
}

double ode_integral_identity_residual(const Schedule& schedule, const Trajectory& trajectory, int d_y) {
    const std::vector<Vec> quad = integral_identity_quadrature(schedule, trajectory, d_y);
    double worst = 0.0;
    for (std::size_t k = 0; k < quad.size(); ++k)
        worst = std::max(worst, (trajectory.states[k].tail(d_y) - quad[k]).cwiseAbs().maxCoeff());
    return worst;
}

double verify_ode_integral_identity(const Denoiser& denoiser, const Schedule& schedule, SamplerConfig cfg,
                                    const Vec& x_T, const Vec& y_T) {
    if (cfg.method == SamplerMethod::EulerMaruyamaSde)
        throw std::invalid_argument("integral identity: needs an ODE sampler");
    cfg.hybrid = true;
    cfg.record_trajectories = true;
    Rng unused(0);
    const TrajectoryResult r = integrate_trajectory(denoiser, schedule, cfg, x_T, y_T, unused, unused);
    if (!r.ok) throw DivergenceError("integral identity: " + r.error);
    return ode_integral_identity_residual(schedule, *r.trajectory, denoiser.d_y());
}

double YTInvarianceResult::prefactor_error() const {
    if (predicted_terminal == 0.0) return 0.0;
    return std::abs(terminal_deviation / predicted_terminal - 1.0);
}

YTInvarianceResult verify_yT_invariance(const Denoiser& denoiser, const Schedule& schedule, SamplerConfig cfg,
                                        const Vec& x_T, const std::vector<Vec>& y_T_trials) {
    if (y_T_trials.empty()) throw std::invalid_argument("yT invariance: need at least one trial");
    if (cfg.method == SamplerMethod::EulerMaruyamaSde)
        throw std::invalid_argument("yT invariance: needs an ODE sampler");
    cfg.hybrid = true;
    cfg.final_denoise = true;
    cfg.record_trajectories = false;
    std::vector<TrajectoryResult> runs(y_T_trials.size());
    parallel_for(runs.size(), cfg.jobs, [&](std::size_t i) {
        Rng unused(0);
        runs[i] = integrate_trajectory(denoiser, schedule, cfg, x_T, y_T_trials[i], unused, unused);
        if (!runs[i].ok) throw DivergenceError("yT invariance: trial " + std::to_string(i) + ": " + runs[i].error);
    });
    const std::vector<double> grid = time_grid(schedule, cfg);
    YTInvarianceResult r;
    r.trials = static_cast<int>(runs.size());
    r.alpha_start = schedule.alpha_sigma(grid.front()).alpha;
    r.prefactor = schedule.alpha_sigma(grid.back()).sigma / schedule.alpha_sigma(grid.front()).sigma;
    const int d_y = denoiser.d_y();
    double spread = 0.0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        for (std::size_t j = i + 1; j < runs.size(); ++j) {
            r.endpoint_deviation = std::max(r.endpoint_deviation, (runs[i].y0 - runs[j].y0).cwiseAbs().maxCoeff());
            r.terminal_deviation =
                std::max(r.terminal_deviation,
                         (runs[i].terminal.tail(d_y) - runs[j].terminal.tail(d_y)).cwiseAbs().maxCoeff());
            spread = std::max(spread, (y_T_trials[i] - y_T_trials[j]).cwiseAbs().maxCoeff());
        }
    }
    r.predicted_terminal = r.prefactor * spread;
    return r;
}

std::vector<Vec> default_yT_trials(int d_y, std::uint64_t seed) {
    Rng rng = stream_rng(seed, 0);
    return {Vec::Zero(d_y),         Vec::Constant(d_y, 1.0),    Vec::Constant(d_y, -1.0),
            Vec::Constant(d_y, 100.0), Vec::Constant(d_y, -100.0), standard_normal(rng, d_y)};
}

// ---- sampling quality -----------------------------------------------------

JointFidelityResult joint_fidelity(const Denoiser& denoiser, const Schedule& schedule, const SamplerConfig& cfg,
                                   const JointDataset& held_out, std::size_t n, int permutations,
                                   std::uint64_t seed) {
    if (held_out.d_x() != denoiser.d_x() || held_out.d_y() != denoiser.d_y())
        throw std::invalid_argument("joint fidelity: held-out data does not match the denoiser dimensions");
    SamplerConfig hybrid = cfg;
    hybrid.hybrid = true;
    hybrid.record_trajectories = false;
    SamplerConfig two_stage = hybrid;
    two_stage.hybrid = false;
    two_stage.seed = splitmix64(cfg.seed ^ 0x7477'6f2d'7374'6167ULL);

    const SampleSet a = sample_joint(denoiser, schedule, hybrid, n);
    const SampleSet b = sample_joint(denoiser, schedule, two_stage, n);
    JointFidelityResult r;
    r.aborted = a.aborted() + b.aborted();
    const std::vector<Vec> za = a.joint_samples();
    const std::vector<Vec> zb = b.joint_samples();

    std::vector<Vec> data;
    data.reserve(held_out.size());
    for (const auto& s : held_out.samples()) {
        Vec z(s.x.size() + s.y.size());
        z << s.x, s.y;
        data.push_back(std::move(z));
    }
    r.energy = energy_two_sample_test(za, data, permutations, 0.95, seed);
    r.route = energy_two_sample_test(za, zb, permutations, 0.95, seed + 1);

    std::size_t agree = 0;
    std::size_t total = 0;
    for (const auto& res : a.results) {
        if (!res.ok) continue;
        const auto got = decode_classes(res.y0, held_out.K());
        const auto want = decode_classes(held_out.label(res.x0), held_out.K());
        for (std::size_t p = 0; p < got.size(); ++p) agree += got[p] == want[p] ? 1 : 0;
        total += got.size();
    }
    r.label_agreement = total ? static_cast<double>(agree) / static_cast<double>(total) : 0.0;
    return r;
}

SolverAgreementResult solver_agreement(const Denoiser& denoiser, const Schedule& schedule, const SamplerConfig& fast,
                                       const SamplerConfig& reference, std::size_t n) {
    if (fast.seed != reference.seed) throw std::invalid_argument("solver agreement: samplers must share a seed");
    const SampleSet a = sample_joint(denoiser, schedule, fast, n);
    const SampleSet b = sample_joint(denoiser, schedule, reference, n);
    std::vector<double> errors;
    for (std::size_t i = 0; i < n; ++i) {
        if (!a.results[i].ok || !b.results[i].ok) throw DivergenceError("solver agreement: trajectory aborted");
        const double ex = (a.results[i].x0 - b.results[i].x0).cwiseAbs().maxCoeff();
        const double ey = a.results[i].y0.size() ? (a.results[i].y0 - b.results[i].y0).cwiseAbs().maxCoeff() : 0.0;
        errors.push_back(std::max(ex, ey));
    }
    SolverAgreementResult r;
    r.n = n;
    if (errors.empty()) return r;
    std::sort(errors.begin(), errors.end());
    auto at = [&](double q) { return errors[static_cast<std::size_t>(q * static_cast<double>(errors.size() - 1))]; };
    r.max_norm = errors.back();
    r.median = at(0.5);
    r.p90 = at(0.9);
    return r;
}

// ---- config-driven suite --------------------------------------------------

namespace {

/// default_steps = 0 leaves "steps" to the caller.
SamplerConfig ode_config(StrictObject& o, int default_steps, int jobs) {
    SamplerConfig c;
    c.method = sampler_method_from_string(o.get<std::string>("method", "heun-ode"));
    if (default_steps > 0) c.steps = o.get<int>("steps", default_steps);
    c.grid = time_grid_from_string(o.get<std::string>("grid", "log"));
    c.jobs = jobs;
    return c;
}

bool enabled(StrictObject& o) { return o.get<bool>("enabled", true); }

std::vector<Vec> starting_points(int d_x, int count, std::uint64_t seed) {
    std::vector<Vec> out;
    for (int i = 0; i < count; ++i) {
        Rng rng = stream_rng(seed, static_cast<std::uint64_t>(i) + 1000);
        out.push_back(standard_normal(rng, d_x));
    }
    return out;
}

/// Fresh draws from the dataset's distribution: a regenerated dataset for
/// the synthetic generators, resampled atoms otherwise.
JointDataset held_out_data(const DatasetConfig& cfg, const JointDataset& train, std::size_t n, std::uint64_t seed) {
    if (cfg.kind == DatasetKind::Mixture) {
        DatasetConfig c = cfg;
        c.mixture.seed = splitmix64(cfg.mixture.seed ^ seed);
        c.mixture.n_samples = static_cast<int>(n);
        return build_dataset(c);
    }
    if (cfg.kind == DatasetKind::Shapes) {
        DatasetConfig c = cfg;
        c.shapes.seed = splitmix64(cfg.shapes.seed ^ seed);
        c.shapes.n_samples = static_cast<int>(n);
        return build_dataset(c);
    }
    Rng rng = stream_rng(seed, 7);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = static_cast<std::size_t>(rng() % train.size());
    return train.subset(idx, "-resampled");
}

}  // namespace

VerificationReport run_verification(const json& config, int jobs) {
    StrictObject top(config, "verify");
    const Schedule schedule(top.has("schedule") ? schedule_from_json(top.raw("schedule")) : ScheduleParams{});
    const DatasetConfig data_cfg = top.has("dataset") ? dataset_from_json(top.raw("dataset")) : [] {
        DatasetConfig c;
        c.kind = DatasetKind::TwoPoint;
        return c;
    }();
    const auto seed = top.get<std::uint64_t>("seed", 0);
    const std::string checkpoint = top.get<std::string>("checkpoint", "");
    const json checks = top.has("checks") ? top.raw("checks") : json::object();
    top.finish();
    if (!checks.is_object()) throw ConfigError("verify.checks: expected an object");

    const JointDataset data = build_dataset(data_cfg);
    const OracleDenoiser oracle(data, schedule);
    std::unique_ptr<MlpDenoiser> model;
    if (!checkpoint.empty()) {
        model = std::make_unique<MlpDenoiser>(load_checkpoint(checkpoint).model);
        if (model->d_x() != oracle.d_x() || model->d_y() != oracle.d_y())
            throw ConfigError("verify: checkpoint dimensions do not match the dataset");
    }
    // the learned denoiser, when given, stands in for the oracle in the trajectory checks
    const Denoiser& denoiser = model ? static_cast<const Denoiser&>(*model) : static_cast<const Denoiser&>(oracle);

    VerificationReport report;
    StrictObject all(checks, "verify.checks");
    auto section = [&](const std::string& key) -> std::unique_ptr<StrictObject> {
        if (!all.has(key)) return nullptr;
        return std::make_unique<StrictObject>(all.raw(key), "verify.checks." + key);
    };
    auto add = [&](std::string name, double statistic, double threshold, bool pass, json details) {
        report.checks.push_back({std::move(name), statistic, threshold, pass, std::move(details)});
    };

    if (auto o = section("schedule_identities"); o && enabled(*o)) {
        const int points = o->get<int>("points", 1000);
        const double g2_tol = o->get<double>("g2_tolerance", 1e-6);
        const double vp_tol = o->get<double>("vp_tolerance", 1e-12);
        o->finish();
        const auto r = check_schedule_identities(schedule, points);
        add("schedule_g2_finite_difference", r.g2_relative_error, g2_tol, r.g2_relative_error < g2_tol,
            {{"points", points}, {"f_relative_error", r.f_relative_error}});
        add("schedule_variance_preserving", r.vp_error, vp_tol, r.vp_error < vp_tol, {{"points", points}});
    }

    if (auto o = section("score"); o && enabled(*o)) {
        const int probes = o->get<int>("probes", 100);
        const double tol = o->get<double>("tolerance", 1e-5);
        o->finish();
        const double err = check_score_finite_differences(data, schedule, probes, seed);
        add("oracle_score_finite_difference", err, tol, err < tol, {{"probes", probes}, {"dataset", data.name()}});
    }

    if (auto o = section("ode_integral_identity"); o && enabled(*o)) {
        SamplerConfig c = ode_config(*o, 400, 1);
        const int trials = o->get<int>("trials", 20);
        const double tol = o->get<double>("tolerance", 1e-3);
        o->finish();
        const auto starts = starting_points(denoiser.d_x(), trials, seed);
        std::vector<double> res(starts.size());
        parallel_for(starts.size(), jobs, [&](std::size_t i) {
            Rng rng = stream_rng(seed, 2000 + i);
            res[i] = verify_ode_integral_identity(denoiser, schedule, c, starts[i], standard_normal(rng, denoiser.d_y()));
        });
        const double worst = res.empty() ? 0.0 : *std::max_element(res.begin(), res.end());
        add("ode_integral_identity", worst, tol, worst < tol,
            {{"steps", c.steps}, {"method", to_string(c.method)}, {"grid", to_string(c.grid)}, {"trials", trials}});
    }

    if (auto o = section("refinement"); o && enabled(*o)) {
        SamplerConfig c = ode_config(*o, 0, 1);
        const auto steps = o->get<std::vector<int>>("steps", {100, 200, 400, 800});
        const int trials = o->get<int>("trials", 5);
        const double lo = o->get<double>("min_ratio", 2.0);
        const double hi = o->get<double>("max_ratio", 8.0);
        o->finish();
        if (steps.size() < 2) throw ConfigError("verify.checks.refinement.steps: need at least two step counts");
        const auto starts = starting_points(denoiser.d_x(), trials, seed);
        const auto yTs = default_yT_trials(denoiser.d_y(), seed);
        std::vector<double> identity;
        std::vector<double> prefactor;
        for (int s : steps) {
            c.steps = s;
            double worst = 0.0;
            double worst_pref = 0.0;
            for (const auto& x_T : starts) {
                worst = std::max(worst, verify_ode_integral_identity(denoiser, schedule, c, x_T, yTs.back()));
                worst_pref = std::max(worst_pref, verify_yT_invariance(denoiser, schedule, c, x_T, yTs).prefactor_error());
            }
            identity.push_back(worst);
            prefactor.push_back(worst_pref);
        }
        std::vector<double> ratios;
        bool decreasing = true;
        for (std::size_t k = 1; k < steps.size(); ++k) {
            ratios.push_back(identity[k - 1] / identity[k]);
            if (!(prefactor[k] < prefactor[k - 1])) decreasing = false;
        }
        const double min_ratio = *std::min_element(ratios.begin(), ratios.end());
        const double max_ratio = *std::max_element(ratios.begin(), ratios.end());
        add("ode_identity_refinement_ratio", min_ratio, lo, min_ratio >= lo && max_ratio <= hi,
            {{"steps", steps}, {"residuals", identity}, {"ratios", ratios}, {"max_ratio", max_ratio},
             {"max_ratio_threshold", hi}});
        add("yT_prefactor_refinement", prefactor.back(), prefactor.front(), decreasing,
            {{"steps", steps}, {"prefactor_errors", prefactor}});
    }

    if (auto o = section("yT_invariance"); o && enabled(*o)) {
        SamplerConfig c = ode_config(*o, 400, jobs);
        const int trials = o->get<int>("x_trials", 5);
        const double tol = o->get<double>("tolerance", 1e-3);
        const double pref_tol = o->get<double>("prefactor_tolerance", 1e-2);
        o->finish();
        const auto yTs = default_yT_trials(denoiser.d_y(), seed);
        YTInvarianceResult worst;
        double worst_pref = 0.0;
        for (const auto& x_T : starting_points(denoiser.d_x(), trials, seed)) {
            const auto r = verify_yT_invariance(denoiser, schedule, c, x_T, yTs);
            worst.endpoint_deviation = std::max(worst.endpoint_deviation, r.endpoint_deviation);
            worst.terminal_deviation = std::max(worst.terminal_deviation, r.terminal_deviation);
            worst.predicted_terminal = r.predicted_terminal;
            worst.prefactor = r.prefactor;
            worst.alpha_start = r.alpha_start;
            worst_pref = std::max(worst_pref, r.prefactor_error());
        }
        add("yT_invariance", worst.endpoint_deviation, tol, worst.endpoint_deviation < tol,
            {{"steps", c.steps}, {"method", to_string(c.method)}, {"grid", to_string(c.grid)},
             {"y_T_trials", yTs.size()}, {"x_trials", trials}});
        add("yT_prefactor", worst_pref, pref_tol, worst_pref < pref_tol,
            {{"terminal_deviation", worst.terminal_deviation}, {"predicted_terminal", worst.predicted_terminal},
             {"sigma_ratio", worst.prefactor}, {"alpha_start", worst.alpha_start}});
    }

    if (auto o = section("quadratic_variation"); o && enabled(*o)) {
        SamplerConfig c;
        c.steps = o->get<int>("steps", 400);
        c.grid = time_grid_from_string(o->get<std::string>("grid", "log"));
        c.seed = seed;
        c.jobs = jobs;
        const int paths = o->get<int>("paths", 1000);
        const double std_tol = o->get<double>("std_tolerance", 0.02);
        const double iso_tol = o->get<double>("isometry_tolerance", 0.1);
        const int iso_paths = o->get<int>("isometry_paths", 20000);
        const auto iso_taus = o->get<std::vector<double>>("isometry_taus", {0.5, 0.1, 0.01, 0.0});
        o->finish();
        const Vec x_T = starting_points(oracle.d_x(), 1, seed).front();
        const Vec y_T = Vec::Zero(oracle.d_y());
        const auto diag = verify_quadratic_variation(oracle, schedule, c, x_T, y_T, paths);
        const double sd = std::sqrt(diag.quad_variation_estimate);
        add("sde_y_std_at_t_min", sd, std_tol, sd < std_tol && diag.t_min_is_minimum,
            {{"paths", paths}, {"steps", c.steps}, {"variance", diag.quad_variation_estimate},
             {"t_min_is_grid_minimum", diag.t_min_is_minimum}, {"epsilon_at_start", diag.epsilon_curve.front()}});
        const auto iso = iso_paths == paths ? diag : verify_quadratic_variation(oracle, schedule, c, x_T, y_T, iso_paths);
        double worst = 0.0;
        json points = json::array();
        for (double want : iso_taus) {
            // nearest grid time; 0 selects t_end
            std::size_t k = iso.taus.size() - 1;
            if (want > 0.0)
                for (std::size_t i = 0; i < iso.taus.size(); ++i)
                    if (std::abs(iso.taus[i] - want) < std::abs(iso.taus[k] - want)) k = i;
            const double analytic = ito_isometry_variance(schedule, iso.taus[k], iso.taus.front());
            const double rel = std::abs(iso.y_variance[k] / analytic - 1.0);
            worst = std::max(worst, rel);
            points.push_back({{"tau", iso.taus[k]}, {"variance", iso.y_variance[k]}, {"isometry", analytic}});
        }
        add("sde_ito_isometry", worst, iso_tol, worst < iso_tol, {{"paths", iso_paths}, {"points", points}});
    }

    if (auto o = section("joint_fidelity"); o && enabled(*o)) {
        SamplerConfig c;
        c.method = sampler_method_from_string(o->get<std::string>("method", "exponential-ode"));
        c.steps = o->get<int>("steps", 100);
        c.grid = time_grid_from_string(o->get<std::string>("grid", "log"));
        c.seed = seed;
        c.jobs = jobs;
        const auto n = o->get<std::size_t>("n", 2000);
        const int permutations = o->get<int>("permutations", 199);
        const double agreement = o->get<double>("agreement", 0.99);
        o->finish();
        const JointDataset held = held_out_data(data_cfg, data, n, seed + 1);
        const auto r = joint_fidelity(oracle, schedule, c, held, n, permutations, seed);
        add("joint_energy_distance", r.energy.statistic, r.energy.noise_floor, r.energy.pass,
            {{"n", n}, {"permutations", permutations}, {"aborted", r.aborted}});
        add("joint_label_agreement", r.label_agreement, agreement, r.label_agreement >= agreement, json::object());
        add("hybrid_vs_two_stage", r.route.statistic, r.route.noise_floor, r.route.pass,
            {{"permutations", permutations}});
    }

    if (auto o = section("solver_agreement"); o && enabled(*o)) {
        SamplerConfig fast;
        fast.method = SamplerMethod::ExponentialOde;
        fast.steps = o->get<int>("fast_steps", 100);
        fast.grid = time_grid_from_string(o->get<std::string>("grid", "log"));
        fast.seed = seed;
        fast.jobs = jobs;
        SamplerConfig ref = fast;
        ref.method = SamplerMethod::HeunOde;
        ref.steps = o->get<int>("reference_steps", 2000);
        const auto n = o->get<std::size_t>("n", 200);
        const double tol = o->get<double>("tolerance", 1e-2);
        o->finish();
        const auto r = solver_agreement(oracle, schedule, fast, ref, n);
        add("solver_agreement", r.max_norm, tol, r.max_norm < tol,
            {{"n", n}, {"median", r.median}, {"p90", r.p90}, {"fast_steps", fast.steps},
             {"reference_steps", ref.steps}, {"grid", to_string(fast.grid)}});
    }

    all.finish();
    return report;
}

}  // namespace hdm
