#include "hdm/dataset.hpp"
#include "hdm/oracle.hpp"
#include "hdm/verify.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace hdm;

namespace {

SamplerConfig heun(int steps) {
    SamplerConfig c;
    c.method = SamplerMethod::HeunOde;
    c.steps = steps;
    c.grid = TimeGrid::Log;
    return c;
}

}  // namespace

TEST_SUITE("verify") {
    TEST_CASE("schedule identities hold for both schedule kinds") {
        const auto linear = check_schedule_identities(Schedule(), 1000);
        CHECK(linear.g2_relative_error < 1e-6);
        CHECK(linear.vp_error < 1e-12);
        ScheduleParams p;
        p.kind = ScheduleKind::CosineVP;
        // alpha_t is steep near t = 1 for the cosine family, so central differences lose a digit there
        const auto cosine = check_schedule_identities(Schedule(p), 1000);
        CHECK(cosine.g2_relative_error < 1e-5);
        CHECK(cosine.vp_error < 1e-12);
    }

    TEST_CASE("empirical log density matches the test oracle") {
        const Schedule s;
        MixtureParams mp;
        mp.n_samples = 50;
        const JointDataset data = make_gaussian_mixture(mp);
        std::vector<Vec> atoms;
        for (const auto& smp : data.samples()) atoms.push_back(smp.x);
        const Vec x = Vec::LinSpaced(2, -0.2, 0.3);
        for (double t : {0.01, 0.3, 0.9}) {
            const auto [alpha, sigma] = s.alpha_sigma(t);
            // differences cancel the shared normalizer
            const double lib = empirical_log_density(data, s, x, t) - empirical_log_density(data, s, 2.0 * x, t);
            const double ref = oracle::mixture_log_density(atoms, x, alpha, sigma) -
                               oracle::mixture_log_density(atoms, 2.0 * x, alpha, sigma);
            CHECK(lib == doctest::Approx(ref).epsilon(1e-10));
        }
    }

    TEST_CASE("oracle score passes the finite-difference check") {
        const Schedule s;
        CHECK(check_score_finite_differences(make_two_point(), s, 100, 1) < 1e-5);
        CHECK(check_score_finite_differences(make_gaussian_mixture({}), s, 100, 2) < 1e-5);
    }

    TEST_CASE("integral identity residual is tiny for a single point and small for two points") {
        const Schedule s;
        const Vec x_T = Vec::Constant(1, 0.3);
        const Vec y_T = Vec::Constant(2, 0.5);
        const OracleDenoiser single(make_atoms({Vec::Constant(1, 0.7)}, {1}, 2), s);
        SamplerConfig exact = heun(400);
        exact.method = SamplerMethod::ExponentialOde;
        CHECK(verify_ode_integral_identity(single, s, exact, x_T, y_T) < 1e-6);
        const OracleDenoiser two(make_two_point(), s);
        CHECK(verify_ode_integral_identity(two, s, heun(400), x_T, y_T) < 1e-3);
    }

    TEST_CASE("y_T invariance on the two-point oracle") {
        const Schedule s;
        const OracleDenoiser d(make_two_point(), s);
        const Vec x_T = Vec::Constant(1, -0.4);
        const auto trials = default_yT_trials(2, 3);
        CHECK(trials.size() == 6);
        const auto r = verify_yT_invariance(d, s, heun(400), x_T, trials);
        CHECK(r.trials == 6);
        CHECK(r.endpoint_deviation < 1e-3);
        CHECK(r.prefactor_error() < 1e-2);
        const auto one = verify_yT_invariance(d, s, heun(400), x_T, {Vec::Ones(2)});
        CHECK(one.endpoint_deviation == 0.0);
        CHECK(one.terminal_deviation == 0.0);
    }

    TEST_CASE("Ito isometry quadrature matches the closed form") {
        const Schedule s;
        const auto T = s.alpha_sigma(1.0);
        for (double tau : {0.5, 0.1, 0.01, 0.001}) {
            const auto a = s.alpha_sigma(tau);
            CHECK(ito_isometry_variance(s, tau, 1.0) ==
                  doctest::Approx(oracle::ito_variance_closed_form(a.alpha, a.sigma, T.alpha, T.sigma)).epsilon(1e-8));
        }
    }

    TEST_CASE("frozen-x hybrid SDE: mask variance collapses at t_min") {
        const Schedule s;
        const OracleDenoiser d(make_two_point(), s);
        SamplerConfig c;
        c.steps = 400;
        c.grid = TimeGrid::Log;
        c.seed = 4;
        const auto diag = verify_quadratic_variation(d, s, c, Vec::Constant(1, 0.2), Vec::Zero(2), 1000);
        CHECK(diag.paths == 1000);
        CHECK(diag.t_min_is_minimum);
        CHECK(diag.quad_variation_estimate < 1e-3);
        CHECK(diag.taus.size() == diag.y_variance.size());
        CHECK(diag.taus.back() == s.t_min());
    }

    TEST_CASE("single-point Monte Carlo variance agrees with the isometry integral") {
        const Schedule s;
        const OracleDenoiser d(make_atoms({Vec::Constant(1, 0.5)}, {0}, 2), s);
        SamplerConfig c;
        c.steps = 400;
        c.grid = TimeGrid::Log;
        c.seed = 6;
        const auto diag = verify_quadratic_variation(d, s, c, Vec::Constant(1, 0.1), Vec::Zero(2), 4000);
        for (std::size_t k = 1; k < diag.taus.size(); k += 50) {
            const double analytic = ito_isometry_variance(s, diag.taus[k], diag.taus.front());
            CHECK(diag.y_variance[k] == doctest::Approx(analytic).epsilon(0.1));
        }
    }

    TEST_CASE("solver agreement of a solver with itself is zero") {
        const Schedule s;
        const OracleDenoiser d(make_two_point(), s);
        SamplerConfig c;
        c.steps = 20;
        const auto r = solver_agreement(d, s, c, c, 10);
        CHECK(r.n == 10);
        CHECK(r.max_norm == 0.0);
    }

    TEST_CASE("config-driven suite") {
        CHECK(run_verification(json::object(), 1).checks.empty());
        const json off = {{"checks", {{"joint_fidelity", {{"enabled", false}}}}}};
        CHECK(run_verification(off, 1).checks.empty());
        const json sched = {{"checks", {{"schedule_identities", {{"points", 200}}}}}};
        const auto r = run_verification(sched, 1);
        REQUIRE(r.checks.size() == 2);
        CHECK(r.all_pass());
        CHECK(r.to_json()["checks"].size() == 2);
        CHECK_THROWS_AS(run_verification({{"bogus", 1}}, 1), ConfigError);
        CHECK_THROWS_AS(run_verification({{"checks", {{"score", {{"probs", 3}}}}}}, 1), ConfigError);
        CHECK_THROWS_AS(run_verification({{"checks", {{"nonsense", json::object()}}}}, 1), ConfigError);
        CHECK_THROWS_AS(run_verification({{"checkpoint", "/nonexistent/model.json"}}, 1), ConfigError);
    }
}
