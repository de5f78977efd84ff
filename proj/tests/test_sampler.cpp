#include "hdm/dataset.hpp"
#include "hdm/oracle.hpp"
#include "hdm/sampler.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace hdm;

namespace {

/// Returns NaN for inputs whose first coordinate exceeds 1.5.
class HalfBrokenDenoiser final : public Denoiser {
public:
    int d_x() const override { return 1; }
    int d_y() const override { return 2; }
    Denoised denoise(const Vec& x_t, double) const override {
        const double v = x_t[0] > 1.5 ? NAN : 0.0;
        return {Vec::Constant(1, v), Vec::Constant(2, v)};
    }
};

SamplerConfig config(SamplerMethod method, int steps, TimeGrid grid = TimeGrid::Uniform) {
    SamplerConfig c;
    c.method = method;
    c.steps = steps;
    c.grid = grid;
    return c;
}

JointDataset single_point() { return make_atoms({Vec::Constant(2, 0.4)}, {1}, 3, "single"); }

double sample_variance(const std::vector<double>& v) {
    double m = 0.0;
    for (double e : v) m += e;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double e : v) s += (e - m) * (e - m);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST_SUITE("sampler") {
    TEST_CASE("uniform and log time grids") {
        const Schedule s;
        for (TimeGrid g : {TimeGrid::Uniform, TimeGrid::Log}) {
            const auto grid = time_grid(s, config(SamplerMethod::HeunOde, 50, g));
            REQUIRE(grid.size() == 51);
            CHECK(grid.front() == 1.0);
            CHECK(grid.back() == s.t_min());
            for (std::size_t k = 1; k < grid.size(); ++k) CHECK(grid[k] < grid[k - 1]);
        }
        const auto log_grid = time_grid(s, config(SamplerMethod::HeunOde, 10, TimeGrid::Log));
        const double ratio = log_grid[1] / log_grid[0];
        for (std::size_t k = 2; k < log_grid.size(); ++k)
            CHECK(log_grid[k] / log_grid[k - 1] == doctest::Approx(ratio).epsilon(1e-12));
        SamplerConfig bad = config(SamplerMethod::HeunOde, 0);
        CHECK_THROWS_AS(time_grid(s, bad), std::invalid_argument);
        bad = config(SamplerMethod::HeunOde, 10);
        bad.t_end = 2.0;
        CHECK_THROWS_AS(time_grid(s, bad), std::invalid_argument);
    }

    TEST_CASE("y-init policies parse and round trip") {
        CHECK(YInit::parse("zeros").kind == YInit::Kind::Zeros);
        CHECK(YInit::parse("random").kind == YInit::Kind::RandomNormal);
        const YInit c = YInit::parse("constant:-1.5e2");
        CHECK(c.kind == YInit::Kind::Constant);
        CHECK(c.value == -150.0);
        CHECK(YInit::parse(c.str()).value == -150.0);
        for (const char* bad : {"", "constant:", "constant:abc", "constant:1x", "constant:nan", "ones"})
            CHECK_THROWS_AS(YInit::parse(bad), std::invalid_argument);
        Rng rng(1);
        CHECK(initial_mask(YInit::parse("zeros"), 4, rng) == Vec::Zero(4));
        CHECK(initial_mask(YInit::parse("constant:7"), 4, rng) == Vec::Constant(4, 7.0));
        Rng r1(3), r2(3);
        CHECK(initial_mask(YInit::parse("random"), 5, r1) == initial_mask(YInit::parse("random"), 5, r2));
    }

    TEST_CASE("reverse SDE step with zero noise is the explicit drift update") {
        const Schedule s;
        const GaussianPriorDenoiser d(2, 0.5, s);
        const Vec x = Vec::LinSpaced(2, -0.3, 0.8);
        const double t = 0.4, dt = 0.01;
        const auto [alpha, sigma] = s.alpha_sigma(t);
        const auto [f, g2] = s.drift_diffusion(t);
        const Vec e = alpha * 0.5 * x / (alpha * alpha * 0.5 + sigma * sigma);
        const Vec score = (alpha * e - x) / (sigma * sigma);
        const Vec expected = x - dt * (f * x - g2 * score);
        CHECK((reverse_sde_step(d, s, x, t, dt, Vec::Zero(2)) - expected).norm() < 1e-13);
        const Vec unit = Vec::Ones(2);
        CHECK((reverse_sde_step(d, s, x, t, dt, unit) - expected - std::sqrt(g2 * dt) * unit).norm() < 1e-13);
    }

    TEST_CASE("exponential step is exact for a constant expectation") {
        const Schedule s;
        const JointDataset data = single_point();
        const OracleDenoiser oracle_d(data, s);
        Vec E(5);
        E << data[0].x, data[0].y;
        Rng rng(4);
        for (auto [t, t_next] : {std::pair{1.0, 0.6}, std::pair{0.3, 0.01}, std::pair{0.01, 0.001}}) {
            const Vec z = standard_normal(rng, 5);
            const auto a = s.alpha_sigma(t);
            const auto b = s.alpha_sigma(t_next);
            const Vec exact = oracle::constant_expectation_flow(z, E, a.alpha, a.sigma, b.alpha, b.sigma);
            CHECK((exponential_ode_step(oracle_d, s, z, t, t_next, true) - exact).lpNorm<Eigen::Infinity>() < 1e-12);
        }
    }

    TEST_CASE("Heun on a single point tracks the exact flow") {
        const Schedule s;
        const JointDataset data = single_point();
        const OracleDenoiser d(data, s);
        Vec E(5);
        E << data[0].x, data[0].y;
        SamplerConfig cfg = config(SamplerMethod::HeunOde, 400, TimeGrid::Log);
        Rng xr(1), yr(2);
        const Vec x_T = standard_normal(xr, 2);
        const Vec y_T = Vec::Constant(3, 0.5);
        const TrajectoryResult r = integrate_trajectory(d, s, cfg, x_T, y_T, xr, yr);
        REQUIRE(r.ok);
        Vec z_T(5);
        z_T << x_T, y_T;
        const auto a = s.alpha_sigma(1.0);
        const auto b = s.alpha_sigma(s.t_min());
        const Vec exact = oracle::constant_expectation_flow(z_T, E, a.alpha, a.sigma, b.alpha, b.sigma);
        CHECK((r.terminal - exact).lpNorm<Eigen::Infinity>() < 1e-3);
    }

    TEST_CASE("Heun error decays with the square of the step size") {
        const Schedule s;
        const JointDataset data = single_point();
        const OracleDenoiser d(data, s);
        Vec E(5);
        E << data[0].x, data[0].y;
        const Vec x_T = Vec::Constant(2, 0.7);
        const Vec y_T = Vec::Constant(3, -0.2);
        Vec z_T(5);
        z_T << x_T, y_T;
        const double t_end = 0.05;
        const auto a = s.alpha_sigma(1.0);
        const auto b = s.alpha_sigma(t_end);
        const Vec exact = oracle::constant_expectation_flow(z_T, E, a.alpha, a.sigma, b.alpha, b.sigma);
        auto error = [&](int steps) {
            SamplerConfig cfg = config(SamplerMethod::HeunOde, steps);
            cfg.t_end = t_end;
            Rng xr(0), yr(0);
            return (integrate_trajectory(d, s, cfg, x_T, y_T, xr, yr).terminal - exact).lpNorm<Eigen::Infinity>();
        };
        const double e1 = error(50), e2 = error(100), e3 = error(200);
        CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.15));
        CHECK(e2 / e3 == doctest::Approx(4.0).epsilon(0.15));
    }

    TEST_CASE("x block of the hybrid sampler is bit-identical to the image-only sampler") {
        const Schedule s;
        MixtureParams mp;
        mp.n_samples = 200;
        const JointDataset data = make_gaussian_mixture(mp);
        const OracleDenoiser d(data, s);
        for (SamplerMethod m : {SamplerMethod::EulerMaruyamaSde, SamplerMethod::HeunOde, SamplerMethod::ExponentialOde}) {
            SamplerConfig cfg = config(m, 40, TimeGrid::Log);
            cfg.y_init = YInit::parse("random");
            cfg.final_denoise = false;
            cfg.seed = 9;
            const SampleSet joint = sample_joint(d, s, cfg, 20);
            cfg.hybrid = false;
            const SampleSet plain = sample_joint(d, s, cfg, 20);
            for (std::size_t i = 0; i < 20; ++i) {
                REQUIRE(joint.results[i].ok);
                CHECK(joint.results[i].x0 == plain.results[i].x0);
            }
        }
    }

    TEST_CASE("VP stationarity with a standard Gaussian prior") {
        const Schedule s;
        const GaussianPriorDenoiser d(1, 1.0, s);
        for (SamplerMethod m : {SamplerMethod::EulerMaruyamaSde, SamplerMethod::HeunOde}) {
            SamplerConfig cfg = config(m, 200);
            cfg.final_denoise = false;
            cfg.seed = 5;
            const SampleSet set = sample_joint(d, s, cfg, 10000);
            std::vector<double> xs;
            for (const auto& r : set.results) xs.push_back(r.x0[0]);
            CHECK(sample_variance(xs) == doctest::Approx(1.0).epsilon(0.05));
        }
    }

    TEST_CASE("two-point hybrid samples carry the label of their image") {
        const Schedule s;
        const JointDataset data = make_two_point();
        const OracleDenoiser d(data, s);
        SamplerConfig cfg = config(SamplerMethod::ExponentialOde, 100, TimeGrid::Log);
        cfg.seed = 2;
        const SampleSet set = sample_joint(d, s, cfg, 1000);
        int match = 0;
        for (const auto& r : set.results) {
            REQUIRE(r.ok);
            match += decode_classes(r.y0, 2) == decode_classes(data.label(r.x0), 2);
        }
        CHECK(match >= 990);
    }

    TEST_CASE("final mask estimates lie on the simplex") {
        const Schedule s;
        MixtureParams mp;
        mp.n_samples = 300;
        const JointDataset data = make_gaussian_mixture(mp);
        const OracleDenoiser d(data, s);
        const SampleSet set = sample_joint(d, s, config(SamplerMethod::ExponentialOde, 50, TimeGrid::Log), 100);
        for (const auto& r : set.results) {
            CHECK(r.y0.sum() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(r.y0.minCoeff() >= 0.0);
        }
    }

    TEST_CASE("zero samples and thread-count independence") {
        const Schedule s;
        const JointDataset data = make_two_point();
        const OracleDenoiser d(data, s);
        SamplerConfig cfg = config(SamplerMethod::EulerMaruyamaSde, 30);
        CHECK(sample_joint(d, s, cfg, 0).results.empty());
        cfg.jobs = 1;
        const SampleSet a = sample_joint(d, s, cfg, 17);
        cfg.jobs = 4;
        const SampleSet b = sample_joint(d, s, cfg, 17);
        for (std::size_t i = 0; i < 17; ++i) {
            CHECK(a.results[i].x0 == b.results[i].x0);
            CHECK(a.results[i].y0 == b.results[i].y0);
        }
    }

    TEST_CASE("non-finite paths are aborted and counted") {
        const Schedule s;
        const HalfBrokenDenoiser d;
        SamplerConfig cfg = config(SamplerMethod::HeunOde, 10);
        const SampleSet set = sample_joint(d, s, cfg, 200);
        std::size_t failed = 0;
        for (const auto& r : set.results) failed += !r.ok;
        CHECK(failed == set.aborted());
        CHECK(set.aborted() > 0);
        CHECK(set.aborted() < 200);
        CHECK(set.joint_samples().size() == 200 - set.aborted());
        for (const auto& r : set.results)
            if (!r.ok) CHECK_FALSE(r.error.empty());
    }

    TEST_CASE("recorded trajectories follow the grid") {
        const Schedule s;
        const OracleDenoiser d(make_two_point(), s);
        SamplerConfig cfg = config(SamplerMethod::HeunOde, 12, TimeGrid::Log);
        cfg.record_trajectories = true;
        const SampleSet set = sample_joint(d, s, cfg, 2);
        const auto& tr = set.results[0].trajectory;
        REQUIRE(tr.has_value());
        CHECK(tr->times == time_grid(s, cfg));
        CHECK(tr->states.size() == 13);
        CHECK(tr->expectations.size() == 13);
        CHECK(tr->drift_norms.size() == 12);
        CHECK(tr->states.back() == set.results[0].terminal);
    }

    TEST_CASE("method names round trip") {
        for (SamplerMethod m : {SamplerMethod::EulerMaruyamaSde, SamplerMethod::HeunOde, SamplerMethod::ExponentialOde})
            CHECK(sampler_method_from_string(to_string(m)) == m);
        for (TimeGrid g : {TimeGrid::Uniform, TimeGrid::Log}) CHECK(time_grid_from_string(to_string(g)) == g);
        CHECK_THROWS(sampler_method_from_string("rk4"));
    }
}
