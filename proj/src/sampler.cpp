#include "hdm/sampler.hpp"

#include "hdm/parallel.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hdm {

std::string to_string(SamplerMethod method) {
    switch (method) {
        case SamplerMethod::EulerMaruyamaSde: return "euler-maruyama-sde";
        case SamplerMethod::HeunOde: return "heun-ode";
        case SamplerMethod::ExponentialOde: return "exponential-ode";
    }
    return "unknown";
}

SamplerMethod sampler_method_from_string(const std::string& name) {
    if (name == "euler-maruyama-sde" || name == "sde") return SamplerMethod::EulerMaruyamaSde;
    if (name == "heun-ode" || name == "heun") return SamplerMethod::HeunOde;
    if (name == "exponential-ode" || name == "exponential") return SamplerMethod::ExponentialOde;
    throw std::invalid_argument("unknown sampler method '" + name + "'");
}

std::string to_string(TimeGrid grid) { return grid == TimeGrid::Uniform ? "uniform" : "log"; }

TimeGrid time_grid_from_string(const std::string& name) {
    if (name == "uniform") return TimeGrid::Uniform;
    if (name == "log") return TimeGrid::Log;
    throw std::invalid_argument("unknown time grid '" + name + "'");
}

YInit YInit::parse(const std::string& text) {
    if (text == "zeros") return {Kind::Zeros, 0.0};
    if (text == "random") return {Kind::RandomNormal, 0.0};
    const std::string prefix = "constant:";
    if (text.rfind(prefix, 0) == 0) {
        std::size_t used = 0;
        const std::string number = text.substr(prefix.size());
        double value = 0.0;
        try {
            value = std::stod(number, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == number.size() && used > 0 && std::isfinite(value)) return {Kind::Constant, value};
    }
    throw std::invalid_argument("y-init must be 'zeros', 'random' or 'constant:<value>', got '" + text + "'");
}

std::string YInit::str() const {
    switch (kind) {
        case Kind::Zeros: return "zeros";
        case Kind::RandomNormal: return "random";
        case Kind::Constant: {
            std::ostringstream s;
            s.precision(17);
            s << "constant:" << value;
            return s.str();
        }
    }
    return "zeros";
}

std::vector<double> time_grid(const Schedule& schedule, const SamplerConfig& cfg) {
    const double t_end = cfg.t_end > 0.0 ? cfg.t_end : schedule.t_min();
    if (cfg.steps < 1) throw std::invalid_argument("sampler: steps must be >= 1");
    if (!(cfg.t_start <= 1.0 && t_end > 0.0 && t_end < cfg.t_start))
        throw std::invalid_argument("sampler: need 0 < t_end < t_start <= 1");
    std::vector<double> grid(static_cast<std::size_t>(cfg.steps) + 1);
    for (int k = 0; k <= cfg.steps; ++k) {
        const double u = static_cast<double>(k) / cfg.steps;
        grid[static_cast<std::size_t>(k)] =
            cfg.grid == TimeGrid::Uniform ? cfg.t_start + u * (t_end - cfg.t_start)
                                          : std::exp(std::log(cfg.t_start) + u * (std::log(t_end) - std::log(cfg.t_start)));
    }
    grid.front() = cfg.t_start;
    grid.back() = t_end;
    return grid;
}

namespace {

Vec expectation(const Denoiser& denoiser, const Vec& state, double t, bool hybrid) {
    Denoised d = denoiser.denoise(state.head(denoiser.d_x()), t);
    if (!hybrid) return d.x0;
    Vec e(denoiser.d_x() + denoiser.d_y());
    e << d.x0, d.y0;
    return e;
}

/// f s - scale g^2 (alpha e - s) / sigma^2, coordinate by coordinate.
Vec drift(const Schedule& schedule, const Vec& state, const Vec& expect, double t, double scale) {
    const auto [alpha, sigma] = schedule.alpha_sigma(t);
    const auto [f, g2] = schedule.drift_diffusion(t);
    const double s2 = sigma * sigma;
    Vec out(state.size());
    for (Eigen::Index i = 0; i < state.size(); ++i)
        out[i] = f * state[i] - scale * g2 * ((alpha * expect[i] - state[i]) / s2);
    return out;
}

Vec sde_update(const Schedule& schedule, const Vec& state, const Vec& expect, double t, double dt,
               const Vec& noise) {
    if (!(dt > 0.0)) throw std::invalid_argument("sde step: dt must be > 0");
    if (noise.size() != state.size()) throw std::invalid_argument("sde step: noise has wrong dimension");
    const Vec d = drift(schedule, state, expect, t, 1.0);
    const double g = std::sqrt(schedule.drift_diffusion(t).g2);
    const double root_dt = std::sqrt(dt);
    Vec out(state.size());
    for (Eigen::Index i = 0; i < state.size(); ++i) out[i] = state[i] - dt * d[i] + g * root_dt * noise[i];
    return out;
}

}  // namespace

Vec reverse_sde_step(const Denoiser& denoiser, const Schedule& schedule, const Vec& x_t, double t, double dt,
                     const Vec& noise) {
    if (x_t.size() != denoiser.d_x()) throw std::invalid_argument("reverse_sde_step: x_t has wrong dimension");
    return sde_update(schedule, x_t, expectation(denoiser, x_t, t, false), t, dt, noise);
}

Vec hybrid_sde_step(const Denoiser& denoiser, const Schedule& schedule, const Vec& z_t, double t, double dt,
                    const Vec& noise) {
    if (z_t.size() != denoiser.d_x() + denoiser.d_y())
        throw std::invalid_argument("hybrid_sde_step: z_t has wrong dimension");
    return sde_update(schedule, z_t, expectation(denoiser, z_t, t, true), t, dt, noise);
}

Vec probability_flow_step(const Denoiser& denoiser, const Schedule& schedule, const Vec& state, double t,
                          double dt, bool hybrid) {
    if (!(dt > 0.0) || t - dt <= 0.0) throw std::invalid_argument("probability_flow_step: need 0 < dt < t");
    const Vec d1 = drift(schedule, state, expectation(denoiser, state, t, hybrid), t, 0.5);
    Vec predictor(state.size());
    for (Eigen::Index i = 0; i < state.size(); ++i) predictor[i] = state[i] - dt * d1[i];
    const double t_next = t - dt;
    const Vec d2 = drift(schedule, predictor, expectation(denoiser, predictor, t_next, hybrid), t_next, 0.5);
    Vec out(state.size());
    for (Eigen::Index i = 0; i < state.size(); ++i) out[i] = state[i] - 0.5 * dt * (d1[i] + d2[i]);
    return out;
}

Vec exponential_ode_step(const Denoiser& denoiser, const Schedule& schedule, const Vec& state, double t,
                         double t_next, bool hybrid) {
    if (!(t_next <= t)) throw std::invalid_argument("exponential_ode_step: need t_next <= t");
    if (t_next == t) return state;
    const auto [alpha, sigma] = schedule.alpha_sigma(t);
    const auto [alpha_next, sigma_next] = schedule.alpha_sigma(t_next);
    const double ratio = sigma_next / sigma;
    const double gain = alpha_next - alpha * ratio;
    const Vec e = expectation(denoiser, state, t, hybrid);
    Vec out(state.size());
    for (Eigen::Index i = 0; i < state.size(); ++i) out[i] = ratio * state[i] + gain * e[i];
    return out;
}

Vec initial_mask(const YInit& policy, int d_y, Rng& rng) {
    switch (policy.kind) {
        case YInit::Kind::Zeros: return Vec::Zero(d_y);
        case YInit::Kind::Constant: return Vec::Constant(d_y, policy.value);
        case YInit::Kind::RandomNormal: return standard_normal(rng, d_y);
    }
    return Vec::Zero(d_y);
}

TrajectoryResult integrate_trajectory(const Denoiser& denoiser, const Schedule& schedule, const SamplerConfig& cfg,
                                      const Vec& x_T, const Vec& y_T, Rng& x_noise, Rng& y_noise) {
    const int d_x = denoiser.d_x();
    const int d_y = denoiser.d_y();
    if (x_T.size() != d_x) throw std::invalid_argument("integrate: x_T has wrong dimension");
    if (cfg.hybrid && y_T.size() != d_y) throw std::invalid_argument("integrate: y_T has wrong dimension");

    const std::vector<double> grid = time_grid(schedule, cfg);
    Vec state(cfg.hybrid ? d_x + d_y : d_x);
    state.head(d_x) = x_T;
    if (cfg.hybrid) state.tail(d_y) = y_T;

    TrajectoryResult result;
    if (cfg.record_trajectories) {
        result.trajectory.emplace();
        result.trajectory->times = grid;
        result.trajectory->states.push_back(state);
    }
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double t = grid[k];
        const double t_next = grid[k + 1];
        const double dt = t - t_next;
        if (result.trajectory) result.trajectory->expectations.push_back(expectation(denoiser, state, t, cfg.hybrid));
        Vec next;
        switch (cfg.method) {
            case SamplerMethod::EulerMaruyamaSde: {
                Vec noise(state.size());
                noise.head(d_x) = standard_normal(x_noise, d_x);
                if (cfg.hybrid) noise.tail(d_y) = standard_normal(y_noise, d_y);
                next = cfg.hybrid ? hybrid_sde_step(denoiser, schedule, state, t, dt, noise)
                                  : reverse_sde_step(denoiser, schedule, state, t, dt, noise);
                break;
            }
            case SamplerMethod::HeunOde:
                next = probability_flow_step(denoiser, schedule, state, t, dt, cfg.hybrid);
                break;
            case SamplerMethod::ExponentialOde:
                next = exponential_ode_step(denoiser, schedule, state, t, t_next, cfg.hybrid);
                break;
        }
        if (!next.allFinite()) {
            result.ok = false;
            result.error = "non-finite state at t = " + std::to_string(t_next);
            return result;
        }
        if (result.trajectory) {
            result.trajectory->drift_norms.push_back((next - state).norm() / dt);
            result.trajectory->states.push_back(next);
        }
        state = std::move(next);
    }

    const double t_end = grid.back();
    if (result.trajectory) result.trajectory->expectations.push_back(expectation(denoiser, state, t_end, cfg.hybrid));
    result.terminal = state;
    const Denoised last = denoiser.denoise(state.head(d_x), t_end);
    result.x0 = cfg.final_denoise ? last.x0 : Vec(state.head(d_x));
    if (cfg.hybrid) {
        result.y0 = cfg.final_denoise ? last.y0 : Vec(state.tail(d_y));
    } else {
        // two-stage route: read the mask off the denoiser at the least-noise condition
        result.y0 = denoiser.denoise(result.x0, t_end).y0;
    }
    if (!result.x0.allFinite() || !result.y0.allFinite()) {
        result.ok = false;
        result.error = "non-finite final estimate";
    }
    return result;
}

Rng x_stream(std::uint64_t seed, std::size_t i) { return stream_rng(seed, 2 * static_cast<std::uint64_t>(i)); }
Rng y_stream(std::uint64_t seed, std::size_t i) { return stream_rng(seed, 2 * static_cast<std::uint64_t>(i) + 1); }

std::size_t SampleSet::aborted() const {
    std::size_t n = 0;
    for (const auto& r : results) n += r.ok ? 0 : 1;
    return n;
}

std::vector<Vec> SampleSet::joint_samples() const {
    std::vector<Vec> out;
    out.reserve(results.size());
    for (const auto& r : results) {
        if (!r.ok) continue;
        Vec z(r.x0.size() + r.y0.size());
        z << r.x0, r.y0;
        out.push_back(std::move(z));
    }
    return out;
}

SampleSet sample_joint(const Denoiser& denoiser, const Schedule& schedule, const SamplerConfig& cfg, std::size_t n) {
    time_grid(schedule, cfg);  // validates the configuration even when n = 0
    SampleSet set;
    set.results.resize(n);
    parallel_for(n, cfg.jobs, [&](std::size_t i) {
        Rng xr = x_stream(cfg.seed, i);
        Rng yr = y_stream(cfg.seed, i);
        const Vec x_T = standard_normal(xr, denoiser.d_x());
        const Vec y_T = initial_mask(cfg.y_init, denoiser.d_y(), yr);
        try {
            set.results[i] = integrate_trajectory(denoiser, schedule, cfg, x_T, y_T, xr, yr);
        } catch (const std::exception& e) {
            set.results[i].ok = false;
            set.results[i].error = e.what();
        }
    });
    return set;
}

}  // namespace hdm
