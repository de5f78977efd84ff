#pragma once

#include "hdm/denoiser.hpp"
#include "hdm/schedule.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hdm {

enum class SamplerMethod { EulerMaruyamaSde, HeunOde, ExponentialOde };
enum class TimeGrid { Uniform, Log };

std::string to_string(SamplerMethod method);
SamplerMethod sampler_method_from_string(const std::string& name);
std::string to_string(TimeGrid grid);
TimeGrid time_grid_from_string(const std::string& name);

/// Initial mask state y_T.
struct YInit {
    enum class Kind { Zeros, Constant, RandomNormal };
    Kind kind = Kind::Zeros;
    double value = 0.0;

    /// "zeros", "constant:<c>", or "random"
    static YInit parse(const std::string& text);
    std::string str() const;
};

struct SamplerConfig {
    SamplerMethod method = SamplerMethod::ExponentialOde;
    int steps = 100;
    double t_start = 1.0;
    double t_end = 0.0;  // 0: use the schedule's t_min
    TimeGrid grid = TimeGrid::Uniform;
    YInit y_init;
    bool hybrid = true;             // false: plain x dynamics, y read off the denoiser at t_end
    bool final_denoise = true;      // z_0 = E[z | x_{t_end}]
    bool record_trajectories = false;
    std::uint64_t seed = 0;
    int jobs = 1;
};

/// Strictly decreasing grid of steps + 1 times from t_start to t_end.
std::vector<double> time_grid(const Schedule& schedule, const SamplerConfig& cfg);

/// Reverse-time Euler-Maruyama step of dx = [f x - g^2 score] dt + g dw̄ from t to t - dt.
Vec reverse_sde_step(const Denoiser& denoiser, const Schedule& schedule, const Vec& x_t, double t, double dt,
                     const Vec& noise);

/// Same update applied to z = (x, y), with the expectation E[z | x_t]
/// computed from x_t alone. noise has dimension d_x + d_y.
Vec hybrid_sde_step(const Denoiser& denoiser, const Schedule& schedule, const Vec& z_t, double t, double dt,
                    const Vec& noise);

/// Heun step of the probability-flow ODE from t to t - dt. When `hybrid`
/// the state is z = (x, y); otherwise x only.
Vec probability_flow_step(const Denoiser& denoiser, const Schedule& schedule, const Vec& state, double t,
                          double dt, bool hybrid);

/// First-order exponential integrator: exact in the linear part,
/// z' = (sigma'/sigma) z + (alpha' - alpha sigma'/sigma) E[z | x_t].
Vec exponential_ode_step(const Denoiser& denoiser, const Schedule& schedule, const Vec& state, double t,
                         double t_next, bool hybrid);

struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;          // state at each time (x or z)
    std::vector<Vec> expectations;    // denoiser estimate at each time on the grid
    std::vector<double> drift_norms;  // per step
};

struct TrajectoryResult {
    bool ok = true;
    std::string error;
    Vec x0;
    Vec y0;
    Vec terminal;  // integrated state at t_end, before the final denoise
    std::optional<Trajectory> trajectory;
};

/// Integrates one path from (x_T, y_T). `x_noise` feeds the x block and
/// `y_noise` the y block of SDE increments, so an x path can be frozen while
/// the y noise varies.
TrajectoryResult integrate_trajectory(const Denoiser& denoiser, const Schedule& schedule, const SamplerConfig& cfg,
                                      const Vec& x_T, const Vec& y_T, Rng& x_noise, Rng& y_noise);

/// Initial y_T for the configured policy.
Vec initial_mask(const YInit& policy, int d_y, Rng& rng);

struct SampleSet {
    std::vector<TrajectoryResult> results;  // one per trajectory, in index order
    std::size_t aborted() const;
    std::vector<Vec> joint_samples() const;  // (x0, y0) of successful paths
};

/// Draws x_T ~ N(0, I), y_T per policy, integrates to t_end and applies the
/// final denoise step. Trajectory i uses RNG streams derived from (seed, i),
/// so results do not depend on cfg.jobs.
SampleSet sample_joint(const Denoiser& denoiser, const Schedule& schedule, const SamplerConfig& cfg, std::size_t n);

/// RNG streams used by sample_joint for trajectory i.
Rng x_stream(std::uint64_t seed, std::size_t i);
Rng y_stream(std::uint64_t seed, std::size_t i);

}  // namespace hdm
