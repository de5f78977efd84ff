#pragma once

#include "hdm/config.hpp"
#include "hdm/dataset.hpp"
#include "hdm/denoiser.hpp"
#include "hdm/metrics.hpp"
#include "hdm/oracle.hpp"
#include "hdm/sampler.hpp"
#include "hdm/schedule.hpp"

#include <string>
#include <vector>

namespace hdm {

/// One line of a verification report.
struct CheckResult {
    std::string name;
    double statistic = 0.0;
    double threshold = 0.0;
    bool pass = false;
    json details = json::object();
};

json to_json(const CheckResult& c);

struct VerificationReport {
    std::vector<CheckResult> checks;
    bool all_pass() const;
    json to_json() const;
};

// ---- schedule and score ---------------------------------------------------

/// Max relative error of g^2 against central differences of alpha and sigma,
/// and max |alpha^2 + sigma^2 - 1|, over `points` interior times in [t_min, 1).
struct ScheduleIdentityResult {
    double g2_relative_error = 0.0;
    double f_relative_error = 0.0;
    double vp_error = 0.0;
};
ScheduleIdentityResult check_schedule_identities(const Schedule& schedule, int points);

/// Max relative error of the oracle score against central differences of
/// the exact log-density of the noised empirical distribution.
/// Probes draw t log-uniformly in [t_min, 1] and x_t by noising a random atom.
/// The error is |score - fd|_inf / max(|fd|_inf, 1).
double check_score_finite_differences(const JointDataset& data, const Schedule& schedule, int probes,
                                      std::uint64_t seed);

/// log p_t(x_t) for the noised empirical distribution.
double empirical_log_density(const JointDataset& data, const Schedule& schedule, const Vec& x_t, double t);

// ---- proofs ---------------------------------------------------------------

struct ProofDiagnostics {
    std::vector<double> taus;
    std::vector<double> y_variance;     // across paths, averaged over y coordinates
    std::vector<double> epsilon_curve;  // |E[y|x_t] - E[y|x_0]| along the frozen x path
    double quad_variation_estimate = 0.0;  // variance at the last grid time
    double integral_residual = 0.0;
    bool t_min_is_minimum = false;  // over the grid, excluding t_start where the variance is 0
    int paths = 0;
};

/// Runs the hybrid SDE `paths` times from (x_T, y_T) with one frozen x noise
/// stream and independent y noise streams. cfg.method is forced to
/// Euler-Maruyama.
ProofDiagnostics verify_quadratic_variation(const Denoiser& denoiser, const Schedule& schedule, SamplerConfig cfg,
                                            const Vec& x_T, const Vec& y_T, int paths);

/// (sigma_tau^4 / alpha_tau^2) * int_tau^T alpha_t^2 g^2(t) / sigma_t^4 dt by
/// Simpson's rule in log t.
double ito_isometry_variance(const Schedule& schedule, double tau, double T, int intervals = 4096);

/// y_tau from the integral identity, by product trapezoid quadrature of
/// E[y|x_t] against d(alpha/sigma) on the trajectory's own grid.
std::vector<Vec> integral_identity_quadrature(const Schedule& schedule, const Trajectory& trajectory, int d_y);

/// max over grid times of |y_tau(ODE) - y_tau(quadrature)|_inf.
double ode_integral_identity_residual(const Schedule& schedule, const Trajectory& trajectory, int d_y);

/// Integrates one hybrid trajectory from (x_T, y_T) and returns its residual.
double verify_ode_integral_identity(const Denoiser& denoiser, const Schedule& schedule, SamplerConfig cfg,
                                    const Vec& x_T, const Vec& y_T);

struct YTInvarianceResult {
    double endpoint_deviation = 0.0;   // max pairwise |y_0| difference after the final denoise
    double terminal_deviation = 0.0;   // same for the integrated y at t_end
    double predicted_terminal = 0.0;   // (sigma_end / sigma_start) * max pairwise |y_T| difference
    double prefactor = 0.0;            // sigma_end / sigma_start
    double alpha_start = 0.0;
    int trials = 0;

    /// |terminal / predicted - 1|, 0 when nothing is predicted.
    double prefactor_error() const;
};

/// Shares x_T across trials and integrates each y_T in `y_T_trials`.
YTInvarianceResult verify_yT_invariance(const Denoiser& denoiser, const Schedule& schedule, SamplerConfig cfg,
                                        const Vec& x_T, const std::vector<Vec>& y_T_trials);

/// {0, +1, -1, +100, -100, N(0, I)}
std::vector<Vec> default_yT_trials(int d_y, std::uint64_t seed);

// ---- sampling quality -----------------------------------------------------

struct JointFidelityResult {
    TwoSampleResult energy;       // hybrid samples vs held-out data
    TwoSampleResult route;        // hybrid vs two-stage samples
    double label_agreement = 0.0;  // decoded y_0 == mu(x_0), per pixel
    std::size_t aborted = 0;
};

JointFidelityResult joint_fidelity(const Denoiser& denoiser, const Schedule& schedule, const SamplerConfig& cfg,
                                   const JointDataset& held_out, std::size_t n, int permutations,
                                   std::uint64_t seed);

struct SolverAgreementResult {
    double max_norm = 0.0;  // max over trajectories of |z_fast - z_ref|_inf
    double median = 0.0;
    double p90 = 0.0;
    std::size_t n = 0;
};

/// Compares final (x_0, y_0) of two samplers on shared seeds.
SolverAgreementResult solver_agreement(const Denoiser& denoiser, const Schedule& schedule, const SamplerConfig& fast,
                                       const SamplerConfig& reference, std::size_t n);

// ---- config-driven suite --------------------------------------------------

/// Runs the checks enabled in a verify config (see configs/verify-two-point.json).
/// Unknown keys raise ConfigError.
VerificationReport run_verification(const json& config, int jobs);

}  // namespace hdm
