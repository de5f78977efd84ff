#pragma once

#include <string>
#include <vector>

namespace hdm {

enum class ScheduleKind { LinearVP, CosineVP };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

struct AlphaSigma {
    double alpha;
    double sigma;
};

struct DriftDiffusion {
    double f;   // d log(alpha)/dt
    double g2;  // d(sigma^2)/dt - 2 f sigma^2
};

struct DiscreteEntry {
    double beta;
    double alpha_bar;
    double alpha;
    double sigma;
};

struct ScheduleParams {
    ScheduleKind kind = ScheduleKind::LinearVP;
    double beta_min = 0.1;
    double beta_max = 20.0;
    int T_discrete = 1000;
    double beta_start = 1e-4;  // discrete table only
    double beta_end = 0.02;    // discrete table only
    double t_min = 1e-3;
    double t_max = 1.0;
};

/// Variance-preserving noise schedule on t in [0, 1].
///
/// For linear-VP, beta(t) = beta_min + t (beta_max - beta_min) and
/// alpha_t = exp(-1/2 int_0^t beta). The cosine variant follows the
/// squared-cosine alpha_bar with a small offset and is truncated so that
/// alpha_1 stays strictly positive.
class Schedule {
public:
    Schedule() : Schedule(ScheduleParams{}) {}
    explicit Schedule(const ScheduleParams& params);

    /// Continuous linear-VP schedule matched to a discrete DDPM beta table:
    /// beta_min/max = -T log(1 - beta_start/end).
    static Schedule matched_to_discrete(int T_discrete, double beta_start,
                                        double beta_end, double t_min = 1e-3);

    const ScheduleParams& params() const { return params_; }
    ScheduleKind kind() const { return params_.kind; }
    double t_min() const { return params_.t_min; }
    double t_max() const { return params_.t_max; }

    AlphaSigma alpha_sigma(double t) const;
    DriftDiffusion drift_diffusion(double t) const;
    double beta(double t) const;
    double log_alpha(double t) const;

    /// log(alpha_t^2 / sigma_t^2)
    double log_snr(double t) const;

    std::vector<DiscreteEntry> discrete_table() const;

private:
    void check_time(double t) const;
    double cosine_angle(double t) const;

    ScheduleParams params_;
    double cos_offset_angle_ = 0.0;
    double cos_end_angle_ = 0.0;
};

}  // namespace hdm
