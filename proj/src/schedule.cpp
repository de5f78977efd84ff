#include "hdm/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hdm {

namespace {
constexpr double kCosineOffset = 0.008;
constexpr double kCosineAlphaEnd = 5e-3;
}  // namespace

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::LinearVP: return "linear-VP";
        case ScheduleKind::CosineVP: return "cosine-VP";
    }
    return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
    if (name == "linear-VP" || name == "linear") return ScheduleKind::LinearVP;
    if (name == "cosine-VP" || name == "cosine") return ScheduleKind::CosineVP;
    throw std::invalid_argument("unknown schedule kind '" + name + "'");
}

Schedule::Schedule(const ScheduleParams& params) : params_(params) {
    if (params_.kind == ScheduleKind::LinearVP) {
        if (!(params_.beta_min > 0.0) || !(params_.beta_max >= params_.beta_min))
            throw std::invalid_argument("schedule: need 0 < beta_min <= beta_max");
    }
    if (params_.T_discrete < 1) throw std::invalid_argument("schedule: T_discrete must be >= 1");
    if (!(params_.t_min > 0.0 && params_.t_min < 1.0))
        throw std::invalid_argument("schedule: t_min must lie in (0, 1)");
    if (params_.t_max != 1.0) throw std::invalid_argument("schedule: t_max must be 1");
    if (!(params_.beta_start > 0.0 && params_.beta_end < 1.0 && params_.beta_start <= params_.beta_end))
        throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1");

    cos_offset_angle_ = kCosineOffset / (1.0 + kCosineOffset) * std::numbers::pi / 2.0;
    cos_end_angle_ = std::acos(kCosineAlphaEnd * std::cos(cos_offset_angle_));
}

Schedule Schedule::matched_to_discrete(int T_discrete, double beta_start, double beta_end,
                                       double t_min) {
    ScheduleParams p;
    p.kind = ScheduleKind::LinearVP;
    p.T_discrete = T_discrete;
    p.beta_start = beta_start;
    p.beta_end = beta_end;
    p.beta_min = -T_discrete * std::log1p(-beta_start);
    p.beta_max = -T_discrete * std::log1p(-beta_end);
    p.t_min = t_min;
    return Schedule(p);
}

void Schedule::check_time(double t) const {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::domain_error("schedule: t = " + std::to_string(t) + " outside [0, 1]");
}

double Schedule::cosine_angle(double t) const {
    return cos_offset_angle_ + t * (cos_end_angle_ - cos_offset_angle_);
}

double Schedule::log_alpha(double t) const {
    check_time(t);
    switch (params_.kind) {
        case ScheduleKind::LinearVP:
            return -0.25 * t * t * (params_.beta_max - params_.beta_min) - 0.5 * t * params_.beta_min;
        case ScheduleKind::CosineVP:
            return std::log(std::cos(cosine_angle(t)) / std::cos(cos_offset_angle_));
    }
    return 0.0;
}

AlphaSigma Schedule::alpha_sigma(double t) const {
    const double la = log_alpha(t);
    const double alpha = std::exp(la);
    // sigma^2 = 1 - alpha^2 without cancellation near t = 0
    const double sigma = std::sqrt(-std::expm1(2.0 * la));
    return {alpha, sigma};
}

double Schedule::beta(double t) const {
    check_time(t);
    switch (params_.kind) {
        case ScheduleKind::LinearVP:
            return params_.beta_min + t * (params_.beta_max - params_.beta_min);
        case ScheduleKind::CosineVP:
            return 2.0 * std::tan(cosine_angle(t)) * (cos_end_angle_ - cos_offset_angle_);
    }
    return 0.0;
}

DriftDiffusion Schedule::drift_diffusion(double t) const {
    // VP: sigma^2 = 1 - alpha^2 gives g^2 = -2 f (alpha^2 + sigma^2) = beta.
    const double b = beta(t);
    return {-0.5 * b, b};
}

double Schedule::log_snr(double t) const {
    const double la = log_alpha(t);
    return 2.0 * la - std::log(-std::expm1(2.0 * la));
}

std::vector<DiscreteEntry> Schedule::discrete_table() const {
    const int T = params_.T_discrete;
    std::vector<DiscreteEntry> table;
    table.reserve(static_cast<std::size_t>(T));
    double log_alpha_bar = 0.0;
    for (int i = 1; i <= T; ++i) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(i - 1) / (T - 1);
        const double b = params_.beta_start + frac * (params_.beta_end - params_.beta_start);
        log_alpha_bar += std::log1p(-b);
        const double alpha_bar = std::exp(log_alpha_bar);
        table.push_back({b, alpha_bar, std::sqrt(alpha_bar), std::sqrt(-std::expm1(log_alpha_bar))});
    }
    return table;
}

}  // namespace hdm
