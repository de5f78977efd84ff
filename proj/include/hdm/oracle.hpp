#pragma once

#include "hdm/dataset.hpp"
#include "hdm/denoiser.hpp"
#include "hdm/schedule.hpp"

namespace hdm {

/// Exact posterior-mean denoiser for the empirical distribution of a dataset.
///
/// With atoms x_i, the posterior over atoms given x_t is
/// w_i ∝ exp(-|x_t - alpha_t x_i|^2 / (2 sigma_t^2)); the estimate is the
/// w-weighted mean of (x_i, y_i). Queries are const and thread-safe.
class OracleDenoiser final : public Denoiser {
public:
    OracleDenoiser(const JointDataset& dataset, Schedule schedule);

    int d_x() const override { return static_cast<int>(x_.cols()); }
    int d_y() const override { return static_cast<int>(y_.cols()); }
    std::size_t size() const { return static_cast<std::size_t>(x_.rows()); }
    const Schedule& schedule() const { return schedule_; }

    Vec posterior_weights(const Vec& x_t, double t) const;
    Denoised denoise(const Vec& x_t, double t) const override;
    /// Tweedie: grad log p_t(x_t) = (alpha_t E[x0|x_t] - x_t) / sigma_t^2
    Vec score(const Vec& x_t, double t) const;

private:
    void check_query(const Vec& x_t, double t) const;

    Mat x_;  // N x d_x, one atom per row
    Mat y_;  // N x d_y
    Vec x_sq_norms_;
    Schedule schedule_;
};

/// Posterior mean for data distributed as N(0, variance I) (no labels).
/// E[x0 | x_t] = alpha variance x_t / (alpha^2 variance + sigma^2).
class GaussianPriorDenoiser final : public Denoiser {
public:
    GaussianPriorDenoiser(int d_x, double variance, Schedule schedule);

    int d_x() const override { return d_x_; }
    int d_y() const override { return 0; }
    Denoised denoise(const Vec& x_t, double t) const override;

private:
    int d_x_;
    double variance_;
    Schedule schedule_;
};

}  // namespace hdm
