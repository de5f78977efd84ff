#include "hdm/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace hdm {

OracleDenoiser::OracleDenoiser(const JointDataset& dataset, Schedule schedule)
    : x_(dataset.x_matrix().transpose()), y_(dataset.y_matrix().transpose()), schedule_(std::move(schedule)) {
    if (dataset.empty()) throw std::invalid_argument("oracle: dataset is empty");
    x_sq_norms_ = x_.rowwise().squaredNorm();
}

void OracleDenoiser::check_query(const Vec& x_t, double t) const {
    if (x_t.size() != x_.cols()) throw std::invalid_argument("oracle: x_t has wrong dimension");
    if (!(t >= schedule_.t_min() && t <= 1.0))
        throw std::domain_error("oracle: t = " + std::to_string(t) + " outside [t_min, 1]");
}

Vec OracleDenoiser::posterior_weights(const Vec& x_t, double t) const {
    check_query(x_t, t);
    const auto [alpha, sigma] = schedule_.alpha_sigma(t);
    // -|x_t - alpha x_i|^2 / (2 sigma^2), expanded so one matrix-vector product suffices
    Vec logits = (2.0 * alpha) * (x_ * x_t) - (alpha * alpha) * x_sq_norms_;
    logits.array() -= x_t.squaredNorm();
    logits /= 2.0 * sigma * sigma;
    const double peak = logits.maxCoeff();
    Vec w(logits.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double v = logits[i] - peak;
        w[i] = v < -700.0 ? 0.0 : std::exp(v);
    }
    w /= w.sum();
    return w;
}

Denoised OracleDenoiser::denoise(const Vec& x_t, double t) const {
    const Vec w = posterior_weights(x_t, t);
    return {x_.transpose() * w, y_.transpose() * w};
}

Vec OracleDenoiser::score(const Vec& x_t, double t) const {
    const auto [alpha, sigma] = schedule_.alpha_sigma(t);
    const Vec x0 = x_.transpose() * posterior_weights(x_t, t);
    return (alpha * x0 - x_t) / (sigma * sigma);
}

GaussianPriorDenoiser::GaussianPriorDenoiser(int d_x, double variance, Schedule schedule)
    : d_x_(d_x), variance_(variance), schedule_(std::move(schedule)) {
    if (d_x < 1 || !(variance > 0.0)) throw std::invalid_argument("gaussian prior: bad parameters");
}

Denoised GaussianPriorDenoiser::denoise(const Vec& x_t, double t) const {
    if (x_t.size() != d_x_) throw std::invalid_argument("gaussian prior: x_t has wrong dimension");
    const auto [alpha, sigma] = schedule_.alpha_sigma(t);
    const double gain = alpha * variance_ / (alpha * alpha * variance_ + sigma * sigma);
    return {gain * x_t, Vec(0)};
}

}  // namespace hdm
