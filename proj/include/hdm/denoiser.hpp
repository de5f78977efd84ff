#pragma once

#include "hdm/common.hpp"

namespace hdm {

/// Estimates (E[x0 | x_t], E[y0 | x_t]) from the noisy image alone.
struct Denoised {
    Vec x0;
    Vec y0;
};

class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual int d_x() const = 0;
    virtual int d_y() const = 0;
    virtual Denoised denoise(const Vec& x_t, double t) const = 0;
};

}  // namespace hdm
