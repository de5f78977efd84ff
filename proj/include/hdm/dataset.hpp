#pragma once

#include "hdm/common.hpp"

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace hdm {

struct JointSample {
    Vec x;  // image or point, entries in [-1, 1]
    Vec y;  // P one-hot blocks of size K
};

/// Deterministic labeling map x -> y.
using LabelMap = std::function<Vec(const Vec&)>;

class JointDataset {
public:
    JointDataset() = default;
    JointDataset(std::string name, int d_x, int K, int P, std::vector<JointSample> samples,
                 LabelMap mu);

    const std::string& name() const { return name_; }
    int d_x() const { return d_x_; }
    int d_y() const { return K_ * P_; }
    int K() const { return K_; }
    int P() const { return P_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }

    const JointSample& operator[](std::size_t i) const { return samples_[i]; }
    const std::vector<JointSample>& samples() const { return samples_; }
    const LabelMap& mu() const { return mu_; }
    Vec label(const Vec& x) const { return mu_(x); }

    /// Columns are samples.
    Mat x_matrix() const;
    Mat y_matrix() const;
    /// Columns are concatenated (x, y).
    Mat z_matrix() const;

    JointDataset subset(const std::vector<std::size_t>& indices, const std::string& suffix = "") const;

    /// Seeded shuffle, then the first `n_first` samples go to the first part.
    std::pair<JointDataset, JointDataset> split(std::size_t n_first, std::uint64_t seed) const;

    /// One row per sample: x components then y components.
    void write_csv(std::ostream& out) const;

private:
    std::string name_;
    int d_x_ = 0;
    int K_ = 0;
    int P_ = 0;
    std::vector<JointSample> samples_;
    LabelMap mu_;
};

/// Argmax per one-hot block.
std::vector<int> decode_classes(const Vec& y, int K);
Vec one_hot_blocks(const std::vector<int>& classes, int K);

struct MixtureParams {
    int n_components = 8;
    int n_samples = 2000;
    int d_x = 2;
    int K = 4;
    std::uint64_t seed = 0;
    std::vector<double> shift;  // empty = zero shift
    double rotation = 0.0;      // radians, acts on the first two coordinates
    double radius = 0.6;
    double component_std = 0.08;
};

/// Mixture of isotropic Gaussians with means on a line (d_x = 1) or a circle
/// in the first two coordinates, component k assigned class k mod K and
/// mu(x) = class of the nearest (transformed) mean.
JointDataset make_gaussian_mixture(const MixtureParams& params);

/// Empirical dataset of explicit atoms labeled by nearest atom.
JointDataset make_atoms(const std::vector<Vec>& points, const std::vector<int>& classes, int K,
                        const std::string& name = "atoms");

/// Atoms {-1, +1} in R^1 with classes {0, 1}.
JointDataset make_two_point();

enum class ShapeKind { Rectangle, Disc };

struct Shape {
    ShapeKind kind = ShapeKind::Rectangle;
    int cls = 1;
    double intensity = 0.0;
    // rectangle: rows [r0, r1), cols [c0, c1)
    int r0 = 0, r1 = 0, c0 = 0, c1 = 0;
    // disc: center (cr, cc) and radius, covers (i-cr)^2 + (j-cc)^2 <= radius^2
    double cr = 0.0, cc = 0.0, radius = 0.0;

    bool covers(int i, int j) const;
};

struct ShapesParams {
    int n_samples = 1000;
    int side = 8;
    int K = 3;
    std::uint64_t seed = 0;
    int max_shapes = 3;
    double min_size = 0.25;  // fraction of side
    double max_size = 0.6;
    double size_scale = 1.0;
    double intensity_shift = 0.0;  // moves every class intensity band
    double texture = 0.03;         // per-pixel jitter amplitude, stays inside the band
};

/// Intensity band layout shared by rendering and the labeling map.
struct IntensityBands {
    int K = 3;
    double shift = 0.0;
    static constexpr double kLow = -0.9;
    static constexpr double kHigh = 0.9;

    double width() const { return (kHigh - kLow) / K; }
    double center(int cls) const { return kLow + shift + (cls + 0.5) * width(); }
    int classify(double value) const;
};

/// Renders one sample: background class 0 at its band center, shapes painted
/// in order so the last covering shape wins.
JointSample render_shapes(int side, int K, const std::vector<Shape>& shapes,
                          const IntensityBands& bands);

JointDataset make_shapes(const ShapesParams& params);

}  // namespace hdm
