#include "hdm/dataset.hpp"
#include "hdm/csv.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace hdm {

JointDataset::JointDataset(std::string name, int d_x, int K, int P,
                           std::vector<JointSample> samples, LabelMap mu)
    : name_(std::move(name)), d_x_(d_x), K_(K), P_(P), samples_(std::move(samples)),
      mu_(std::move(mu)) {
    if (K_ < 1 || P_ < 1 || d_x_ < 1) throw std::invalid_argument("dataset: K, P, d_x must be >= 1");
    for (const auto& s : samples_) {
        if (s.x.size() != d_x_ || s.y.size() != d_y())
            throw std::invalid_argument("dataset '" + name_ + "': inconsistent sample dimensions");
    }
}

Mat JointDataset::x_matrix() const {
    Mat m(d_x_, static_cast<Eigen::Index>(samples_.size()));
    for (std::size_t i = 0; i < samples_.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = samples_[i].x;
    return m;
}

Mat JointDataset::y_matrix() const {
    Mat m(d_y(), static_cast<Eigen::Index>(samples_.size()));
    for (std::size_t i = 0; i < samples_.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = samples_[i].y;
    return m;
}

Mat JointDataset::z_matrix() const {
    Mat m(d_x_ + d_y(), static_cast<Eigen::Index>(samples_.size()));
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        m.col(c).head(d_x_) = samples_[i].x;
        m.col(c).tail(d_y()) = samples_[i].y;
    }
    return m;
}

JointDataset JointDataset::subset(const std::vector<std::size_t>& indices, const std::string& suffix) const {
    std::vector<JointSample> picked;
    picked.reserve(indices.size());
    for (auto i : indices) picked.push_back(samples_.at(i));
    return JointDataset(name_ + suffix, d_x_, K_, P_, std::move(picked), mu_);
}

std::pair<JointDataset, JointDataset> JointDataset::split(std::size_t n_first, std::uint64_t seed) const {
    if (n_first > samples_.size()) throw std::invalid_argument("dataset split: n_first exceeds size");
    std::vector<std::size_t> order(samples_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(splitmix64(seed));
    // Fisher-Yates with an explicit uniform draw so the permutation does not
    // depend on the standard library's shuffle implementation.
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = rng() % i;
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::size_t> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_first));
    std::vector<std::size_t> second(order.begin() + static_cast<std::ptrdiff_t>(n_first), order.end());
    return {subset(first, ":a"), subset(second, ":b")};
}

void JointDataset::write_csv(std::ostream& out) const {
    std::vector<std::string> header;
    for (int i = 0; i < d_x_; ++i) header.push_back("x" + std::to_string(i));
    for (int i = 0; i < d_y(); ++i) header.push_back("y" + std::to_string(i));
    CsvTable table(std::move(header));
    std::vector<std::string> row;
    for (const auto& s : samples_) {
        row.clear();
        for (int i = 0; i < d_x_; ++i) row.push_back(format_number(s.x[i]));
        for (int i = 0; i < d_y(); ++i) row.push_back(format_number(s.y[i]));
        table.add_row(row);
    }
    out << table.text();
}

std::vector<int> decode_classes(const Vec& y, int K) {
    if (K < 1 || y.size() % K != 0) throw std::invalid_argument("decode_classes: size not a multiple of K");
    const auto P = y.size() / K;
    std::vector<int> classes(static_cast<std::size_t>(P));
    for (Eigen::Index p = 0; p < P; ++p) {
        Eigen::Index best = 0;
        y.segment(p * K, K).maxCoeff(&best);
        classes[static_cast<std::size_t>(p)] = static_cast<int>(best);
    }
    return classes;
}

Vec one_hot_blocks(const std::vector<int>& classes, int K) {
    Vec y = Vec::Zero(static_cast<Eigen::Index>(classes.size()) * K);
    for (std::size_t p = 0; p < classes.size(); ++p) {
        if (classes[p] < 0 || classes[p] >= K) throw std::out_of_range("one_hot_blocks: class out of range");
        y[static_cast<Eigen::Index>(p) * K + classes[p]] = 1.0;
    }
    return y;
}

namespace {

struct NearestMeanLabeler {
    std::vector<Vec> means;
    std::vector<int> classes;
    int K;

    Vec operator()(const Vec& x) const {
        std::size_t best = 0;
        double best_d = (x - means[0]).squaredNorm();
        for (std::size_t k = 1; k < means.size(); ++k) {
            const double d = (x - means[k]).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        return one_hot_blocks({classes[best]}, K);
    }
};

}  // namespace

JointDataset make_gaussian_mixture(const MixtureParams& p) {
    if (p.n_samples <= 0) throw std::invalid_argument("make_gaussian_mixture: n_samples must be > 0");
    if (p.n_components < 1 || p.d_x < 1) throw std::invalid_argument("make_gaussian_mixture: bad dimensions");
    if (p.K < 1 || p.K > p.n_components)
        throw std::invalid_argument("make_gaussian_mixture: need 1 <= K <= n_components");
    if (!p.shift.empty() && static_cast<int>(p.shift.size()) != p.d_x)
        throw std::invalid_argument("make_gaussian_mixture: shift length must equal d_x");
    if (p.d_x == 1 && p.rotation != 0.0)
        throw std::invalid_argument("make_gaussian_mixture: rotation needs d_x >= 2");

    Vec shift = Vec::Zero(p.d_x);
    for (std::size_t i = 0; i < p.shift.size(); ++i) shift[static_cast<Eigen::Index>(i)] = p.shift[i];
    const double c = std::cos(p.rotation);
    const double s = std::sin(p.rotation);
    auto transform = [&](Vec v) {
        if (p.d_x >= 2) {
            const double a = v[0];
            const double b = v[1];
            v[0] = c * a - s * b;
            v[1] = s * a + c * b;
        }
        return Vec(v + shift);
    };

    NearestMeanLabeler labeler;
    labeler.K = p.K;
    for (int k = 0; k < p.n_components; ++k) {
        Vec m = Vec::Zero(p.d_x);
        if (p.d_x == 1) {
            m[0] = p.n_components == 1 ? 0.0 : -p.radius + 2.0 * p.radius * k / (p.n_components - 1);
        } else {
            const double angle = 2.0 * std::numbers::pi * k / p.n_components;
            m[0] = p.radius * std::cos(angle);
            m[1] = p.radius * std::sin(angle);
        }
        labeler.means.push_back(transform(m));
        labeler.classes.push_back(k % p.K);
    }

    Rng rng(splitmix64(p.seed));
    std::uniform_int_distribution<int> pick(0, p.n_components - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<JointSample> samples;
    samples.reserve(static_cast<std::size_t>(p.n_samples));
    for (int i = 0; i < p.n_samples; ++i) {
        const int k = pick(rng);
        Vec x = labeler.means[static_cast<std::size_t>(k)];
        Vec noise(p.d_x);
        for (int d = 0; d < p.d_x; ++d) noise[d] = normal(rng);
        // isotropic noise is rotation invariant, so it is drawn in the transformed frame
        x += p.component_std * noise;
        x = x.cwiseMax(-1.0).cwiseMin(1.0);
        Vec y = labeler(x);
        samples.push_back({std::move(x), std::move(y)});
    }
    return JointDataset("mixture", p.d_x, p.K, 1, std::move(samples), labeler);
}

JointDataset make_atoms(const std::vector<Vec>& points, const std::vector<int>& classes, int K,
                        const std::string& name) {
    if (points.empty() || points.size() != classes.size())
        throw std::invalid_argument("make_atoms: need matching nonempty points and classes");
    NearestMeanLabeler labeler{points, classes, K};
    std::vector<JointSample> samples;
    for (std::size_t i = 0; i < points.size(); ++i) samples.push_back({points[i], one_hot_blocks({classes[i]}, K)});
    return JointDataset(name, static_cast<int>(points[0].size()), K, 1, std::move(samples), labeler);
}

JointDataset make_two_point() {
    return make_atoms({Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)}, {0, 1}, 2, "two-point");
}

bool Shape::covers(int i, int j) const {
    if (kind == ShapeKind::Rectangle) return i >= r0 && i < r1 && j >= c0 && j < c1;
    const double di = i - cr;
    const double dj = j - cc;
    return di * di + dj * dj <= radius * radius;
}

int IntensityBands::classify(double value) const {
    const double pos = (value - kLow - shift) / width();
    const int cls = static_cast<int>(std::floor(pos));
    return std::clamp(cls, 0, K - 1);
}

JointSample render_shapes(int side, int K, const std::vector<Shape>& shapes, const IntensityBands& bands) {
    const int P = side * side;
    Vec x = Vec::Constant(P, bands.center(0));
    std::vector<int> cls(static_cast<std::size_t>(P), 0);
    for (const auto& shape : shapes) {
        if (shape.cls < 0 || shape.cls >= K) throw std::out_of_range("render_shapes: class out of range");
        for (int i = 0; i < side; ++i)
            for (int j = 0; j < side; ++j)
                if (shape.covers(i, j)) {
                    x[i * side + j] = shape.intensity;
                    cls[static_cast<std::size_t>(i * side + j)] = shape.cls;
                }
    }
    return {std::move(x), one_hot_blocks(cls, K)};
}

JointDataset make_shapes(const ShapesParams& p) {
    if (p.side < 1 || p.side > 16) throw std::invalid_argument("make_shapes: side must be in [1, 16]");
    if (p.K < 2) throw std::invalid_argument("make_shapes: K must be >= 2");
    if (p.n_samples <= 0) throw std::invalid_argument("make_shapes: n_samples must be > 0");

    const IntensityBands bands{p.K, p.intensity_shift};
    const double w = bands.width();
    const double spread = 0.3 * w;
    const double texture = std::min(p.texture, 0.15 * w);
    if (bands.center(0) - spread - texture < -1.0 || bands.center(p.K - 1) + spread + texture > 1.0)
        throw std::invalid_argument("make_shapes: intensity_shift pushes intensities outside [-1, 1]");

    Rng rng(splitmix64(p.seed ^ 0x5ea9e5ULL));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> n_shapes(0, p.max_shapes);
    std::uniform_int_distribution<int> pick_cls(1, p.K - 1);

    std::vector<JointSample> samples;
    samples.reserve(static_cast<std::size_t>(p.n_samples));
    for (int n = 0; n < p.n_samples; ++n) {
        std::vector<Shape> shapes;
        const int count = n_shapes(rng);
        for (int s = 0; s < count; ++s) {
            Shape shape;
            shape.kind = unit(rng) < 0.5 ? ShapeKind::Rectangle : ShapeKind::Disc;
            shape.cls = pick_cls(rng);
            shape.intensity = bands.center(shape.cls) + spread * (2.0 * unit(rng) - 1.0);
            auto extent = [&] {
                const double frac = p.min_size + (p.max_size - p.min_size) * unit(rng);
                return std::clamp(frac * p.size_scale * p.side, 1.0, static_cast<double>(p.side));
            };
            if (shape.kind == ShapeKind::Rectangle) {
                const int h = static_cast<int>(std::lround(extent()));
                const int wd = static_cast<int>(std::lround(extent()));
                shape.r0 = static_cast<int>(unit(rng) * (p.side - h + 1));
                shape.c0 = static_cast<int>(unit(rng) * (p.side - wd + 1));
                shape.r1 = shape.r0 + h;
                shape.c1 = shape.c0 + wd;
            } else {
                shape.radius = 0.5 * extent();
                shape.cr = unit(rng) * (p.side - 1);
                shape.cc = unit(rng) * (p.side - 1);
            }
            shapes.push_back(shape);
        }
        JointSample sample = render_shapes(p.side, p.K, shapes, bands);
        for (Eigen::Index i = 0; i < sample.x.size(); ++i) sample.x[i] += texture * (2.0 * unit(rng) - 1.0);
        samples.push_back(std::move(sample));
    }

    const int K = p.K;
    LabelMap mu = [bands, K](const Vec& x) {
        std::vector<int> cls(static_cast<std::size_t>(x.size()));
        for (Eigen::Index i = 0; i < x.size(); ++i) cls[static_cast<std::size_t>(i)] = bands.classify(x[i]);
        return one_hot_blocks(cls, K);
    };
    return JointDataset("shapes", p.side * p.side, p.K, p.side * p.side, std::move(samples), std::move(mu));
}

}  // namespace hdm
