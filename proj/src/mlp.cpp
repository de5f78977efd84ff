#include "hdm/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace hdm {

LayerStack zeros_like(const LayerStack& layers) {
    LayerStack out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back({Mat::Zero(l.W.rows(), l.W.cols()), Vec::Zero(l.b.size())});
    return out;
}

std::size_t parameter_count(const LayerStack& layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
    return n;
}

std::vector<double> flatten(const LayerStack& layers) {
    std::vector<double> out;
    out.reserve(parameter_count(layers));
    for (const auto& l : layers) {
        for (Eigen::Index r = 0; r < l.W.rows(); ++r)
            for (Eigen::Index c = 0; c < l.W.cols(); ++c) out.push_back(l.W(r, c));
        for (Eigen::Index r = 0; r < l.b.size(); ++r) out.push_back(l.b[r]);
    }
    return out;
}

void unflatten(std::span<const double> values, LayerStack& layers) {
    if (values.size() != parameter_count(layers)) throw std::invalid_argument("unflatten: size mismatch");
    std::size_t k = 0;
    for (auto& l : layers) {
        for (Eigen::Index r = 0; r < l.W.rows(); ++r)
            for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = values[k++];
        for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b[r] = values[k++];
    }
}

double squared_norm(const LayerStack& layers) {
    double s = 0.0;
    for (const auto& l : layers) s += l.W.squaredNorm() + l.b.squaredNorm();
    return s;
}

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Mat silu(const Mat& z) {
    return z.unaryExpr([](double v) { return v * sigmoid(v); });
}

Mat silu_grad(const Mat& z) {
    return z.unaryExpr([](double v) {
        const double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
    });
}

Mat gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * normal(rng);
    return m;
}

}  // namespace

Mlp::Mlp(std::vector<int> widths, std::uint64_t seed, FinalInit final_init) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw std::invalid_argument("mlp: need at least input and output widths");
    for (int w : widths_)
        if (w < 1) throw std::invalid_argument("mlp: widths must be positive");
    Rng rng(splitmix64(seed ^ 0x4d4c50ULL));
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const int in = widths_[l];
        const int out = widths_[l + 1];
        const bool last = l + 2 == widths_.size();
        Layer layer;
        if (last && final_init == FinalInit::Zero) {
            layer.W = Mat::Zero(out, in);
        } else {
            layer.W = gaussian_matrix(out, in, 1.0 / std::sqrt(static_cast<double>(in)), rng);
        }
        layer.b = Vec::Zero(out);
        layers_.push_back(std::move(layer));
    }
}

void Mlp::assign(LayerStack layers) {
    if (layers.empty()) throw std::invalid_argument("mlp: no layers");
    std::vector<int> widths{static_cast<int>(layers.front().W.cols())};
    for (const auto& l : layers) {
        if (l.W.cols() != widths.back() || l.b.size() != l.W.rows())
            throw std::invalid_argument("mlp: layer shapes do not chain");
        widths.push_back(static_cast<int>(l.W.rows()));
    }
    widths_ = std::move(widths);
    layers_ = std::move(layers);
}

Mat Mlp::forward(const Mat& input, Cache* cache) const {
    if (input.rows() != input_dim()) throw std::invalid_argument("mlp: input has wrong dimension");
    if (cache) {
        cache->pre.clear();
        cache->act.clear();
        cache->act.push_back(input);
    }
    Mat a = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Mat z = layers_[l].W * a;
        z.colwise() += layers_[l].b;
        const bool last = l + 1 == layers_.size();
        if (last) {
            if (cache) cache->pre.push_back(z);
            return z;
        }
        a = silu(z);
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->act.push_back(a);
        }
    }
    return a;
}

LayerStack Mlp::backward(const Cache& cache, const Mat& d_out) const {
    if (cache.act.size() != layers_.size()) throw std::invalid_argument("mlp: cache does not match network");
    LayerStack grad(layers_.size());
    Mat delta = d_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        grad[l].W = delta * cache.act[l].transpose();
        grad[l].b = delta.rowwise().sum();
        if (l == 0) break;
        Mat back = layers_[l].W.transpose() * delta;
        delta = back.cwiseProduct(silu_grad(cache.pre[l - 1]));
    }
    return grad;
}

Vec time_embedding(double t, int frequencies) {
    Vec e(2 * frequencies);
    for (int k = 0; k < frequencies; ++k) {
        const double w = frequencies == 1 ? 1.0 : std::exp(std::log(1000.0) * k / (frequencies - 1));
        e[k] = std::sin(w * t);
        e[frequencies + k] = std::cos(w * t);
    }
    return e;
}

MlpDenoiser::MlpDenoiser(MlpArchitecture arch, std::uint64_t seed, FinalInit final_init)
    : arch_(std::move(arch)) {
    if (arch_.d_x < 1 || arch_.d_y < 0 || arch_.time_frequencies < 1 || arch_.hidden.empty())
        throw std::invalid_argument("mlp denoiser: invalid architecture");
    std::vector<int> widths{arch_.input_dim()};
    widths.insert(widths.end(), arch_.hidden.begin(), arch_.hidden.end());
    widths.push_back(arch_.output_dim());
    net_ = Mlp(std::move(widths), seed, final_init);
}

Mat MlpDenoiser::make_input(const Mat& x_t, std::span<const double> t) const {
    if (x_t.rows() != arch_.d_x || static_cast<std::size_t>(x_t.cols()) != t.size())
        throw std::invalid_argument("mlp denoiser: input dimension mismatch");
    Mat input(arch_.input_dim(), x_t.cols());
    input.topRows(arch_.d_x) = x_t;
    for (Eigen::Index c = 0; c < x_t.cols(); ++c)
        input.col(c).tail(2 * arch_.time_frequencies) = time_embedding(t[static_cast<std::size_t>(c)], arch_.time_frequencies);
    return input;
}

Mat MlpDenoiser::forward_batch(const Mat& x_t, std::span<const double> t, Mlp::Cache* cache) const {
    return net_.forward(make_input(x_t, t), cache);
}

Denoised MlpDenoiser::denoise(const Vec& x_t, double t) const {
    const double ts[1] = {t};
    const Mat out = forward_batch(x_t, ts);
    return {out.col(0).head(arch_.d_x), out.col(0).tail(arch_.d_y)};
}

int MlpDenoiser::hidden_feature_dim() const {
    int n = 0;
    for (int h : arch_.hidden) n += h;
    return n;
}

Vec MlpDenoiser::hidden_features(const Vec& x_t, double t) const {
    const double ts[1] = {t};
    Mlp::Cache cache;
    forward_batch(x_t, ts, &cache);
    Vec features(hidden_feature_dim());
    Eigen::Index offset = 0;
    for (std::size_t l = 1; l < cache.act.size(); ++l) {
        features.segment(offset, cache.act[l].rows()) = cache.act[l].col(0);
        offset += cache.act[l].rows();
    }
    return features;
}

void MlpDenoiser::replace_mask_head(int new_d_y, std::uint64_t seed) {
    if (new_d_y < 0) throw std::invalid_argument("replace_mask_head: negative d_y");
    Layer& last = net_.layers().back();
    const Eigen::Index in = last.W.cols();
    Rng rng(splitmix64(seed ^ 0x68656164ULL));
    Mat W(arch_.d_x + new_d_y, in);
    Vec b = Vec::Zero(arch_.d_x + new_d_y);
    W.topRows(arch_.d_x) = last.W.topRows(arch_.d_x);
    b.head(arch_.d_x) = last.b.head(arch_.d_x);
    W.bottomRows(new_d_y) = gaussian_matrix(new_d_y, in, 1.0 / std::sqrt(static_cast<double>(in)), rng);
    last.W = std::move(W);
    last.b = std::move(b);
    arch_.d_y = new_d_y;
    LayerStack layers = net_.layers();
    net_.assign(std::move(layers));
}

double hybrid_loss(const HybridLossConfig& cfg, const Schedule& schedule, const Vec& x, const Vec& y,
                   const Vec& x_hat, const Vec& y_hat, double t) {
    if (x.size() != x_hat.size() || y.size() != y_hat.size())
        throw std::invalid_argument("hybrid_loss: dimension mismatch");
    const auto [alpha, sigma] = schedule.alpha_sigma(t);
    const double weight = cfg.snr_weighting ? alpha * alpha / (sigma * sigma) : 1.0;
    double inner = 0.0;
    if (x.size() > 0) inner += cfg.image_weight * (x - x_hat).squaredNorm() / static_cast<double>(x.size());
    if (y.size() > 0) inner += cfg.lambda * (y - y_hat).squaredNorm() / static_cast<double>(y.size());
    return weight * inner;
}

LossAndGradient hybrid_loss_and_gradient(const MlpDenoiser& model, const HybridLossConfig& cfg,
                                         const Schedule& schedule, const LossBatch& batch) {
    const int d_x = model.d_x();
    const int d_y = model.d_y();
    const Eigen::Index B = batch.x_t.cols();
    if (B == 0) throw std::invalid_argument("hybrid loss: empty batch");
    Mlp::Cache cache;
    const Mat out = model.forward_batch(batch.x_t, batch.t, &cache);
    Mat d_out(out.rows(), out.cols());
    double total = 0.0;
    for (Eigen::Index c = 0; c < B; ++c) {
        const auto [alpha, sigma] = schedule.alpha_sigma(batch.t[static_cast<std::size_t>(c)]);
        const double weight = cfg.snr_weighting ? alpha * alpha / (sigma * sigma) : 1.0;
        const Vec rx = out.col(c).head(d_x) - batch.x.col(c);
        const Vec ry = out.col(c).tail(d_y) - batch.y.col(c);
        const double wx = cfg.image_weight / d_x;
        const double wy = d_y > 0 ? cfg.lambda / d_y : 0.0;
        total += weight * (wx * rx.squaredNorm() + wy * ry.squaredNorm());
        d_out.col(c).head(d_x) = (2.0 * weight * wx / static_cast<double>(B)) * rx;
        d_out.col(c).tail(d_y) = (2.0 * weight * wy / static_cast<double>(B)) * ry;
    }
    return {total / static_cast<double>(B), model.net().backward(cache, d_out)};
}

LossBatch make_noised_batch(const Mat& x, const Mat& y, const Schedule& schedule, Rng& rng) {
    std::uniform_real_distribution<double> uniform(schedule.t_min(), 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    LossBatch batch{x, y, Mat(x.rows(), x.cols()), std::vector<double>(static_cast<std::size_t>(x.cols()))};
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double t = uniform(rng);
        batch.t[static_cast<std::size_t>(c)] = t;
        const auto [alpha, sigma] = schedule.alpha_sigma(t);
        for (Eigen::Index r = 0; r < x.rows(); ++r) batch.x_t(r, c) = alpha * x(r, c) + sigma * normal(rng);
    }
    return batch;
}

CrossEntropyResult cross_entropy(const Mat& logits, const std::vector<std::vector<int>>& classes, int K) {
    const Eigen::Index B = logits.cols();
    if (static_cast<std::size_t>(B) != classes.size() || B == 0)
        throw std::invalid_argument("cross_entropy: batch size mismatch");
    const Eigen::Index P = logits.rows() / K;
    if (P * K != logits.rows()) throw std::invalid_argument("cross_entropy: rows not a multiple of K");
    CrossEntropyResult result{0.0, Mat::Zero(logits.rows(), B)};
    const double scale = 1.0 / static_cast<double>(B * P);
    for (Eigen::Index c = 0; c < B; ++c) {
        const auto& cls = classes[static_cast<std::size_t>(c)];
        if (static_cast<Eigen::Index>(cls.size()) != P) throw std::invalid_argument("cross_entropy: class count mismatch");
        for (Eigen::Index p = 0; p < P; ++p) {
            const auto block = logits.col(c).segment(p * K, K);
            const double peak = block.maxCoeff();
            const Vec e = (block.array() - peak).exp().matrix();
            const double z = e.sum();
            const int target = cls[static_cast<std::size_t>(p)];
            result.loss -= scale * (block[target] - peak - std::log(z));
            auto d = result.d_logits.col(c).segment(p * K, K);
            d = (scale / z) * e;
            d[target] -= scale;
        }
    }
    return result;
}

Adam::Adam(AdamConfig cfg, const LayerStack& params) : cfg_(cfg), m_(zeros_like(params)), v_(zeros_like(params)) {
    if (!(cfg_.learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be > 0");
}

double Adam::current_rate() const {
    const long k = step_ + 1;
    if (cfg_.warmup_steps > 0 && k < cfg_.warmup_steps)
        return cfg_.learning_rate * static_cast<double>(k) / cfg_.warmup_steps;
    return cfg_.learning_rate;
}

void Adam::step(LayerStack& params, const LayerStack& grad) {
    const double lr = current_rate();
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        p.array() -= lr * ((m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon) + cfg_.weight_decay * p.array());
    };
    for (std::size_t l = 0; l < params.size(); ++l) {
        update(params[l].W, grad[l].W, m_[l].W, v_[l].W);
        update(params[l].b, grad[l].b, m_[l].b, v_[l].b);
    }
}

}  // namespace hdm
