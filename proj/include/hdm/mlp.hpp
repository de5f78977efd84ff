#pragma once

#include "hdm/common.hpp"
#include "hdm/denoiser.hpp"
#include "hdm/schedule.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace hdm {

struct Layer {
    Mat W;  // out x in
    Vec b;  // out
};

/// Parameters (or gradients) of a stack of dense layers.
using LayerStack = std::vector<Layer>;

LayerStack zeros_like(const LayerStack& layers);
std::size_t parameter_count(const LayerStack& layers);
/// Flattened in layer order: W row-major, then b.
std::vector<double> flatten(const LayerStack& layers);
void unflatten(std::span<const double> values, LayerStack& layers);
double squared_norm(const LayerStack& layers);

enum class FinalInit { Zero, Random };

/// Dense network with SiLU hidden activations and a linear output layer.
/// Inputs and outputs are column batches.
class Mlp {
public:
    struct Cache {
        std::vector<Mat> pre;  // pre-activations per layer
        std::vector<Mat> act;  // act[0] = input, act[l] = silu(pre[l-1]) for hidden layers
    };

    Mlp() = default;
    Mlp(std::vector<int> widths, std::uint64_t seed, FinalInit final_init);

    const std::vector<int>& widths() const { return widths_; }
    int input_dim() const { return widths_.front(); }
    int output_dim() const { return widths_.back(); }
    std::size_t depth() const { return layers_.size(); }

    LayerStack& layers() { return layers_; }
    const LayerStack& layers() const { return layers_; }
    /// Replaces all layers; widths are re-derived and must chain.
    void assign(LayerStack layers);

    Mat forward(const Mat& input, Cache* cache = nullptr) const;
    /// Gradients for output sensitivity d_out (same shape as forward output).
    LayerStack backward(const Cache& cache, const Mat& d_out) const;

private:
    std::vector<int> widths_;
    LayerStack layers_;
};

struct MlpArchitecture {
    int d_x = 1;
    int d_y = 0;
    std::vector<int> hidden = {128, 128, 128};
    int time_frequencies = 16;

    int input_dim() const { return d_x + 2 * time_frequencies; }
    int output_dim() const { return d_x + d_y; }
    bool operator==(const MlpArchitecture&) const = default;
};

/// Sinusoidal features sin(w_k t), cos(w_k t) with w_k log-spaced in [1, 1000].
Vec time_embedding(double t, int frequencies);

/// Time-conditioned MLP predicting (x0_hat, y0_hat) directly. The first d_x
/// outputs are the image estimate, the last d_y the mask estimate (no
/// squashing, so they estimate E[y | x_t] under an MSE objective).
class MlpDenoiser final : public Denoiser {
public:
    MlpDenoiser() = default;
    MlpDenoiser(MlpArchitecture arch, std::uint64_t seed, FinalInit final_init = FinalInit::Zero);

    const MlpArchitecture& architecture() const { return arch_; }
    int d_x() const override { return arch_.d_x; }
    int d_y() const override { return arch_.d_y; }

    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }

    /// Column batch input [x_t; embed(t)].
    Mat make_input(const Mat& x_t, std::span<const double> t) const;
    Mat forward_batch(const Mat& x_t, std::span<const double> t, Mlp::Cache* cache = nullptr) const;
    Denoised denoise(const Vec& x_t, double t) const override;

    /// Hidden-layer activations for one input, concatenated in layer order.
    Vec hidden_features(const Vec& x_t, double t) const;
    int hidden_feature_dim() const;

    /// Re-draws the output rows of the mask head with the given class count.
    void replace_mask_head(int new_d_y, std::uint64_t seed);

private:
    MlpArchitecture arch_;
    Mlp net_;
};

struct HybridLossConfig {
    double lambda = 1e-4;
    bool snr_weighting = true;   // multiply by alpha_t^2 / sigma_t^2
    double image_weight = 1.0;   // 0 gives a mask-only objective

    static HybridLossConfig mask_only() { return {1.0, false, 0.0}; }
};

/// (alpha^2/sigma^2) (|x - x_hat|^2 / d_x + lambda |y - y_hat|^2 / d_y)
double hybrid_loss(const HybridLossConfig& cfg, const Schedule& schedule, const Vec& x, const Vec& y,
                   const Vec& x_hat, const Vec& y_hat, double t);

struct LossBatch {
    Mat x;  // d_x x B clean images
    Mat y;  // d_y x B clean masks
    Mat x_t;
    std::vector<double> t;
};

struct LossAndGradient {
    double loss = 0.0;
    LayerStack grad;
};

/// Mean hybrid loss over the batch and its exact gradient.
LossAndGradient hybrid_loss_and_gradient(const MlpDenoiser& model, const HybridLossConfig& cfg,
                                         const Schedule& schedule, const LossBatch& batch);

/// Draws t ~ U[t_min, 1] and x_t = alpha_t x + sigma_t eps per column.
LossBatch make_noised_batch(const Mat& x, const Mat& y, const Schedule& schedule, Rng& rng);

/// Per-pixel mean cross-entropy between softmax(logits) blocks and classes.
struct CrossEntropyResult {
    double loss = 0.0;
    Mat d_logits;
};
CrossEntropyResult cross_entropy(const Mat& logits, const std::vector<std::vector<int>>& classes, int K);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.95;
    double beta2 = 0.99;
    double epsilon = 1e-8;
    double weight_decay = 1e-6;
    int warmup_steps = 0;
};

/// AdamW with linear warm-up and a constant rate afterwards.
class Adam {
public:
    Adam(AdamConfig cfg, const LayerStack& params);
    void step(LayerStack& params, const LayerStack& grad);
    long steps() const { return step_; }
    double current_rate() const;

private:
    AdamConfig cfg_;
    LayerStack m_;
    LayerStack v_;
    long step_ = 0;
};

}  // namespace hdm
