#pragma once

#include "hdm/dataset.hpp"
#include "hdm/mlp.hpp"
#include "hdm/schedule.hpp"

#include <cstdint>
#include <vector>

namespace hdm {

enum class TimeSampling {
    Uniform,      // t ~ U[t_min, 1], x_t = alpha_t x + sigma_t eps
    CleanAtTMin,  // t = t_min, x_t = x
};

struct TrainConfig {
    AdamConfig adam{1e-3, 0.95, 0.99, 1e-8, 1e-6, 100};
    int batch_size = 64;
    long iterations = 2000;
    int patience = 20;
    int epoch_iterations = 0;          // 0: ceil(n_train / batch_size)
    double validation_fraction = 0.1;  // 0: validate on the training set
    int validation_draws = 4;          // fixed (t, eps) draws per validation sample
    TimeSampling time_sampling = TimeSampling::Uniform;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    int epoch = 0;
    long iteration = 0;
    double validation_loss = 0.0;
};

struct TrainResult {
    MlpDenoiser model;  // best validation checkpoint
    std::vector<double> train_loss;  // per iteration, evaluated before the update
    std::vector<EpochRecord> epochs;
    double initial_validation_loss = 0.0;
    double best_validation_loss = 0.0;
    int best_epoch = 0;  // 0 = initial weights
    bool stopped_early = false;
    long iterations_run = 0;
    double max_mask_head_grad_norm = 0.0;
    double max_t_seen = 0.0;
};

/// Norm of the gradient rows feeding the mask outputs.
double mask_head_grad_norm(const LayerStack& grad, int d_x);

/// Adam training on the hybrid loss with per-epoch validation, early
/// stopping after `patience` epochs without improvement, and best-checkpoint
/// selection. Deterministic for a fixed seed. Throws DivergenceError on a
/// non-finite loss.
TrainResult train(MlpDenoiser model, const JointDataset& dataset, const Schedule& schedule,
                  const TrainConfig& cfg, const HybridLossConfig& loss_cfg);

}  // namespace hdm
