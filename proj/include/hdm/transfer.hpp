#pragma once

#include "hdm/config.hpp"
#include "hdm/csv.hpp"
#include "hdm/dataset.hpp"
#include "hdm/mlp.hpp"
#include "hdm/schedule.hpp"
#include "hdm/training.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hdm {

enum class RegimeKind { Hybrid, Unsupervised, Supervised, None };

std::string to_string(RegimeKind kind);
RegimeKind regime_from_string(const std::string& name);

struct PretrainRegime {
    RegimeKind kind = RegimeKind::Hybrid;
    double lambda = 1e-4;  // hybrid only
};

/// Loss used to pretrain under a regime: the hybrid loss, its lambda = 0
/// image-only form, or the mask-only loss at t_min.
HybridLossConfig regime_loss(const PretrainRegime& regime);
TimeSampling regime_time_sampling(const PretrainRegime& regime);

struct PretrainOutput {
    MlpDenoiser model;
    std::optional<TrainResult> training;  // empty for RegimeKind::None
};

/// Trains a fresh model on domain A under the regime. RegimeKind::None
/// returns the initialization (with a random mask head).
PretrainOutput pretrain_regime(const PretrainRegime& regime, const MlpArchitecture& arch, std::uint64_t init_seed,
                               const JointDataset& domain_a, const Schedule& schedule, const TrainConfig& train_cfg);

enum class FinetuneMethod { Vanilla, Probe };

std::string to_string(FinetuneMethod method);
FinetuneMethod finetune_method_from_string(const std::string& name);

/// Domain B partitioned into a labeled pool, a validation set and a test
/// set; the labeled training set is `budget` samples drawn from the pool.
struct FinetuneData {
    JointDataset train;
    JointDataset validation;
    JointDataset test;
};

/// The pool/validation/test partition depends only on `partition_seed`; the
/// draw of training samples from the pool depends on `draw_seed`.
FinetuneData split_finetune_data(const JointDataset& domain_b, int budget, int pool_size, int n_validation,
                                 std::uint64_t partition_seed, std::uint64_t draw_seed);

/// Mean Jaccard for multi-pixel masks, accuracy for single-label data, with
/// the model evaluated on clean inputs at t_min.
double segmentation_metric(const MlpDenoiser& model, const JointDataset& data, const Schedule& schedule);

/// Per-sample decoded classes of the model's mask output at t_min on clean inputs.
std::vector<std::vector<int>> predict_classes(const MlpDenoiser& model, const JointDataset& data,
                                              const Schedule& schedule);

/// Metric over a dataset given predicted classes (Jaccard or accuracy as above).
double metric_for(const JointDataset& data, const std::vector<std::vector<int>>& pred);

struct FinetuneConfig {
    AdamConfig adam{2e-4, 0.95, 0.99, 1e-8, 1e-6, 0};
    int batch_size = 12;
    int patience = 20;
    int max_epochs = 400;
    bool force_head_replacement = false;
    std::uint64_t seed = 0;
};

struct FinetuneResult {
    MlpDenoiser model;  // best validation epoch
    double zero_shot_validation = 0.0;
    double validation_metric = 0.0;
    double test_metric = 0.0;
    int best_epoch = 0;
    int epochs_run = 0;
    bool head_replaced = false;
    std::vector<double> train_loss;         // per iteration
    std::vector<double> validation_curve;   // per epoch, starting with epoch 0
};

/// Cross-entropy fine-tuning of every weight at t = t_min on clean inputs,
/// with early stopping on the validation metric.
FinetuneResult vanilla_finetune(const MlpDenoiser& pretrained, const FinetuneData& data, const Schedule& schedule,
                                const FinetuneConfig& cfg);

struct ProbeConfig {
    std::vector<double> times;  // empty: {t_min, 0.1, 0.25}
    int hidden = 64;
    AdamConfig adam{1e-3, 0.95, 0.99, 1e-8, 1e-6, 0};
    int batch_images = 4;  // every pixel of each image joins the batch
    int patience = 20;
    int max_epochs = 200;
    std::uint64_t seed = 0;
};

struct ProbeResult {
    Mlp probe;
    double validation_metric = 0.0;
    double test_metric = 0.0;
    int best_epoch = 0;
    int epochs_run = 0;
    int feature_dim = 0;
    std::uint64_t checksum_before = 0;
    std::uint64_t checksum_after = 0;
    std::vector<double> validation_curve;
};

/// Per-pixel probe on frozen features. The feature of pixel p at time t is
/// the backbone's last hidden activation weighted elementwise by the output
/// rows of pixel p (image row and mask rows), on inputs noised with fixed
/// draws; features of all probe times are concatenated. One hidden SiLU
/// layer, cross-entropy, early stopping on the validation metric.
ProbeResult feature_probe(const MlpDenoiser& backbone, const FinetuneData& data, const Schedule& schedule,
                          const ProbeConfig& cfg);

std::uint64_t weights_checksum(const MlpDenoiser& model);

/// Domain A pretraining: up to 20000 iterations, validation every 100
/// iterations, patience 10.
TrainConfig default_pretrain();

struct ComparisonConfig {
    ScheduleParams schedule;
    DatasetConfig domain_a;
    DatasetConfig domain_b;
    ModelConfig model;
    TrainConfig pretrain = default_pretrain();
    double lambda = 1e-4;
    std::vector<RegimeKind> regimes = {RegimeKind::Hybrid, RegimeKind::Unsupervised, RegimeKind::Supervised,
                                       RegimeKind::None};
    std::vector<FinetuneMethod> methods = {FinetuneMethod::Vanilla, FinetuneMethod::Probe};
    std::vector<int> budgets = {20};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    int pool_size = 100;
    int n_validation = 40;
    std::uint64_t partition_seed = 0;
    FinetuneConfig finetune;
    ProbeConfig probe;
    int jobs = 1;
};

ComparisonConfig comparison_from_json(const json& j);
json to_json(const ComparisonConfig& c);

struct CellResult {
    RegimeKind regime = RegimeKind::Hybrid;
    FinetuneMethod method = FinetuneMethod::Vanilla;
    int budget = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    double metric = 0.0;       // test metric
    double validation = 0.0;
    double zero_shot = 0.0;    // validation metric before fine-tuning (vanilla only)
    int best_epoch = 0;
    std::string error;
};

struct CellSummary {
    RegimeKind regime;
    FinetuneMethod method;
    int budget;
    int n = 0;       // successful seeds
    int failed = 0;
    double mean = 0.0;
    double std = 0.0;  // population standard deviation over seeds
};

struct ExperimentReport {
    std::vector<CellResult> cells;  // regime-major, then method, budget, seed

    std::vector<CellSummary> summary() const;
    /// regime, method, budget, seed, metric, plus status columns
    CsvTable csv() const;
    json to_json() const;
};

using Progress = std::function<void(const std::string&)>;

/// Pretrains each regime once on domain A (unless supplied in `pretrained`),
/// then fine-tunes every (regime, method, budget, seed) cell on domain B.
/// Failed cells are recorded and the run continues.
ExperimentReport run_comparison(const ComparisonConfig& cfg, std::map<RegimeKind, MlpDenoiser> pretrained = {},
                                const Progress& progress = {});

}  // namespace hdm
