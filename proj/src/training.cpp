#include "hdm/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hdm {

double mask_head_grad_norm(const LayerStack& grad, int d_x) {
    const Layer& last = grad.back();
    const Eigen::Index d_y = last.W.rows() - d_x;
    if (d_y <= 0) return 0.0;
    return std::sqrt(last.W.bottomRows(d_y).squaredNorm() + last.b.tail(d_y).squaredNorm());
}

namespace {

struct ValidationSet {
    LossBatch batch;
};

ValidationSet make_validation(const JointDataset& data, const Schedule& schedule, const TrainConfig& cfg) {
    const Mat x = data.x_matrix();
    const Mat y = data.y_matrix();
    const Eigen::Index n = x.cols();
    const Eigen::Index draws = std::max(1, cfg.validation_draws);
    Mat xs(x.rows(), n * draws);
    Mat ys(y.rows(), n * draws);
    for (Eigen::Index d = 0; d < draws; ++d) {
        xs.middleCols(d * n, n) = x;
        ys.middleCols(d * n, n) = y;
    }
    Rng rng(splitmix64(cfg.seed ^ 0x76616cULL));
    if (cfg.time_sampling == TimeSampling::Uniform) return {make_noised_batch(xs, ys, schedule, rng)};
    return {LossBatch{xs, ys, xs, std::vector<double>(static_cast<std::size_t>(xs.cols()), schedule.t_min())}};
}

double evaluate(const MlpDenoiser& model, const HybridLossConfig& loss_cfg, const Schedule& schedule,
                const LossBatch& batch) {
    const Mat out = model.forward_batch(batch.x_t, batch.t);
    double total = 0.0;
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
        total += hybrid_loss(loss_cfg, schedule, batch.x.col(c), batch.y.col(c), out.col(c).head(model.d_x()),
                             out.col(c).tail(model.d_y()), batch.t[static_cast<std::size_t>(c)]);
    }
    return total / static_cast<double>(out.cols());
}

}  // namespace

TrainResult train(MlpDenoiser model, const JointDataset& dataset, const Schedule& schedule,
                  const TrainConfig& cfg, const HybridLossConfig& loss_cfg) {
    if (cfg.patience < 1) throw std::invalid_argument("train: patience must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (cfg.iterations < 0) throw std::invalid_argument("train: iterations must be >= 0");
    if (loss_cfg.lambda < 0.0) throw std::invalid_argument("train: lambda must be >= 0");
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (model.d_x() != dataset.d_x() || model.d_y() != dataset.d_y())
        throw std::invalid_argument("train: model and dataset dimensions differ");

    JointDataset train_set = dataset;
    JointDataset val_set = dataset;
    if (cfg.validation_fraction > 0.0) {
        const auto n = dataset.size();
        if (n < 2) throw std::invalid_argument("train: need >= 2 samples for a validation split");
        const auto n_val = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::lround(cfg.validation_fraction * static_cast<double>(n))), 1, n - 1);
        auto [tr, va] = dataset.split(n - n_val, cfg.seed);
        train_set = std::move(tr);
        val_set = std::move(va);
    }
    const Mat train_x = train_set.x_matrix();
    const Mat train_y = train_set.y_matrix();
    const ValidationSet validation = make_validation(val_set, schedule, cfg);

    TrainResult result;
    result.initial_validation_loss = evaluate(model, loss_cfg, schedule, validation.batch);
    result.best_validation_loss = result.initial_validation_loss;
    result.model = model;
    if (!std::isfinite(result.initial_validation_loss))
        throw DivergenceError("train: initial validation loss is not finite");

    const long n_train = static_cast<long>(train_set.size());
    const int epoch_iters = cfg.epoch_iterations > 0
                                ? cfg.epoch_iterations
                                : static_cast<int>(std::max<long>(1, (n_train + cfg.batch_size - 1) / cfg.batch_size));

    Adam adam(cfg.adam, model.net().layers());
    Rng rng(splitmix64(cfg.seed ^ 0x747261696eULL));
    std::uniform_int_distribution<long> pick(0, n_train - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform_t(schedule.t_min(), 1.0);

    int epoch = 0;
    int since_best = 0;
    long iteration = 0;
    while (iteration < cfg.iterations) {
        for (int k = 0; k < epoch_iters && iteration < cfg.iterations; ++k, ++iteration) {
            LossBatch batch{Mat(train_x.rows(), cfg.batch_size), Mat(train_y.rows(), cfg.batch_size),
                            Mat(train_x.rows(), cfg.batch_size),
                            std::vector<double>(static_cast<std::size_t>(cfg.batch_size))};
            for (int c = 0; c < cfg.batch_size; ++c) {
                const long i = pick(rng);
                batch.x.col(c) = train_x.col(i);
                batch.y.col(c) = train_y.col(i);
                if (cfg.time_sampling == TimeSampling::Uniform) {
                    const double t = uniform_t(rng);
                    const auto [alpha, sigma] = schedule.alpha_sigma(t);
                    batch.t[static_cast<std::size_t>(c)] = t;
                    for (Eigen::Index r = 0; r < batch.x.rows(); ++r)
                        batch.x_t(r, c) = alpha * batch.x(r, c) + sigma * normal(rng);
                } else {
                    batch.t[static_cast<std::size_t>(c)] = schedule.t_min();
                    batch.x_t.col(c) = batch.x.col(c);
                }
                result.max_t_seen = std::max(result.max_t_seen, batch.t[static_cast<std::size_t>(c)]);
            }
            LossAndGradient lg = hybrid_loss_and_gradient(model, loss_cfg, schedule, batch);
            if (!std::isfinite(lg.loss))
                throw DivergenceError("train: non-finite loss at iteration " + std::to_string(iteration + 1));
            result.train_loss.push_back(lg.loss);
            result.max_mask_head_grad_norm =
                std::max(result.max_mask_head_grad_norm, mask_head_grad_norm(lg.grad, model.d_x()));
            adam.step(model.net().layers(), lg.grad);
        }
        ++epoch;
        const double val = evaluate(model, loss_cfg, schedule, validation.batch);
        if (!std::isfinite(val))
            throw DivergenceError("train: non-finite validation loss after epoch " + std::to_string(epoch));
        result.epochs.push_back({epoch, iteration, val});
        if (val < result.best_validation_loss) {
            result.best_validation_loss = val;
            result.best_epoch = epoch;
            result.model = model;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            result.stopped_early = true;
            break;
        }
    }
    result.iterations_run = iteration;
    return result;
}

}  // namespace hdm
