#include "hdm/transfer.hpp"

#include "hdm/checkpoint.hpp"
#include "hdm/metrics.hpp"
#include "hdm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hdm {

std::string to_string(RegimeKind kind) {
    switch (kind) {
        case RegimeKind::Hybrid: return "hybrid";
        case RegimeKind::Unsupervised: return "unsupervised";
        case RegimeKind::Supervised: return "supervised";
        case RegimeKind::None: return "none";
    }
    return "unknown";
}

RegimeKind regime_from_string(const std::string& name) {
    if (name == "hybrid") return RegimeKind::Hybrid;
    if (name == "unsupervised") return RegimeKind::Unsupervised;
    if (name == "supervised") return RegimeKind::Supervised;
    if (name == "none") return RegimeKind::None;
    throw std::invalid_argument("unknown pretraining regime '" + name + "'");
}

std::string to_string(FinetuneMethod method) { return method == FinetuneMethod::Vanilla ? "vanilla" : "probe"; }

FinetuneMethod finetune_method_from_string(const std::string& name) {
    if (name == "vanilla") return FinetuneMethod::Vanilla;
    if (name == "probe") return FinetuneMethod::Probe;
    throw std::invalid_argument("unknown fine-tuning method '" + name + "'");
}

HybridLossConfig regime_loss(const PretrainRegime& regime) {
    switch (regime.kind) {
        case RegimeKind::Hybrid: return {regime.lambda, true, 1.0};
        case RegimeKind::Unsupervised: return {0.0, true, 1.0};
        case RegimeKind::Supervised: return HybridLossConfig::mask_only();
        case RegimeKind::None: break;
    }
    throw std::invalid_argument("regime 'none' has no pretraining loss");
}

TimeSampling regime_time_sampling(const PretrainRegime& regime) {
    return regime.kind == RegimeKind::Supervised ? TimeSampling::CleanAtTMin : TimeSampling::Uniform;
}

PretrainOutput pretrain_regime(const PretrainRegime& regime, const MlpArchitecture& arch, std::uint64_t init_seed,
                               const JointDataset& domain_a, const Schedule& schedule, const TrainConfig& train_cfg) {
    if (regime.kind == RegimeKind::None) return {MlpDenoiser(arch, init_seed, FinalInit::Random), std::nullopt};
    TrainConfig cfg = train_cfg;
    cfg.time_sampling = regime_time_sampling(regime);
    TrainResult r = train(MlpDenoiser(arch, init_seed), domain_a, schedule, cfg, regime_loss(regime));
    MlpDenoiser model = r.model;
    return {std::move(model), std::move(r)};
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
    return idx;
}

std::vector<std::vector<int>> true_classes(const JointDataset& data) {
    std::vector<std::vector<int>> out;
    out.reserve(data.size());
    for (const auto& s : data.samples()) out.push_back(decode_classes(s.y, data.K()));
    return out;
}

}  // namespace

FinetuneData split_finetune_data(const JointDataset& domain_b, int budget, int pool_size, int n_validation,
                                 std::uint64_t partition_seed, std::uint64_t draw_seed) {
    if (budget < 1) throw std::invalid_argument("fine-tune: labeled budget must be >= 1");
    if (pool_size < budget) throw std::invalid_argument("fine-tune: budget exceeds the labeled pool");
    if (n_validation < 1) throw std::invalid_argument("fine-tune: need at least one validation sample");
    const auto n = domain_b.size();
    if (static_cast<std::size_t>(pool_size) + static_cast<std::size_t>(n_validation) >= n)
        throw std::invalid_argument("fine-tune: domain B too small for pool + validation + test");
    Rng part(splitmix64(partition_seed ^ 0x7061727469ULL));
    const std::vector<std::size_t> order = shuffled(n, part);
    const auto pool_end = order.begin() + pool_size;
    const auto val_end = pool_end + n_validation;
    const std::vector<std::size_t> pool(order.begin(), pool_end);

    Rng draw(splitmix64(draw_seed ^ 0x64726177ULL));
    const std::vector<std::size_t> pick = shuffled(pool.size(), draw);
    std::vector<std::size_t> train_idx;
    for (int i = 0; i < budget; ++i) train_idx.push_back(pool[pick[static_cast<std::size_t>(i)]]);
    return {domain_b.subset(train_idx, "-train"), domain_b.subset({pool_end, val_end}, "-validation"),
            domain_b.subset({val_end, order.end()}, "-test")};
}

std::vector<std::vector<int>> predict_classes(const MlpDenoiser& model, const JointDataset& data,
                                              const Schedule& schedule) {
    if (model.d_x() != data.d_x() || model.d_y() != data.d_y())
        throw std::invalid_argument("predict: model and dataset dimensions differ");
    std::vector<std::vector<int>> out;
    out.reserve(data.size());
    const Mat x = data.x_matrix();
    constexpr Eigen::Index chunk = 256;
    for (Eigen::Index c0 = 0; c0 < x.cols(); c0 += chunk) {
        const Eigen::Index w = std::min(chunk, x.cols() - c0);
        const std::vector<double> t(static_cast<std::size_t>(w), schedule.t_min());
        const Mat out_block = model.forward_batch(x.middleCols(c0, w), t);
        for (Eigen::Index c = 0; c < w; ++c) out.push_back(decode_classes(out_block.col(c).tail(model.d_y()), data.K()));
    }
    return out;
}

double metric_for(const JointDataset& data, const std::vector<std::vector<int>>& pred) {
    const auto truth = true_classes(data);
    return data.P() > 1 ? mean_jaccard(pred, truth, data.K()) : accuracy(pred, truth);
}

double segmentation_metric(const MlpDenoiser& model, const JointDataset& data, const Schedule& schedule) {
    return metric_for(data, predict_classes(model, data, schedule));
}

std::uint64_t weights_checksum(const MlpDenoiser& model) { return fnv1a64(encode_weights(model.net().layers())); }

// ---- vanilla fine-tuning --------------------------------------------------

FinetuneResult vanilla_finetune(const MlpDenoiser& pretrained, const FinetuneData& data, const Schedule& schedule,
                                const FinetuneConfig& cfg) {
    if (data.train.empty()) throw std::invalid_argument("fine-tune: labeled budget must be >= 1");
    if (cfg.batch_size < 1 || cfg.patience < 1 || cfg.max_epochs < 0)
        throw std::invalid_argument("fine-tune: batch_size and patience must be >= 1, max_epochs >= 0");
    if (pretrained.d_x() != data.train.d_x()) throw std::invalid_argument("fine-tune: image dimension differs");

    FinetuneResult result;
    MlpDenoiser model = pretrained;
    if (cfg.force_head_replacement || model.d_y() != data.train.d_y()) {
        model.replace_mask_head(data.train.d_y(), cfg.seed);
        result.head_replaced = true;
    }
    const int d_x = model.d_x();
    const int d_y = model.d_y();
    const int K = data.train.K();
    const Mat x = data.train.x_matrix();
    const auto classes = true_classes(data.train);
    const auto n = static_cast<std::size_t>(x.cols());

    result.zero_shot_validation = segmentation_metric(model, data.validation, schedule);
    result.validation_metric = result.zero_shot_validation;
    result.validation_curve.push_back(result.validation_metric);
    result.model = model;

    Adam adam(cfg.adam, model.net().layers());
    Rng rng(splitmix64(cfg.seed ^ 0x66696e65ULL));
    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const std::vector<std::size_t> order = shuffled(n, rng);
        for (std::size_t b0 = 0; b0 < n; b0 += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t B = std::min(n - b0, static_cast<std::size_t>(cfg.batch_size));
            Mat xb(d_x, static_cast<Eigen::Index>(B));
            std::vector<std::vector<int>> cb;
            for (std::size_t c = 0; c < B; ++c) {
                xb.col(static_cast<Eigen::Index>(c)) = x.col(static_cast<Eigen::Index>(order[b0 + c]));
                cb.push_back(classes[order[b0 + c]]);
            }
            const std::vector<double> t(B, schedule.t_min());
            Mlp::Cache cache;
            const Mat out = model.forward_batch(xb, t, &cache);
            const CrossEntropyResult ce = cross_entropy(out.bottomRows(d_y), cb, K);
            if (!std::isfinite(ce.loss))
                throw DivergenceError("fine-tune: non-finite loss in epoch " + std::to_string(epoch));
            result.train_loss.push_back(ce.loss);
            Mat d_out = Mat::Zero(out.rows(), out.cols());
            d_out.bottomRows(d_y) = ce.d_logits;
            adam.step(model.net().layers(), model.net().backward(cache, d_out));
        }
        result.epochs_run = epoch;
        const double val = segmentation_metric(model, data.validation, schedule);
        result.validation_curve.push_back(val);
        if (val > result.validation_metric) {
            result.validation_metric = val;
            result.best_epoch = epoch;
            result.model = model;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    result.test_metric = data.test.empty() ? 0.0 : segmentation_metric(result.model, data.test, schedule);
    return result;
}

// ---- feature probe --------------------------------------------------------

namespace {

/// Pixel-aligned features of images [first, first + count): for pixel p the
/// last hidden layer's activations weighted by the output rows of pixel p
/// (its image row and its K mask rows), at every probe time. Column i P + p.
Mat pixel_features(const MlpDenoiser& backbone, const JointDataset& data, std::size_t first, std::size_t count,
                   const Schedule& schedule, const std::vector<double>& times, std::uint64_t noise_seed) {
    const int P = data.P();
    const int K = data.K();
    const int d_x = backbone.d_x();
    const Mat& W = backbone.net().layers().back().W;
    const Eigen::Index H = W.cols();
    const Eigen::Index per_t = H * (1 + K);
    const auto n = static_cast<Eigen::Index>(count);
    Mat features(per_t * static_cast<Eigen::Index>(times.size()), n * P);
    Mat x(backbone.d_x(), n);
    for (Eigen::Index c = 0; c < n; ++c) x.col(c) = data[first + static_cast<std::size_t>(c)].x;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        const auto [alpha, sigma] = schedule.alpha_sigma(t);
        Mat x_t(x.rows(), n);
        for (Eigen::Index c = 0; c < n; ++c) {
            const auto index = static_cast<std::uint64_t>(first) + static_cast<std::uint64_t>(c);
            Rng rng = stream_rng(noise_seed, index * times.size() + k);
            x_t.col(c) = alpha * x.col(c) + sigma * standard_normal(rng, x.rows());
        }
        Mlp::Cache cache;
        backbone.forward_batch(x_t, std::vector<double>(static_cast<std::size_t>(n), t), &cache);
        const Mat& h = cache.act.back();
        const Eigen::Index offset = static_cast<Eigen::Index>(k) * per_t;
        for (Eigen::Index c = 0; c < n; ++c)
            for (int p = 0; p < P; ++p) {
                auto col = features.col(c * P + p);
                col.segment(offset, H) = W.row(p).transpose().cwiseProduct(h.col(c));
                for (int j = 0; j < K; ++j)
                    col.segment(offset + H * (1 + j), H) = W.row(d_x + p * K + j).transpose().cwiseProduct(h.col(c));
            }
    }
    return features;
}

struct Standardizer {
    Vec mean;
    Vec inv_scale;

    explicit Standardizer(const Mat& f) : mean(f.rowwise().mean()) {
        inv_scale = ((f.colwise() - mean).array().square().rowwise().mean()).sqrt().matrix();
        for (Eigen::Index r = 0; r < inv_scale.size(); ++r)
            inv_scale[r] = inv_scale[r] > 1e-12 ? 1.0 / inv_scale[r] : 0.0;
    }
    void apply(Mat& f) const { f = ((f.colwise() - mean).array().colwise() * inv_scale.array()).matrix(); }
};

std::vector<std::vector<int>> probe_predict(const Mlp& probe, const Mat& features, int P) {
    const Mat logits = probe.forward(features);
    std::vector<std::vector<int>> out(static_cast<std::size_t>(logits.cols() / P));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].resize(static_cast<std::size_t>(P));
        for (int p = 0; p < P; ++p) {
            Eigen::Index best = 0;
            logits.col(static_cast<Eigen::Index>(i) * P + p).maxCoeff(&best);
            out[i][static_cast<std::size_t>(p)] = static_cast<int>(best);
        }
    }
    return out;
}

}  // namespace

ProbeResult feature_probe(const MlpDenoiser& backbone, const FinetuneData& data, const Schedule& schedule,
                          const ProbeConfig& cfg) {
    if (data.train.empty()) throw std::invalid_argument("probe: labeled budget must be >= 1");
    if (cfg.hidden < 1 || cfg.batch_images < 1 || cfg.patience < 1 || cfg.max_epochs < 0)
        throw std::invalid_argument("probe: hidden, batch_images and patience must be >= 1, max_epochs >= 0");
    if (backbone.d_x() != data.train.d_x() || backbone.d_y() != data.train.d_y())
        throw std::invalid_argument("probe: backbone and dataset dimensions differ");
    const std::vector<double> times =
        cfg.times.empty() ? std::vector<double>{schedule.t_min(), 0.1, 0.25} : cfg.times;

    ProbeResult result;
    result.checksum_before = weights_checksum(backbone);
    const int P = data.train.P();
    const int K = data.train.K();

    Mat train_f = pixel_features(backbone, data.train, 0, data.train.size(), schedule, times, splitmix64(cfg.seed ^ 1));
    Mat val_f = pixel_features(backbone, data.validation, 0, data.validation.size(), schedule, times,
                               splitmix64(cfg.seed ^ 2));
    const Standardizer standardize(train_f);
    standardize.apply(train_f);
    standardize.apply(val_f);
    const int F = static_cast<int>(train_f.rows());
    result.feature_dim = F;

    Mlp net({F, cfg.hidden, K}, splitmix64(cfg.seed ^ 0x70726f6265ULL), FinalInit::Random);
    const auto train_cls = true_classes(data.train);

    result.validation_metric = metric_for(data.validation, probe_predict(net, val_f, P));
    result.validation_curve.push_back(result.validation_metric);
    result.probe = net;

    Adam adam(cfg.adam, net.layers());
    Rng rng(splitmix64(cfg.seed ^ 0x6f72646572ULL));
    const auto n = data.train.size();
    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const std::vector<std::size_t> order = shuffled(n, rng);
        for (std::size_t b0 = 0; b0 < n; b0 += static_cast<std::size_t>(cfg.batch_images)) {
            const std::size_t B = std::min(n - b0, static_cast<std::size_t>(cfg.batch_images));
            Mat fb(F, static_cast<Eigen::Index>(B) * P);
            std::vector<std::vector<int>> targets;
            for (std::size_t c = 0; c < B; ++c) {
                const auto i = static_cast<Eigen::Index>(order[b0 + c]);
                fb.middleCols(static_cast<Eigen::Index>(c) * P, P) = train_f.middleCols(i * P, P);
                for (int p = 0; p < P; ++p) targets.push_back({train_cls[order[b0 + c]][static_cast<std::size_t>(p)]});
            }
            Mlp::Cache cache;
            const Mat logits = net.forward(fb, &cache);
            const CrossEntropyResult ce = cross_entropy(logits, targets, K);
            if (!std::isfinite(ce.loss)) throw DivergenceError("probe: non-finite loss in epoch " + std::to_string(epoch));
            adam.step(net.layers(), net.backward(cache, ce.d_logits));
        }
        result.epochs_run = epoch;
        const double val = metric_for(data.validation, probe_predict(net, val_f, P));
        result.validation_curve.push_back(val);
        if (val > result.validation_metric) {
            result.validation_metric = val;
            result.best_epoch = epoch;
            result.probe = net;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    if (!data.test.empty()) {
        std::vector<std::vector<int>> pred;
        constexpr std::size_t chunk = 32;
        for (std::size_t c0 = 0; c0 < data.test.size(); c0 += chunk) {
            Mat f = pixel_features(backbone, data.test, c0, std::min(chunk, data.test.size() - c0), schedule, times,
                                   splitmix64(cfg.seed ^ 3));
            standardize.apply(f);
            for (auto& row : probe_predict(result.probe, f, P)) pred.push_back(std::move(row));
        }
        result.test_metric = metric_for(data.test, pred);
    }
    result.checksum_after = weights_checksum(backbone);
    return result;
}

// ---- comparison -----------------------------------------------------------

namespace {

FinetuneConfig finetune_from_json(const json& j) {
    StrictObject o(j, "transfer.finetune");
    FinetuneConfig c;
    c.adam = adam_from_json(o, c.adam);
    c.batch_size = o.get("batch_size", c.batch_size);
    c.patience = o.get("patience", c.patience);
    c.max_epochs = o.get("max_epochs", c.max_epochs);
    c.force_head_replacement = o.get("force_head_replacement", c.force_head_replacement);
    o.finish();
    if (c.batch_size < 1 || c.patience < 1 || c.max_epochs < 0)
        throw ConfigError("transfer.finetune: batch_size and patience must be >= 1, max_epochs >= 0");
    return c;
}

json to_json(const FinetuneConfig& c) {
    json j = to_json(c.adam);
    j["batch_size"] = c.batch_size;
    j["patience"] = c.patience;
    j["max_epochs"] = c.max_epochs;
    j["force_head_replacement"] = c.force_head_replacement;
    return j;
}

ProbeConfig probe_from_json(const json& j) {
    StrictObject o(j, "transfer.probe");
    ProbeConfig c;
    c.adam = adam_from_json(o, c.adam);
    c.times = o.get("times", c.times);
    c.hidden = o.get("hidden", c.hidden);
    c.batch_images = o.get("batch_images", c.batch_images);
    c.patience = o.get("patience", c.patience);
    c.max_epochs = o.get("max_epochs", c.max_epochs);
    o.finish();
    if (c.hidden < 1 || c.batch_images < 1 || c.patience < 1 || c.max_epochs < 0)
        throw ConfigError("transfer.probe: hidden, batch_images and patience must be >= 1, max_epochs >= 0");
    for (double t : c.times)
        if (!(t > 0.0 && t <= 1.0)) throw ConfigError("transfer.probe.times: each time must lie in (0, 1]");
    return c;
}

json to_json(const ProbeConfig& c) {
    json j = to_json(c.adam);
    j["times"] = c.times;
    j["hidden"] = c.hidden;
    j["batch_images"] = c.batch_images;
    j["patience"] = c.patience;
    j["max_epochs"] = c.max_epochs;
    return j;
}

DatasetConfig default_domain(bool shifted) {
    DatasetConfig c;
    c.kind = DatasetKind::Shapes;
    c.shapes.n_samples = shifted ? 600 : 1000;
    c.shapes.seed = shifted ? 1 : 0;
    if (shifted) {
        c.shapes.intensity_shift = 0.15;
        c.shapes.size_scale = 0.8;
    }
    return c;
}

}  // namespace

TrainConfig default_pretrain() {
    TrainConfig c;
    c.iterations = 20000;
    c.epoch_iterations = 100;
    c.patience = 10;
    return c;
}

ComparisonConfig comparison_from_json(const json& j) {
    StrictObject o(j, "transfer");
    ComparisonConfig c;
    c.domain_a = default_domain(false);
    c.domain_b = default_domain(true);
    try {
        if (o.has("schedule")) c.schedule = schedule_from_json(o.raw("schedule"));
        if (o.has("domain_a")) c.domain_a = dataset_from_json(o.raw("domain_a"));
        if (o.has("domain_b")) c.domain_b = dataset_from_json(o.raw("domain_b"));
        if (o.has("model")) c.model = model_from_json(o.raw("model"));
        if (o.has("pretrain")) c.pretrain = train_from_json(o.raw("pretrain"), c.pretrain);
        c.lambda = o.get("lambda", c.lambda);
        if (o.has("regimes")) {
            c.regimes.clear();
            for (const auto& name : o.raw("regimes").get<std::vector<std::string>>())
                c.regimes.push_back(regime_from_string(name));
        }
        if (o.has("methods")) {
            c.methods.clear();
            for (const auto& name : o.raw("methods").get<std::vector<std::string>>())
                c.methods.push_back(finetune_method_from_string(name));
        }
        c.budgets = o.get("budgets", c.budgets);
        c.seeds = o.get("seeds", c.seeds);
        c.pool_size = o.get("pool_size", c.pool_size);
        c.n_validation = o.get("n_validation", c.n_validation);
        c.partition_seed = o.get("partition_seed", c.partition_seed);
        if (o.has("finetune")) c.finetune = finetune_from_json(o.raw("finetune"));
        if (o.has("probe")) c.probe = probe_from_json(o.raw("probe"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("transfer: ") + e.what());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("transfer: ") + e.what());
    }
    o.finish();
    if (c.regimes.empty() || c.methods.empty() || c.budgets.empty() || c.seeds.empty())
        throw ConfigError("transfer: regimes, methods, budgets and seeds must be nonempty");
    for (int b : c.budgets)
        if (b < 1 || b > c.pool_size) throw ConfigError("transfer: every budget must lie in [1, pool_size]");
    if (c.lambda < 0.0) throw ConfigError("transfer: lambda must be >= 0");
    return c;
}

json to_json(const ComparisonConfig& c) {
    json regimes = json::array();
    for (auto r : c.regimes) regimes.push_back(to_string(r));
    json methods = json::array();
    for (auto m : c.methods) methods.push_back(to_string(m));
    return {{"schedule", to_json(c.schedule)},
            {"domain_a", to_json(c.domain_a)},
            {"domain_b", to_json(c.domain_b)},
            {"model", to_json(c.model)},
            {"pretrain", to_json(c.pretrain)},
            {"lambda", c.lambda},
            {"regimes", regimes},
            {"methods", methods},
            {"budgets", c.budgets},
            {"seeds", c.seeds},
            {"pool_size", c.pool_size},
            {"n_validation", c.n_validation},
            {"partition_seed", c.partition_seed},
            {"finetune", to_json(c.finetune)},
            {"probe", to_json(c.probe)}};
}

std::vector<CellSummary> ExperimentReport::summary() const {
    std::vector<CellSummary> out;
    std::vector<std::vector<double>> values;
    for (const auto& c : cells) {
        auto it = std::find_if(out.begin(), out.end(), [&](const CellSummary& s) {
            return s.regime == c.regime && s.method == c.method && s.budget == c.budget;
        });
        if (it == out.end()) {
            out.push_back({c.regime, c.method, c.budget});
            values.emplace_back();
            it = out.end() - 1;
        }
        auto& v = values[static_cast<std::size_t>(it - out.begin())];
        if (c.ok) {
            v.push_back(c.metric);
        } else {
            ++it->failed;
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& v = values[i];
        out[i].n = static_cast<int>(v.size());
        if (v.empty()) continue;
        out[i].mean = compensated_sum(v) / static_cast<double>(v.size());
        std::vector<double> sq;
        for (double x : v) sq.push_back((x - out[i].mean) * (x - out[i].mean));
        out[i].std = std::sqrt(compensated_sum(sq) / static_cast<double>(v.size()));
    }
    return out;
}

CsvTable ExperimentReport::csv() const {
    CsvTable table({"regime", "method", "budget", "seed", "metric", "validation", "zero_shot", "best_epoch",
                    "status", "error"});
    for (const auto& c : cells) {
        table.add_row({to_string(c.regime), to_string(c.method), std::to_string(c.budget), std::to_string(c.seed),
                       c.ok ? format_number(c.metric) : "", c.ok ? format_number(c.validation) : "",
                       c.ok ? format_number(c.zero_shot) : "", c.ok ? std::to_string(c.best_epoch) : "",
                       c.ok ? "ok" : "failed", c.error});
    }
    return table;
}

json ExperimentReport::to_json() const {
    json cells_json = json::array();
    for (const auto& s : summary()) {
        json values = json::array();
        json seeds = json::array();
        for (const auto& c : cells) {
            if (c.regime != s.regime || c.method != s.method || c.budget != s.budget || !c.ok) continue;
            values.push_back(c.metric);
            seeds.push_back(c.seed);
        }
        cells_json.push_back({{"regime", hdm::to_string(s.regime)},
                              {"method", hdm::to_string(s.method)},
                              {"budget", s.budget},
                              {"n", s.n},
                              {"failed", s.failed},
                              {"mean", s.n ? json(s.mean) : json(nullptr)},
                              {"std", s.n ? json(s.std) : json(nullptr)},
                              {"seeds", seeds},
                              {"values", values}});
    }
    return {{"format", "hdm-experiment-report"}, {"version", 1}, {"cells", cells_json}};
}

ExperimentReport run_comparison(const ComparisonConfig& cfg, std::map<RegimeKind, MlpDenoiser> pretrained,
                                const Progress& progress) {
    auto say = [&](const std::string& msg) {
        if (progress) progress(msg);
    };
    const Schedule schedule(cfg.schedule);
    const JointDataset domain_a = build_dataset(cfg.domain_a);
    const JointDataset domain_b = build_dataset(cfg.domain_b);
    if (domain_a.d_x() != domain_b.d_x()) throw ConfigError("transfer: domains A and B differ in image dimension");
    MlpArchitecture arch;
    arch.d_x = domain_a.d_x();
    arch.d_y = domain_a.d_y();
    arch.hidden = cfg.model.hidden;
    arch.time_frequencies = cfg.model.time_frequencies;

    for (RegimeKind kind : cfg.regimes) {
        if (pretrained.count(kind)) {
            if (pretrained.at(kind).d_x() != arch.d_x)
                throw ConfigError("transfer: supplied '" + to_string(kind) + "' model does not match domain A");
            continue;
        }
        say("pretraining regime " + to_string(kind));
        PretrainOutput out = pretrain_regime({kind, cfg.lambda}, arch, cfg.model.init_seed, domain_a, schedule,
                                             cfg.pretrain);
        pretrained.emplace(kind, std::move(out.model));
    }

    ExperimentReport report;
    for (RegimeKind r : cfg.regimes)
        for (FinetuneMethod m : cfg.methods)
            for (int b : cfg.budgets)
                for (std::uint64_t s : cfg.seeds) {
                    CellResult cell;
                    cell.regime = r;
                    cell.method = m;
                    cell.budget = b;
                    cell.seed = s;
                    report.cells.push_back(std::move(cell));
                }

    say("fine-tuning " + std::to_string(report.cells.size()) + " cells");
    parallel_for(report.cells.size(), cfg.jobs, [&](std::size_t i) {
        CellResult& cell = report.cells[i];
        try {
            const FinetuneData data = split_finetune_data(domain_b, cell.budget, cfg.pool_size, cfg.n_validation,
                                                          cfg.partition_seed, cell.seed);
            const MlpDenoiser& model = pretrained.at(cell.regime);
            if (cell.method == FinetuneMethod::Vanilla) {
                FinetuneConfig fc = cfg.finetune;
                fc.seed = cell.seed;
                const FinetuneResult r = vanilla_finetune(model, data, schedule, fc);
                cell.metric = r.test_metric;
                cell.validation = r.validation_metric;
                cell.zero_shot = r.zero_shot_validation;
                cell.best_epoch = r.best_epoch;
            } else {
                ProbeConfig pc = cfg.probe;
                pc.seed = cell.seed;
                const ProbeResult r = feature_probe(model, data, schedule, pc);
                if (r.checksum_before != r.checksum_after) throw std::logic_error("probe modified the backbone");
                cell.metric = r.test_metric;
                cell.validation = r.validation_metric;
                cell.best_epoch = r.best_epoch;
            }
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.ok = false;
            cell.error = e.what();
        }
    });
    for (const auto& c : report.cells)
        say(to_string(c.regime) + "/" + to_string(c.method) + " budget " + std::to_string(c.budget) + " seed " +
            std::to_string(c.seed) + ": " + (c.ok ? format_number(c.metric) : "failed: " + c.error));
    return report;
}

}  // namespace hdm
