#include "hdm/config.hpp"

#include <cmath>
#include <numbers>

namespace hdm {

StrictObject::StrictObject(const json& object, std::string where) : object_(object), where_(std::move(where)) {
    if (!object_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
}

bool StrictObject::has(const std::string& key) const { return object_.contains(key); }

const json& StrictObject::raw(const std::string& key) {
    seen_.insert(key);
    return object_.at(key);
}

void StrictObject::finish() const {
    std::string unknown;
    for (const auto& [key, value] : object_.items()) {
        if (!seen_.count(key)) unknown += (unknown.empty() ? "'" : ", '") + key + "'";
    }
    if (!unknown.empty()) throw ConfigError(where_ + ": unknown key(s) " + unknown);
}

ScheduleParams schedule_from_json(const json& j) {
    StrictObject o(j, "schedule");
    ScheduleParams p;
    p.kind = schedule_kind_from_string(o.get<std::string>("kind", to_string(p.kind)));
    p.beta_min = o.get("beta_min", p.beta_min);
    p.beta_max = o.get("beta_max", p.beta_max);
    p.T_discrete = o.get("T_discrete", p.T_discrete);
    p.beta_start = o.get("beta_start", p.beta_start);
    p.beta_end = o.get("beta_end", p.beta_end);
    p.t_min = o.get("t_min", p.t_min);
    p.t_max = o.get("t_max", p.t_max);
    o.finish();
    try {
        Schedule check(p);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return p;
}

json to_json(const ScheduleParams& p) {
    return {{"kind", to_string(p.kind)}, {"beta_min", p.beta_min}, {"beta_max", p.beta_max},
            {"T_discrete", p.T_discrete}, {"beta_start", p.beta_start}, {"beta_end", p.beta_end},
            {"t_min", p.t_min}, {"t_max", p.t_max}};
}

MixtureParams mixture_from_json(StrictObject& o, MixtureParams p) {
    p.n_components = o.get("n_components", p.n_components);
    p.n_samples = o.get("n_samples", p.n_samples);
    p.d_x = o.get("d_x", p.d_x);
    p.K = o.get("K", p.K);
    p.seed = o.get("seed", p.seed);
    if (o.has("shift")) {
        const json& s = o.raw("shift");
        if (s.is_number()) {
            p.shift.assign(static_cast<std::size_t>(p.d_x), s.get<double>());
        } else {
            p.shift = s.get<std::vector<double>>();
        }
    }
    if (o.has("rotation_deg")) p.rotation = o.raw("rotation_deg").get<double>() * std::numbers::pi / 180.0;
    p.radius = o.get("radius", p.radius);
    p.component_std = o.get("component_std", p.component_std);
    return p;
}

json to_json(const MixtureParams& p) {
    return {{"n_components", p.n_components}, {"n_samples", p.n_samples}, {"d_x", p.d_x}, {"K", p.K},
            {"seed", p.seed}, {"shift", p.shift}, {"rotation_deg", p.rotation * 180.0 / std::numbers::pi},
            {"radius", p.radius}, {"component_std", p.component_std}};
}

ShapesParams shapes_from_json(StrictObject& o, ShapesParams p) {
    p.n_samples = o.get("n_samples", p.n_samples);
    p.side = o.get("side", p.side);
    p.K = o.get("K", p.K);
    p.seed = o.get("seed", p.seed);
    p.max_shapes = o.get("max_shapes", p.max_shapes);
    p.min_size = o.get("min_size", p.min_size);
    p.max_size = o.get("max_size", p.max_size);
    p.size_scale = o.get("size_scale", p.size_scale);
    p.intensity_shift = o.get("intensity_shift", p.intensity_shift);
    p.texture = o.get("texture", p.texture);
    return p;
}

json to_json(const ShapesParams& p) {
    return {{"n_samples", p.n_samples}, {"side", p.side}, {"K", p.K}, {"seed", p.seed},
            {"max_shapes", p.max_shapes}, {"min_size", p.min_size}, {"max_size", p.max_size},
            {"size_scale", p.size_scale}, {"intensity_shift", p.intensity_shift}, {"texture", p.texture}};
}

DatasetConfig dataset_from_json(const json& j) {
    StrictObject o(j, "dataset");
    DatasetConfig c;
    const auto kind = o.get<std::string>("kind", "mixture");
    if (kind == "mixture") {
        c.kind = DatasetKind::Mixture;
        c.mixture = mixture_from_json(o);
    } else if (kind == "shapes") {
        c.kind = DatasetKind::Shapes;
        c.shapes = shapes_from_json(o);
    } else if (kind == "two-point") {
        c.kind = DatasetKind::TwoPoint;
    } else if (kind == "single-point") {
        c.kind = DatasetKind::SinglePoint;
        c.point = o.get<std::vector<double>>("point", {0.5});
        c.point_class = o.get("class", 1);
        c.point_K = o.get("K", 2);
    } else {
        throw ConfigError("dataset: unknown kind '" + kind + "'");
    }
    o.finish();
    return c;
}

json to_json(const DatasetConfig& c) {
    switch (c.kind) {
        case DatasetKind::Mixture: {
            json j = to_json(c.mixture);
            j["kind"] = "mixture";
            return j;
        }
        case DatasetKind::Shapes: {
            json j = to_json(c.shapes);
            j["kind"] = "shapes";
            return j;
        }
        case DatasetKind::TwoPoint: return {{"kind", "two-point"}};
        case DatasetKind::SinglePoint:
            return {{"kind", "single-point"}, {"point", c.point}, {"class", c.point_class}, {"K", c.point_K}};
    }
    return {};
}

JointDataset build_dataset(const DatasetConfig& c) {
    try {
        switch (c.kind) {
            case DatasetKind::Mixture: return make_gaussian_mixture(c.mixture);
            case DatasetKind::Shapes: return make_shapes(c.shapes);
            case DatasetKind::TwoPoint: return make_two_point();
            case DatasetKind::SinglePoint: {
                Vec p = Eigen::Map<const Vec>(c.point.data(), static_cast<Eigen::Index>(c.point.size()));
                return make_atoms({p}, {c.point_class}, c.point_K, "single-point");
            }
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("dataset: ") + e.what());
    } catch (const std::out_of_range& e) {
        throw ConfigError(std::string("dataset: ") + e.what());
    }
    throw ConfigError("dataset: unknown kind");
}

ModelConfig model_from_json(const json& j) {
    StrictObject o(j, "model");
    ModelConfig c;
    c.hidden = o.get("hidden", c.hidden);
    c.time_frequencies = o.get("time_frequencies", c.time_frequencies);
    c.init_seed = o.get("init_seed", c.init_seed);
    o.finish();
    if (c.hidden.empty() || c.time_frequencies < 1) throw ConfigError("model: invalid architecture");
    for (int h : c.hidden)
        if (h < 1) throw ConfigError("model: hidden widths must be positive");
    return c;
}

json to_json(const ModelConfig& c) {
    return {{"hidden", c.hidden}, {"time_frequencies", c.time_frequencies}, {"init_seed", c.init_seed}};
}

json to_json(const MlpArchitecture& a) {
    return {{"d_x", a.d_x}, {"d_y", a.d_y}, {"hidden", a.hidden}, {"time_frequencies", a.time_frequencies},
            {"activation", "silu"}, {"output", "x0_hat then y0_hat, linear"}};
}

MlpArchitecture architecture_from_json(const json& j) {
    StrictObject o(j, "architecture");
    MlpArchitecture a;
    a.d_x = o.require<int>("d_x");
    a.d_y = o.require<int>("d_y");
    a.hidden = o.require<std::vector<int>>("hidden");
    a.time_frequencies = o.require<int>("time_frequencies");
    if (o.get<std::string>("activation", "silu") != "silu") throw ConfigError("architecture: only silu is supported");
    o.get<std::string>("output", "");
    o.finish();
    return a;
}

HybridLossConfig loss_from_json(const json& j) {
    StrictObject o(j, "loss");
    HybridLossConfig c;
    c.lambda = o.get("lambda", c.lambda);
    c.snr_weighting = o.get("snr_weighting", c.snr_weighting);
    c.image_weight = o.get("image_weight", c.image_weight);
    o.finish();
    if (c.lambda < 0.0) throw ConfigError("loss: lambda must be >= 0");
    return c;
}

json to_json(const HybridLossConfig& c) {
    return {{"lambda", c.lambda}, {"snr_weighting", c.snr_weighting}, {"image_weight", c.image_weight}};
}

AdamConfig adam_from_json(StrictObject& o, AdamConfig c) {
    c.learning_rate = o.get("learning_rate", c.learning_rate);
    c.beta1 = o.get("beta1", c.beta1);
    c.beta2 = o.get("beta2", c.beta2);
    c.epsilon = o.get("epsilon", c.epsilon);
    c.weight_decay = o.get("weight_decay", c.weight_decay);
    c.warmup_steps = o.get("warmup_steps", c.warmup_steps);
    if (!(c.learning_rate > 0.0)) throw ConfigError(o.where() + ": learning_rate must be > 0");
    return c;
}

json to_json(const AdamConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon},
            {"weight_decay", c.weight_decay}, {"warmup_steps", c.warmup_steps}};
}

TrainConfig train_from_json(const json& j, TrainConfig base) {
    StrictObject o(j, "train");
    TrainConfig c = base;
    c.adam = adam_from_json(o, c.adam);
    c.batch_size = o.get("batch_size", c.batch_size);
    c.iterations = o.get("iterations", c.iterations);
    c.patience = o.get("patience", c.patience);
    c.epoch_iterations = o.get("epoch_iterations", c.epoch_iterations);
    c.validation_fraction = o.get("validation_fraction", c.validation_fraction);
    c.validation_draws = o.get("validation_draws", c.validation_draws);
    c.seed = o.get("seed", c.seed);
    const auto ts =
        o.get<std::string>("time_sampling", c.time_sampling == TimeSampling::Uniform ? "uniform" : "clean-t-min");
    if (ts == "uniform") {
        c.time_sampling = TimeSampling::Uniform;
    } else if (ts == "clean-t-min") {
        c.time_sampling = TimeSampling::CleanAtTMin;
    } else {
        throw ConfigError("train: time_sampling must be 'uniform' or 'clean-t-min'");
    }
    o.finish();
    if (c.patience < 1) throw ConfigError("train: patience must be >= 1");
    if (c.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (c.iterations < 0) throw ConfigError("train: iterations must be >= 0");
    return c;
}

json to_json(const TrainConfig& c) {
    json j = to_json(c.adam);
    j["batch_size"] = c.batch_size;
    j["iterations"] = c.iterations;
    j["patience"] = c.patience;
    j["epoch_iterations"] = c.epoch_iterations;
    j["validation_fraction"] = c.validation_fraction;
    j["validation_draws"] = c.validation_draws;
    j["seed"] = c.seed;
    j["time_sampling"] = c.time_sampling == TimeSampling::Uniform ? "uniform" : "clean-t-min";
    return j;
}

SamplerConfig sampler_from_json(const json& j) {
    StrictObject o(j, "sampler");
    SamplerConfig c;
    try {
        c.method = sampler_method_from_string(o.get<std::string>("method", to_string(c.method)));
        c.grid = time_grid_from_string(o.get<std::string>("grid", to_string(c.grid)));
        c.y_init = YInit::parse(o.get<std::string>("y_init", c.y_init.str()));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("sampler: ") + e.what());
    }
    c.steps = o.get("steps", c.steps);
    c.t_start = o.get("t_start", c.t_start);
    c.t_end = o.get("t_end", c.t_end);
    c.hybrid = o.get("hybrid", c.hybrid);
    c.final_denoise = o.get("final_denoise", c.final_denoise);
    c.record_trajectories = o.get("record_trajectories", c.record_trajectories);
    c.seed = o.get("seed", c.seed);
    o.finish();
    if (c.steps < 1) throw ConfigError("sampler: steps must be >= 1");
    return c;
}

json to_json(const SamplerConfig& c) {
    return {{"method", to_string(c.method)}, {"steps", c.steps}, {"t_start", c.t_start}, {"t_end", c.t_end},
            {"grid", to_string(c.grid)}, {"y_init", c.y_init.str()}, {"hybrid", c.hybrid},
            {"final_denoise", c.final_denoise}, {"record_trajectories", c.record_trajectories}, {"seed", c.seed}};
}

}  // namespace hdm
