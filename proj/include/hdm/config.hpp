#pragma once

#include "hdm/dataset.hpp"
#include "hdm/mlp.hpp"
#include "hdm/sampler.hpp"
#include "hdm/schedule.hpp"
#include "hdm/training.hpp"

#include <json.hpp>

#include <set>
#include <string>

namespace hdm {

using json = nlohmann::json;

/// Reads keys from one JSON object and rejects any key it was not asked for.
class StrictObject {
public:
    StrictObject(const json& object, std::string where);

    bool has(const std::string& key) const;
    const json& raw(const std::string& key);

    template <typename T>
    T get(const std::string& key, const T& fallback) {
        if (!has(key)) {
            seen_.insert(key);
            return fallback;
        }
        return convert<T>(raw(key), key);
    }

    template <typename T>
    T require(const std::string& key) {
        if (!has(key)) throw ConfigError(where_ + ": missing required key '" + key + "'");
        return convert<T>(raw(key), key);
    }

    /// Throws ConfigError naming every unread key.
    void finish() const;
    const std::string& where() const { return where_; }

private:
    template <typename T>
    T convert(const json& value, const std::string& key) const {
        try {
            return value.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    const json& object_;
    std::string where_;
    std::set<std::string> seen_;
};

ScheduleParams schedule_from_json(const json& j);
json to_json(const ScheduleParams& p);

enum class DatasetKind { Mixture, Shapes, TwoPoint, SinglePoint };

struct DatasetConfig {
    DatasetKind kind = DatasetKind::Mixture;
    MixtureParams mixture;
    ShapesParams shapes;
    std::vector<double> point;  // single-point dataset
    int point_class = 0;
    int point_K = 2;
};

DatasetConfig dataset_from_json(const json& j);
json to_json(const DatasetConfig& c);
JointDataset build_dataset(const DatasetConfig& c);

MixtureParams mixture_from_json(StrictObject& o, MixtureParams base = {});
ShapesParams shapes_from_json(StrictObject& o, ShapesParams base = {});
json to_json(const MixtureParams& p);
json to_json(const ShapesParams& p);

/// Architecture without the data dimensions, which come from the dataset.
struct ModelConfig {
    std::vector<int> hidden = {128, 128, 128};
    int time_frequencies = 16;
    std::uint64_t init_seed = 0;
};
ModelConfig model_from_json(const json& j);
json to_json(const ModelConfig& c);
json to_json(const MlpArchitecture& a);
MlpArchitecture architecture_from_json(const json& j);

HybridLossConfig loss_from_json(const json& j);
json to_json(const HybridLossConfig& c);

AdamConfig adam_from_json(StrictObject& o, AdamConfig base);
json to_json(const AdamConfig& c);
/// Keys absent from `j` keep their value in `base`.
TrainConfig train_from_json(const json& j, TrainConfig base = {});
json to_json(const TrainConfig& c);

SamplerConfig sampler_from_json(const json& j);
json to_json(const SamplerConfig& c);

}  // namespace hdm
