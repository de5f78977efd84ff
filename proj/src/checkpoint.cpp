#include "hdm/checkpoint.hpp"

#include "hdm/csv.hpp"

#include <bit>
#include <cstring>
#include <sstream>

namespace hdm {

static_assert(std::endian::native == std::endian::little, "weights blob assumes a little-endian host");

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::filesystem::path blob_path_for(const std::filesystem::path& manifest_path) {
    std::filesystem::path p = manifest_path;
    p.replace_extension(".weights.bin");
    return p;
}

std::string encode_weights(const LayerStack& layers) {
    const std::vector<double> values = flatten(layers);
    std::string bytes(values.size() * sizeof(double), '\0');
    std::memcpy(bytes.data(), values.data(), bytes.size());
    return bytes;
}

namespace {
std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex;
    s.width(16);
    s.fill('0');
    s << v;
    return s.str();
}
}  // namespace

void save_checkpoint(const std::filesystem::path& manifest_path, const MlpDenoiser& model, const json& info) {
    const std::string blob = encode_weights(model.net().layers());
    const auto blob_path = blob_path_for(manifest_path);
    json manifest = info.is_object() ? info : json::object();
    manifest["format"] = "hdm-checkpoint";
    manifest["version"] = 1;
    manifest["architecture"] = to_json(model.architecture());
    manifest["weights"] = {{"file", blob_path.filename().string()},
                           {"count", parameter_count(model.net().layers())},
                           {"bytes", blob.size()},
                           {"dtype", "float64-le"},
                           {"layout", "per layer: W row-major (out x in), then b"},
                           {"fnv1a64", hex64(fnv1a64(blob))}};
    write_file_atomic(blob_path, blob);
    write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest_path) {
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw ConfigError("checkpoint '" + manifest_path.string() + "': malformed manifest: " + e.what());
    }
    if (manifest.value("format", "") != "hdm-checkpoint")
        throw ConfigError("checkpoint '" + manifest_path.string() + "': not an hdm checkpoint manifest");
    try {
        const MlpArchitecture arch = architecture_from_json(manifest.at("architecture"));
        const json& weights = manifest.at("weights");
        const auto blob_path = manifest_path.parent_path() / weights.at("file").get<std::string>();
        const std::string blob = read_file(blob_path);
        const auto count = weights.at("count").get<std::size_t>();
        if (blob.size() != weights.at("bytes").get<std::size_t>() || blob.size() != count * sizeof(double))
            throw ConfigError("checkpoint integrity error: '" + blob_path.string() + "' has " +
                              std::to_string(blob.size()) + " bytes, expected " + std::to_string(count * sizeof(double)));
        if (hex64(fnv1a64(blob)) != weights.at("fnv1a64").get<std::string>())
            throw ConfigError("checkpoint integrity error: digest mismatch for '" + blob_path.string() + "'");
        MlpDenoiser model(arch, 0, FinalInit::Zero);
        if (parameter_count(model.net().layers()) != count)
            throw ConfigError("checkpoint integrity error: parameter count does not match the architecture");
        std::vector<double> values(count);
        std::memcpy(values.data(), blob.data(), blob.size());
        unflatten(values, model.net().layers());
        return {std::move(model), std::move(manifest)};
    } catch (const json::exception& e) {
        throw ConfigError("checkpoint '" + manifest_path.string() + "': " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError("checkpoint '" + manifest_path.string() + "': " + e.what());
    }
}

}  // namespace hdm
